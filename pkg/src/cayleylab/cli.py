"""Command-line front end: walk, compression, verify, table, cache.

Configuration precedence: defaults < config file (--config JSON) < CAYLEYLAB_*
environment variables < explicit flags. All outputs are deterministic for a
fixed config and seed (hex-float cache, repr-float CSV, sorted JSON keys).

Exit codes: 0 success, 1 check violation, 2 usage/config error, 3 budget
truncation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .compression import (CocycleConfig, cocycle_weights, compression_bound_predicted,
                          compression_profile)
from .errors import BudgetError, CayleyLabError, ConfigError
from .exponents import fit_exponents
from .groups import ALL_FAMILY_STRINGS, parse_group
from .balls import compute_ball
from .observables import ObservableSeries, write_observables_csv
from .verify import DEFAULT_BUDGETS, ALL_CHECKS, FamilyBudget, run_verify
from .walks import cache_load, cache_store, sample_speed, walk_sequence

ENV_PREFIX = "CAYLEYLAB_"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_TRUNCATED = 3


@dataclass
class RunConfig:
    group: str = "Z^2"
    n_max: int = 64
    radius_max: int = 0            # 0: derived from n_max / k_max
    epsilon: float = 0.1
    n_terms: int = -1              # -1: derived as 4 * k_max^2
    k_max: int = 32
    memory_budget: int = 4 << 30
    support_budget: int = 300_000_000
    seed: int = 0
    outdir: str = "out"
    mode: str = "exact"            # exact | mc-speed | rational-oracle
    checks: str = ""               # comma-separated selection; empty = all
    laziness: float = 0.5
    mc_trials: int = 10_000

    def validate(self) -> None:
        numeric_positive = ("n_max", "epsilon", "k_max", "memory_budget",
                            "support_budget", "mc_trials")
        for name in numeric_positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_terms != -1 and self.n_terms < 1:
            raise ConfigError("n_terms must be >= 1 (or -1 to derive it)")
        if self.radius_max < 0 or self.seed < 0:
            raise ConfigError("radius_max and seed must be >= 0")
        if self.mode not in ("exact", "mc-speed", "rational-oracle"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0 < self.laziness < 1:
            raise ConfigError("laziness must lie in (0, 1)")
        parse_group(self.group)

    def check_selection(self):
        if not self.checks:
            return ALL_CHECKS
        names = tuple(s.strip() for s in self.checks.split(",") if s.strip())
        for name in names:
            if name not in ALL_CHECKS:
                raise ConfigError(f"unknown check {name!r}; known: {', '.join(ALL_CHECKS)}")
        return names


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        env = os.environ.get(ENV_PREFIX + f.name.upper())
        if env is not None:
            caster = type(getattr(cfg, f.name))
            setattr(cfg, f.name, caster(env))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    cfg.validate()
    return cfg


def _config_key(cfg: RunConfig, extra: str = "") -> str:
    payload = json.dumps({"group": cfg.group, "n_max": cfg.n_max, "mode": cfg.mode,
                          "laziness": cfg.laziness, "extra": extra,
                          "version": __version__}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _cache_path(cfg: RunConfig) -> Path:
    safe = cfg.group.replace("^", "").replace(":", "")
    cache_dir = Path(cfg.outdir) / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    return cache_dir / f"{safe}_n{cfg.n_max}_{cfg.mode}_{_config_key(cfg)}.jsonl"


class _CacheLock:
    """Best-effort exclusive lock so concurrent CLI runs do not interleave writes."""

    def __init__(self, path: Path):
        self.path = path.with_suffix(".lock")

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"cache is locked by another writer: {self.path}")
        return self

    def __exit__(self, *exc):
        os.close(self.fd)
        self.path.unlink(missing_ok=True)


# --------------------------------------------------------------------------
# walk
# --------------------------------------------------------------------------
def cmd_walk(cfg: RunConfig) -> int:
    spec = parse_group(cfg.group)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cache_file = _cache_path(cfg)
    trace = None
    if cache_file.exists():
        try:
            trace = cache_load(cache_file, spec)
            print(f"cache hit: {cache_file}")
        except CayleyLabError as exc:
            print(f"cache miss ({exc}); recomputing")
    if trace is None:
        mode = "rational" if cfg.mode == "rational-oracle" else "float"
        trace = walk_sequence(spec, cfg.n_max // 2, mode=mode,
                              support_budget=cfg.support_budget,
                              profiles=cfg.mode != "mc-speed")
        with _CacheLock(cache_file):
            cache_store(trace, cache_file)
    series = ObservableSeries.from_trace(trace)
    keep = cfg.n_max + 1
    series.n = series.n[:keep]
    series.return_prob = series.return_prob[:keep]
    series.entropy = series.entropy[:keep]
    series.speed = series.speed[:keep]
    series.grad_norm_sq = series.grad_norm_sq[:keep]
    series.source = series.source[:keep]
    if cfg.mode == "mc-speed":
        mc = np.full(keep, np.nan)
        err = np.full(keep, np.nan)
        for n in range(1, keep):
            mc[n], err[n] = sample_speed(spec, n, cfg.mc_trials, cfg.seed + n,
                                         laziness=cfg.laziness)
        mc[0], err[0] = 0.0, 0.0
        series.speed = mc
        series.speed_stderr = err
        series.source = ["mc"] * keep
    write_observables_csv(series, outdir / "observables.csv")
    print(f"wrote {outdir / 'observables.csv'} ({keep} rows)")
    if trace.truncated:
        print(f"trace truncated at step {trace.last_step} (budget)")
        return EXIT_TRUNCATED
    return EXIT_OK


# --------------------------------------------------------------------------
# compression
# --------------------------------------------------------------------------
def cmd_compression(cfg: RunConfig) -> int:
    spec = parse_group(cfg.group)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    k_max = cfg.k_max
    n_terms = cfg.n_terms if cfg.n_terms != -1 else 4 * k_max * k_max
    need = 2 * (2 * n_terms) + 1
    cocycle_cfg = CocycleConfig(cfg.epsilon, n_terms)

    if spec.rank == 1 and spec.family.value == "free_abelian":
        tracked = [(0,), (1,), (-1,)]
        tracked += [(k,) for k in range(2, k_max + 1)]
        tracked += [(-k,) for k in range(2, k_max + 1)]
        trace = walk_sequence(spec, 2 * n_terms, retain="none", profiles=False,
                              track_atoms=tracked, support_budget=cfg.support_budget)
    else:
        trace = walk_sequence(spec, 2 * n_terms, retain="all",
                              support_budget=cfg.support_budget)
    if trace.last_step < need:
        print(f"insufficient trace: compression with n_terms={n_terms} needs "
              f"{need} steps, trace reached {trace.last_step}")
        return EXIT_TRUNCATED
    radius = cfg.radius_max if cfg.radius_max else k_max
    ball = compute_ball(spec, radius, cfg.memory_budget)
    profile = cocycle_weights(trace, cocycle_cfg)
    estimate = compression_profile(profile, trace, ball, k_max, seed=cfg.seed)
    gamma = fit_exponents(-np.log(trace.returns()),
                          (max(1, trace.last_step // 2), trace.last_step)).central
    gamma = min(max(gamma, 0.0), 1.0)
    estimate.predicted = {
        "gamma_fit": gamma,
        "general": compression_bound_predicted(gamma, "general"),
        "od": compression_bound_predicted(gamma, "od"),
    }
    with open(outdir / "compression.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["k", "rho_minus", "n_sphere_points",
                                                "sampled"])
        writer.writeheader()
        for row in estimate.csv_rows():
            writer.writerow(row)
    report = {
        "schema_version": 1,
        "group": cfg.group,
        "epsilon": cfg.epsilon,
        "n_terms": n_terms,
        "k_max": k_max,
        "fit_window": list(estimate.fit_window),
        "slope": estimate.slope,
        "predicted": estimate.predicted,
        "sampled_any": bool(estimate.sampled.any()),
    }
    (outdir / "compression.json").write_text(json.dumps(report, sort_keys=True,
                                                        indent=2) + "\n")
    print(f"slope {estimate.slope:.4f} over k in {estimate.fit_window}; "
          f"wrote {outdir / 'compression.json'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------
def _budget_list(cfg: RunConfig, families: list[str] | None) -> tuple:
    if not families:
        return DEFAULT_BUDGETS
    chosen = []
    defaults = {b.group: b for b in DEFAULT_BUDGETS}
    for name in families:
        if name in defaults:
            chosen.append(defaults[name])
        else:
            parse_group(name)
            chosen.append(FamilyBudget(name, min(cfg.n_max, 32)))
    return tuple(chosen)


def cmd_verify(cfg: RunConfig, families: list[str] | None = None) -> int:
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    selection = cfg.check_selection()
    report = run_verify(_budget_list(cfg, families), selection, cfg.seed,
                        cfg.support_budget)
    report["config"] = {"seed": cfg.seed, "checks": list(selection),
                        "version": __version__}
    path = outdir / "verify_report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    for fam, fam_report in report["families"].items():
        safe = fam.replace("^", "").replace(":", "")
        for check in fam_report["checks"]:
            print(f"[{fam}] {check['name']}: {check['verdict']}"
                  + (f" (worst {check['worst_margin']:.3e} at {check['worst_at']})"
                     if check["worst_margin"] is not None else ""))
    print(f"wrote {path}: {report['violations']} violations, "
          f"{report['warnings']} warnings")
    return EXIT_VIOLATION if report["violations"] else EXIT_OK


# --------------------------------------------------------------------------
# table
# --------------------------------------------------------------------------
TABLE_ROWS = {
    "A": {"groups": ["Z^2", "heisenberg"], "beta": 0.5, "gamma": 0.0,
          "label": "polynomial growth"},
    "B": {"groups": ["lamplighter:2"], "beta": 0.5, "gamma": 1.0 / 3.0,
          "label": "finite lamps over Z"},
    "C": {"groups": ["wreathZZ"], "beta": 0.75, "gamma": 1.0 / 3.0,
          "label": "Z-valued lamps over Z"},
}
TABLE_SLACK = 0.15


def cmd_table(cfg: RunConfig, rows: list[str] | None = None) -> int:
    from .verify import family_fits, ball_sizes_from_trace

    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    wanted = rows or list(TABLE_ROWS)
    defaults = {b.group: b for b in DEFAULT_BUDGETS}
    out_rows = []
    for row in wanted:
        if row not in TABLE_ROWS:
            print(f"row {row}: not implemented (known rows: {', '.join(TABLE_ROWS)})")
            continue
        info = TABLE_ROWS[row]
        for group in info["groups"]:
            budget = defaults[group]
            spec = parse_group(group)
            trace = walk_sequence(spec, budget.n_param, retain="none",
                                  support_budget=cfg.support_budget)
            fits = family_fits(trace, ball_sizes_from_trace(trace), budget.n_budget)
            for expo in ("beta", "gamma"):
                target = info[expo]
                fitted = fits[expo]
                diff = abs(fitted - target)
                out_rows.append({
                    "row": row, "group": group, "exponent": expo,
                    "target": target, "fitted": round(fitted, 6),
                    "abs_diff": round(diff, 6),
                    "within_slack": bool(diff <= TABLE_SLACK),
                    "note": "asymptotic target, finite-n proxy",
                })
    report = {"schema_version": 1, "slack": TABLE_SLACK, "rows": out_rows}
    path = outdir / "table_report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    for r in out_rows:
        flag = "ok" if r["within_slack"] else "off-target"
        print(f"row {r['row']} {r['group']:14s} {r['exponent']}: target {r['target']:.3f} "
              f"fitted {r['fitted']:.3f} |diff| {r['abs_diff']:.3f} [{flag}]")
    print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# cache
# --------------------------------------------------------------------------
def cmd_cache(cfg: RunConfig, action: str) -> int:
    cache_dir = Path(cfg.outdir) / "cache"
    if action == "list":
        if not cache_dir.exists():
            print("no cache directory")
            return EXIT_OK
        for path in sorted(cache_dir.glob("*.jsonl")):
            print(f"{path.name}\t{path.stat().st_size} bytes")
        return EXIT_OK
    if action == "clear":
        if cache_dir.exists():
            for path in sorted(cache_dir.glob("*.jsonl")):
                path.unlink()
            print("cache cleared")
        return EXIT_OK
    raise ConfigError(f"unknown cache action {action!r}")


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------
def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--group", help="Z^d | heisenberg | free:k | lamplighter:m | wreathZZ")
    parser.add_argument("--n-max", dest="n_max", type=int)
    parser.add_argument("--radius-max", dest="radius_max", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--n-terms", dest="n_terms", type=int)
    parser.add_argument("--k-max", dest="k_max", type=int)
    parser.add_argument("--memory-budget", dest="memory_budget", type=int)
    parser.add_argument("--support-budget", dest="support_budget", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--outdir")
    parser.add_argument("--mode", choices=["exact", "mc-speed", "rational-oracle"])
    parser.add_argument("--checks", help="comma-separated check selection")
    parser.add_argument("--laziness", type=float)
    parser.add_argument("--mc-trials", dest="mc_trials", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cayleylab",
                                     description="lazy random walk laboratory on "
                                                 "finitely generated groups")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("walk", "compression", "verify", "table"):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if name == "verify":
            p.add_argument("--families", help="comma-separated family list")
        if name == "table":
            p.add_argument("--rows", help="comma-separated row ids (A, B, C)")
    p = sub.add_parser("cache")
    p.add_argument("action", choices=["list", "clear"])
    _add_config_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args)
        if args.command == "walk":
            return cmd_walk(cfg)
        if args.command == "compression":
            return cmd_compression(cfg)
        if args.command == "verify":
            fams = args.families.split(",") if getattr(args, "families", None) else None
            return cmd_verify(cfg, fams)
        if args.command == "table":
            rows = args.rows.split(",") if getattr(args, "rows", None) else None
            return cmd_table(cfg, rows)
        if args.command == "cache":
            return cmd_cache(cfg, args.action)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_TRUNCATED
    except CayleyLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

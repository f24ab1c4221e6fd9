"""Surjective homomorphisms used for pushforward experiments.

Supported descriptors:

* ``identity``       -- G -> G.
* ``free_to_z:j``    -- free:k -> Z, letter j -> +1, every other letter -> 0.
* ``cursor``         -- lamplighter:m or wreathZZ -> Z, (cursor, lamps) -> cursor.
* ``lamp_to_z:v``    -- lamplighter:m -> Z sending the lamp generator to v.
                        Only v = 0 satisfies the lamp relation (order m), so
                        nonzero v is rejected; kept as the error path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import GroupError
from .groups import Element, Family, GroupSpec


@dataclass(frozen=True)
class Homomorphism:
    source: GroupSpec
    target: GroupSpec
    kind: str
    param: int = 0

    def apply(self, g: Element) -> Element:
        if self.kind == "identity":
            return g
        if self.kind == "free_to_z":
            j = self.param
            total = 0
            for c in g:
                if c == j:
                    total += 1
                elif c == -j:
                    total -= 1
            return (total,)
        # cursor projection
        return (g[0],)

    def generator_images(self) -> dict[Element, Element]:
        return {s: self.apply(s) for s in self.source.generators()}

    def is_one_lipschitz(self) -> bool:
        """True when every generator image is a generator of the target or e."""
        target_gens = set(self.target.generators())
        e = self.target.identity()
        return all(img == e or img in target_gens for img in self.generator_images().values())


def pushforward_hom(source: GroupSpec, target: GroupSpec, descriptor: str) -> Homomorphism:
    """Build a homomorphism handle from a descriptor string.

    Raises GroupError when the descriptor does not define a homomorphism
    (checked on the generator relations that exist in these families) or is
    not supported for the given pair of groups.
    """
    desc = descriptor.strip()
    if desc == "identity":
        if source != target:
            raise GroupError("identity homomorphism needs source == target")
        return Homomorphism(source, target, "identity")

    if desc.startswith("free_to_z"):
        if source.family is not Family.FREE:
            raise GroupError("free_to_z needs a free source group")
        if target != GroupSpec(Family.FREE_ABELIAN, 1):
            raise GroupError("free_to_z needs target Z^1")
        j = int(desc.split(":", 1)[1]) if ":" in desc else 1
        if not 1 <= j <= source.rank:
            raise GroupError(f"free_to_z letter {j} out of range")
        return Homomorphism(source, target, "free_to_z", j)

    if desc == "cursor":
        if source.family not in (Family.LAMPLIGHTER, Family.WREATH_ZZ):
            raise GroupError("cursor projection needs a lamplighter/wreath source")
        if target != GroupSpec(Family.FREE_ABELIAN, 1):
            raise GroupError("cursor projection needs target Z^1")
        return Homomorphism(source, target, "cursor")

    if desc.startswith("lamp_to_z"):
        if source.family is not Family.LAMPLIGHTER:
            raise GroupError("lamp_to_z needs a lamplighter source")
        v = int(desc.split(":", 1)[1]) if ":" in desc else 0
        # lamp generator l satisfies l^m = e; its image must too, and Z is
        # torsion-free, so only v = 0 works.
        if v * source.rank != 0:
            raise GroupError(f"lamp image {v} violates the lamp relation l^{source.rank} = e")
        return Homomorphism(source, target, "cursor")

    raise GroupError(f"unsupported homomorphism descriptor {descriptor!r}")

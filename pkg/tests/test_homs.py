import pytest

from cayleylab import GroupError, parse_group, pushforward_hom
from cayleylab.measures import lazy_step_measure
from cayleylab.verify import pushed_step_atoms, pushforward_identity_margin

Z1 = parse_group("Z^1")


def test_free_to_z_example():
    hom = pushforward_hom(parse_group("free:2"), Z1, "free_to_z:1")
    # psi(a b a^-1 b) = 0 when a -> 1, b -> 0
    assert hom.apply((1, 2, -1, 2)) == (0,)
    assert hom.apply((1, 1, 2)) == (2,)


def test_cursor_projection_example():
    hom = pushforward_hom(parse_group("wreathZZ"), Z1, "cursor")
    assert hom.apply((2, ((0, 1),))) == (2,)


def test_identity_hom():
    spec = parse_group("lamplighter:2")
    hom = pushforward_hom(spec, spec, "identity")
    g = (3, ((1, 1),))
    assert hom.apply(g) == g
    with pytest.raises(GroupError):
        pushforward_hom(spec, Z1, "identity")


def test_pushforward_lazy_step_f2():
    hom = pushforward_hom(parse_group("free:2"), Z1, "free_to_z:1")
    atoms = dict(pushed_step_atoms(hom))
    assert abs(atoms[(0,)] - 0.75) < 1e-15
    assert abs(atoms[(1,)] - 0.125) < 1e-15
    assert abs(atoms[(-1,)] - 0.125) < 1e-15


def test_relation_check_rejects_bad_lamp_image():
    spec = parse_group("lamplighter:2")
    with pytest.raises(GroupError):
        pushforward_hom(spec, Z1, "lamp_to_z:1")
    hom = pushforward_hom(spec, Z1, "lamp_to_z:0")
    assert hom.apply((4, ((0, 1),))) == (4,)


def test_unsupported_descriptor():
    with pytest.raises(GroupError):
        pushforward_hom(parse_group("Z^2"), Z1, "mystery")
    with pytest.raises(GroupError):
        pushforward_hom(parse_group("free:2"), Z1, "free_to_z:5")


@pytest.mark.parametrize("group,desc", [("free:2", "free_to_z:1"),
                                        ("wreathZZ", "cursor"),
                                        ("lamplighter:2", "cursor")])
def test_one_lipschitz_generator_images(group, desc):
    hom = pushforward_hom(parse_group(group), Z1, desc)
    assert hom.is_one_lipschitz()


@pytest.mark.parametrize("group,desc", [("free:2", "free_to_z:1"),
                                        ("wreathZZ", "cursor")])
def test_word_length_contraction_on_ball(group, desc):
    from cayleylab import compute_ball
    spec = parse_group(group)
    hom = pushforward_hom(spec, Z1, desc)
    ball = compute_ball(spec, 5)
    for g, d in ball.word_length.items():
        assert abs(hom.apply(g)[0]) <= d


@pytest.mark.parametrize("group,desc", [("free:2", "free_to_z:1"),
                                        ("wreathZZ", "cursor"),
                                        ("lamplighter:3", "cursor")])
def test_pushforward_commutes_with_convolution(group, desc):
    hom = pushforward_hom(parse_group(group), Z1, desc)
    assert pushforward_identity_margin(hom, n_max=5) < 1e-14

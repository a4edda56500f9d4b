import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdmskit.errors import InvalidInputError, NoConvergenceError, SingularMapError
from gdmskit.maps import (
    Composite,
    Disk,
    HalfPlane,
    Interval,
    Moebius,
    NumericBranch,
    PowerLadder,
    LadderRung,
    apply_checked,
    compose,
    distortion_constant,
    fixed_point,
    inf_log_derivative,
    inversion,
    moebius_compose,
    moebius_fixed_points,
    similarity,
    sup_log_derivative,
)

UNIT = Interval(0.0, 1.0)


def gauss(n):
    return Moebius(np.array([[0.0, 1.0], [1.0, float(n)]]))


finite = st.floats(-2, 2, allow_nan=False)
cplx = st.builds(complex, finite, finite)


@st.composite
def contracting_moebius(draw):
    """Maps sending the unit disk strictly inside a small disk (pole far away)."""
    pole = draw(st.builds(complex, st.floats(2.5, 6), st.floats(-3, 3)))
    scale = draw(st.floats(0.2, 1.0))
    rot = np.exp(1j * draw(st.floats(0, 2 * np.pi)))
    # z -> a + scale*rot/(z - pole)
    a = draw(st.builds(complex, st.floats(-0.3, 0.3), st.floats(-0.3, 0.3)))
    return Moebius(np.array([[a, scale * rot - a * pole], [1.0, -pole]]))


def test_basic_evaluations():
    assert similarity(0.5).apply(0.4) == pytest.approx(0.2)
    assert gauss(2).apply(0.0) == pytest.approx(0.5)
    assert inversion(0, 1.0).apply(2 + 0j) == pytest.approx(0.5 + 0j)


def test_log_derivatives():
    assert np.allclose(similarity(0.3, 0.1).log_abs_derivative(np.linspace(0, 1, 5)), np.log(0.3))
    x = np.linspace(0, 1, 7)
    assert np.allclose(gauss(3).log_abs_derivative(x), -2 * np.log(x + 3), atol=1e-14)
    farey_left = Moebius(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert farey_left.log_abs_derivative(0.0) == pytest.approx(0.0, abs=1e-15)


def test_pole_raises():
    m = Moebius(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(SingularMapError):
        m.apply(0.0)
    with pytest.raises(SingularMapError):
        Moebius(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(SingularMapError):
        apply_checked(Moebius(np.array([[1.0, 0.0], [1.0, -0.5]])), 0.2, UNIT)
    with pytest.raises(InvalidInputError):
        apply_checked(gauss(1), 1.5, UNIT)


def test_similarity_composition():
    m = compose((0, 1), [similarity(0.5, 0.1), similarity(1 / 3, 0.2)])
    assert m.ratio == pytest.approx(1 / 6)
    assert m.apply(0.3) == pytest.approx(0.5 * (0.3 / 3 + 0.2) + 0.1)


def test_empty_word_is_identity():
    assert compose((), [gauss(1)]).apply(0.37) == pytest.approx(0.37)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=5), st.lists(st.integers(1, 9), min_size=1, max_size=5))
def test_moebius_associativity_and_chain_rule(w, t):
    maps = {n: gauss(n) for n in range(1, 10)}
    pts = np.linspace(0, 1, 10)
    mw, mt, mwt = (compose(u, maps) for u in (w, t, w + t))
    assert np.allclose(mwt.apply(pts), mw.apply(mt.apply(pts)), atol=1e-12)
    lhs = mwt.log_abs_derivative(pts)
    rhs = mw.log_abs_derivative(mt.apply(pts)) + mt.log_abs_derivative(pts)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(contracting_moebius(), contracting_moebius(), st.lists(cplx, min_size=1, max_size=10))
def test_group_law(m1, m2, zs):
    z = np.array(zs) * 0.4
    prod = moebius_compose(m1, m2)
    assert np.allclose(prod.apply(z), m1.apply(m2.apply(z)), atol=1e-12)
    back = moebius_compose(m1.inverse(), m1).apply(z)
    assert np.allclose(back, z, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(cplx, st.floats(0.1, 3), st.lists(cplx, min_size=1, max_size=10))
def test_inversions_are_involutions(c, r, zs):
    z = np.array(zs) + 10.0  # stay away from the center
    inv = inversion(c, r)
    assert np.allclose(inv.apply(inv.apply(z)), z, atol=1e-12 * (1 + np.abs(z)).max())
    anti = moebius_compose(inv, inv)
    assert not anti.is_anti
    assert np.allclose(anti.apply(z), z, atol=1e-11 * (1 + np.abs(z)).max())


@settings(max_examples=60, deadline=None)
@given(contracting_moebius())
def test_closed_form_fixed_point_matches_iteration(m):
    dom = Disk(0j, 1.0)
    closed = fixed_point(m, dom)
    z = 0j
    for _ in range(5000):
        z = m.apply(z)
    assert abs(closed - z) < 1e-11


def test_fixed_points_of_simple_maps():
    assert fixed_point(gauss(1), UNIT) == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-12)
    assert fixed_point(similarity(0.25, 0.3), UNIT) == pytest.approx(0.4)
    # parabolic: the exact double root
    assert moebius_fixed_points(Moebius(np.array([[1.0, 0.0], [1.0, 1.0]]))) == [0j]


def test_fixed_point_non_contracting_fails():
    translation = Composite((similarity(1.0, 0.1),))
    with pytest.raises(NoConvergenceError):
        fixed_point(translation, UNIT, max_iter=50)


def test_cyclic_rotation_of_fixed_points():
    maps = {n: gauss(n) for n in range(1, 6)}
    w = (1, 3, 2, 5)
    x_w = fixed_point(compose(w, maps), UNIT)
    rotated = w[1:] + w[:1]
    x_r = fixed_point(compose(rotated, maps), UNIT)
    # x_w = phi_{w_1}(x_{sigma w w_1})
    assert maps[w[0]].apply(x_r) == pytest.approx(x_w, abs=1e-12)


def test_sup_log_derivative_closed_forms():
    assert sup_log_derivative(similarity(0.3), UNIT) == pytest.approx(np.log(0.3))
    for n in (1, 2, 7):
        assert sup_log_derivative(gauss(n), UNIT) == pytest.approx(-2 * np.log(n))
        assert inf_log_derivative(gauss(n), UNIT) == pytest.approx(-2 * np.log(n + 1))


@settings(max_examples=30, deadline=None)
@given(contracting_moebius())
def test_sup_log_derivative_on_disk_matches_grid(m):
    dom = Disk(0.1 + 0.2j, 0.8)
    r = np.sqrt(np.linspace(0, 1, 100))[:, None]
    th = np.linspace(0, 2 * np.pi, 100, endpoint=False)[None, :]
    z = (dom.center + dom.radius * r * np.exp(1j * th)).ravel()
    grid = m.log_abs_derivative(z).max()
    exact = sup_log_derivative(m, dom)
    assert exact >= grid - 1e-12
    assert exact - grid < 1e-3  # the grid misses the boundary extremum by O(spacing)
    boundary = m.log_abs_derivative(dom.center + dom.radius * np.exp(1j * np.linspace(0, 2 * np.pi, 10**4))).max()
    assert abs(exact - boundary) < 1e-6


def test_sup_log_on_half_plane_is_infinite_near_pole():
    h = HalfPlane(0j, 1j)
    m = Moebius(np.array([[0.0, 1.0], [1.0, 0.5j]]))  # pole at -0.5i, outside the upper half plane
    assert np.isinf(inf_log_derivative(m, h))


def test_distortion_constants():
    assert distortion_constant([similarity(0.5), similarity(1 / 3, 0.6)], UNIT) == pytest.approx(1.0)
    K = distortion_constant([gauss(n) for n in range(1, 51)], UNIT, pad=0.0)
    assert K == pytest.approx(4.0)
    assert distortion_constant([gauss(n) for n in range(1, 51)], UNIT) <= 4.0 ** 1.1 + 1e-12


def test_numeric_branch_inverts_forward_map():
    alpha = 0.5
    c = 0.5698402909980532  # x + x^1.5 = 1
    f = lambda x: np.asarray(x) + np.abs(np.asarray(x)) ** (1 + alpha)  # noqa: E731
    df = lambda x: 1 + (1 + alpha) * np.abs(np.asarray(x)) ** alpha  # noqa: E731
    b = NumericBranch(f, df, 0.0, c)
    y = np.linspace(0, 1, 50)
    x = b.apply(y)
    assert np.allclose(f(x), y, atol=1e-12)
    assert np.allclose(b.log_abs_derivative(y), -np.log(df(x)))


def test_power_ladder_matches_composites():
    a = NumericBranch(lambda x: 2 * np.asarray(x), lambda x: 2 * np.ones_like(np.asarray(x)), 0.0, 0.5)
    b = similarity(0.5, 0.5)
    lad = PowerLadder(a, b, 6)
    x = np.linspace(0, 1, 9)
    for n in range(1, 7):
        direct = Composite((a,) * n + (b,))
        rung = LadderRung(lad, n)
        assert np.allclose(rung.apply(x), direct.apply(x), atol=1e-13)
        assert np.allclose(rung.log_abs_derivative(x), direct.log_abs_derivative(x), atol=1e-12)

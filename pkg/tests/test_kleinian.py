import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdmskit import systems
from gdmskit.errors import BudgetExceededError, InvalidGeometryError, InvalidInputError
from gdmskit.kleinian import (
    Circle,
    Line,
    SchottkyData,
    apollonian_triangle_ifs,
    build_apollonian,
    circle_through,
    count_circles,
    descartes_fourth,
    enumerate_packing,
    generation_counts,
    image_of_circle,
    moebius_from_points,
    tangency_point,
)
from gdmskit.maps import Moebius


@pytest.fixture(scope="module")
def config():
    return systems.standard_apollonian_circles()


@pytest.fixture(scope="module")
def apo(config):
    return build_apollonian(*config)


@pytest.fixture(scope="module")
def tri_ifs(config):
    return apollonian_triangle_ifs(*config[:3])


def _on(obj, z, tol=1e-9):
    if isinstance(obj, Line):
        return bool(np.all(obj.distance(z) < tol))
    return bool(np.all(np.abs(np.abs(np.asarray(z) - obj.center) - obj.radius) < tol))


def test_tangency_points(config):
    c1, c2, c3, c4 = config
    assert tangency_point(c1, c2) == pytest.approx(0.0)
    assert tangency_point(c1, c4) == pytest.approx(-1.0)
    p = tangency_point(c1, c3)
    assert _on(c1, p) and _on(c3, p)


def test_descartes_fourth(config):
    c1, c2, c3, c4 = config
    other = descartes_fourth(c1, c2, c4, exclude=c3)
    assert other.center == pytest.approx(-2j / 3)
    assert other.radius == pytest.approx(1 / 3)
    inner = descartes_fourth(c1, c2, c3, exclude=c4)
    ks = np.array([c1.curvature, c2.curvature, c3.curvature, inner.curvature])
    assert ks.sum() ** 2 == pytest.approx(2 * np.sum(ks**2))


def test_dual_circles_pass_through_tangency_points(apo):
    for i, k in enumerate(apo.dual):
        for (a, b), p in apo.tangency_points.items():
            if i not in (a, b):
                assert _on(k, p, 1e-9)


def test_dual_inversions_preserve_other_circles(apo):
    # K_i is orthogonal to every C_j with j != i
    for i, g in enumerate(apo.inversions):
        for j, c in enumerate(apo.circles):
            if j == i:
                continue
            img = g.apply(c.points(16))
            assert _on(c, img, 1e-8)


def test_inversions_are_involutions(apo):
    z = np.array([0.1 + 0.2j, -0.3 + 0.05j, 0.7j])
    for g in apo.inversions:
        np.testing.assert_allclose(g.apply(g.apply(z)), z, atol=1e-12)


def test_generators_are_parabolic_products(apo):
    # gamma_i = g_4 g_i: orientation preserving, trace^2 = 4 since K_i and K_4 are tangent
    for m in apo.generators:
        assert not m.conjugate
        mat = m.matrix / np.sqrt(np.linalg.det(m.matrix))
        assert abs(np.trace(mat) ** 2 - 4) < 1e-9


def test_triangle_maps_generation_counts(tri_ifs):
    for n in range(1, 7):
        assert len(enumerate_packing(tri_ifs, generations=n)) == 3**n


def test_full_packing_generation_counts(apo):
    for n in range(1, 6):
        assert len(enumerate_packing(apo, generations=n)) == 4 * 3 ** (n - 1)
    assert generation_counts(14)["full_packing"] == 6_377_292
    assert generation_counts(3)["triangle_ifs"] == 27


def test_curvatures_are_integers(apo):
    pk = enumerate_packing(apo, T=5.0, seeds=True)
    k = 1 / pk.radii
    assert np.max(np.abs(k - np.round(k))) < 1e-6
    assert len(pk) > 50


def test_packing_circles_disjoint(tri_ifs):
    pk = enumerate_packing(tri_ifs, T=4.5, seeds=True)
    c, r = pk.centers, pk.radii
    for i, j in itertools.combinations(range(len(r)), 2):
        assert abs(c[i] - c[j]) >= r[i] + r[j] - 1e-9


def test_generations_one_to_five_disjoint(tri_ifs):
    cs = [enumerate_packing(tri_ifs, generations=n) for n in range(0, 6)]
    c = np.concatenate([p.centers for p in cs])
    r = np.concatenate([p.radii for p in cs])
    d = np.abs(c[:, None] - c[None, :])
    gap = d - r[:, None] - r[None, :]
    np.fill_diagonal(gap, np.inf)
    assert gap.min() > -1e-9


def test_count_circles_monotone(tri_ifs):
    T = np.linspace(1.0, 6.0, 11)
    n = count_circles(tri_ifs, T)
    assert np.all(np.diff(n) >= 0)
    pk = enumerate_packing(tri_ifs, T=6.0)
    assert n[-1] == len(pk)


def test_packing_budget(apo):
    with pytest.raises(BudgetExceededError):
        enumerate_packing(apo, generations=9, budget=1000)
    with pytest.raises(InvalidInputError):
        enumerate_packing(apo)


def test_packing_csv(tmp_path, tri_ifs):
    pk = enumerate_packing(tri_ifs, generations=2)
    pk.to_csv(tmp_path / "p.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "cx,cy,r,generation,word"
    assert len(rows) == 10


@settings(max_examples=30, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3), r=st.floats(0.1, 2.0),
       a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_image_of_circle_matches_samples(re, im, r, a, b):
    m = Moebius(np.array([[1.0, a + 0.5j], [0.3 * b, 1.0 + 0.2j]]))
    c = Circle(complex(re, im), r)
    pole = -m.matrix[1, 1] / m.matrix[1, 0] if abs(m.matrix[1, 0]) > 1e-12 else None
    if pole is not None and abs(abs(pole - c.center) - r) < 1e-2:
        return
    img = image_of_circle(m, c)
    assert _on(img, m.apply(c.points(12)), 1e-6 * max(1.0, img.radius))


def test_circle_through_and_moebius_from_points():
    c = circle_through(1, 1j, -1)
    assert c.center == pytest.approx(0) and c.radius == pytest.approx(1)
    src, dst = (0, 1, 1j), (2, 3j, -1 + 1j)
    m = moebius_from_points(src, dst)
    np.testing.assert_allclose(m.apply(np.array(src, dtype=complex)), np.array(dst, dtype=complex), atol=1e-12)


def test_schottky_pairs(schottky):
    assert schottky.n_letters == 12
    data = SchottkyData.from_bisector_pairs(systems.schottky_circles())
    data.check()
    for j, g in data.generators.items():
        src = data.balls[data.inverse[j]]
        assert _on(data.balls[j], g.apply(src.points(16)), 1e-9)


def test_schottky_geometry_errors():
    overlapping = systems.schottky_circles(offset=2.0, radius=1.5)
    with pytest.raises(InvalidGeometryError):
        systems.schottky_system(overlapping)
    tangent = systems.schottky_circles(offset=np.sqrt(2.0), radius=1.0)
    with pytest.raises(InvalidGeometryError):
        systems.schottky_system(tangent)
    unequal = dict(systems.schottky_circles())
    unequal[1] = Circle(unequal[1].center, 0.9)
    with pytest.raises(InvalidGeometryError):
        SchottkyData.from_bisector_pairs(unequal)
    with pytest.raises(InvalidInputError):
        systems.schottky_system(pairing="twisted")


def test_circle_validation(config):
    with pytest.raises(InvalidGeometryError):
        Circle(0, -1.0)
    c1, c2, c3, _ = config
    with pytest.raises(InvalidGeometryError):
        apollonian_triangle_ifs(c1, c2, Circle(2j, 0.3))

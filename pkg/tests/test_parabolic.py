import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdmskit import systems
from gdmskit.errors import InvalidInputError
from gdmskit.parabolic import (
    block_system,
    classify_finiteness,
    diameter_constant_finite,
    estimate_parabolic_index,
    induce,
    parabolic_profile,
)
from gdmskit.thermo import PressureEvaluator, bowen_dimension


@pytest.fixture(scope="module")
def farey_star(farey):
    return induce(farey, N_cap=50)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 49), x=st.floats(0.0, 1.0))
def test_farey_star_maps_are_gauss_branches(farey_star, n, x):
    # star letter n is the block 0^n 1, i.e. x -> 1/(x + n + 1)
    assert farey_star.star_words[n] == (0,) * n + (1,)
    y = farey_star.star.maps[n].apply(np.asarray(x))
    assert abs(y - 1.0 / (x + n + 1)) < 1e-12


def test_farey_star_dimension_is_one(farey):
    star = induce(farey, N_cap=200).star
    res = bowen_dimension(PressureEvaluator(star))
    assert abs(res.delta - 1.0) < 1e-6


@pytest.mark.parametrize("alpha, p_true, tol", [(0.5, 0.5, 0.05), (2.0, 2.0, 0.1)])
def test_manneville_pomeau_index(alpha, p_true, tol):
    mp = systems.manneville_pomeau_system(alpha)
    fit = estimate_parabolic_index(mp, 0)
    assert abs(fit.p / p_true - 1) < tol
    assert not fit.poor_fit


def test_farey_and_triangle_index(farey, triangle):
    assert abs(estimate_parabolic_index(farey, 0).p - 1) < 0.05
    prof = parabolic_profile(triangle)
    assert sorted(prof.indices) == [0, 1, 2]
    assert all(abs(p - 1) < 0.05 for p in prof.indices.values())


def test_index_rejects_non_parabolic(sim23, farey):
    with pytest.raises(InvalidInputError):
        estimate_parabolic_index(sim23, 0)
    with pytest.raises(InvalidInputError):
        estimate_parabolic_index(farey, 0, n_range=(10, 5))


def test_classify_farey_boundary_is_infinite(farey):
    prof = classify_finiteness(1.0, parabolic_profile(farey))
    assert prof.boundary_cases == (0,)
    assert prof.Omega_infinity == (0,)
    assert prof.measure_finite is False


def test_classify_triangle_finite(triangle):
    prof = classify_finiteness(1.3057, parabolic_profile(triangle))
    assert prof.Omega_infinity == ()
    assert prof.measure_finite is True


def test_classify_mp_alpha_two_infinite():
    mp = systems.manneville_pomeau_system(2.0)
    prof = classify_finiteness(1.0, parabolic_profile(mp))
    assert prof.Omega_infinity == (0,)
    assert prof.measure_finite is False
    assert prof.boundary_cases == ()


def test_diameter_constant_finiteness(farey):
    prof = parabolic_profile(farey)
    with pytest.raises(InvalidInputError):
        diameter_constant_finite(prof, [0.3, 0.7])
    classify_finiteness(1.0, prof)
    assert diameter_constant_finite(prof, [0.3, 0.7])
    assert not diameter_constant_finite(prof, [0.0, 0.5])


def test_attracting_system_is_returned_unchanged(sim23):
    ind = induce(sim23)
    assert ind.star is sim23
    assert ind.omega == ()
    assert ind.star_words == [(0,), (1,)]


def test_mp_star_derivative_decay():
    # sup |(phi_0^n phi_1)'| decays like n^-(1 + 1/alpha)
    mp = systems.manneville_pomeau_system(0.5)
    ind = induce(mp, N_cap=100)
    n = np.arange(21, 101)
    slope = np.polyfit(np.log(n), ind.sup_logs[n], 1)[0]
    assert abs(slope + 3.0) < 0.1
    assert np.all(np.diff(ind.sup_logs) < 0)


def test_star_letters_contract(farey_star):
    # x -> 1/(1+x) has |f'(0)| = 1, so only the order-two composites contract
    assert np.all(farey_star.sup_logs <= 0)
    assert np.all(farey_star.sup_logs[1:] < 0)
    assert farey_star.star.iterate_order == 2
    assert farey_star.star.kappa is not None


def test_induce_rejects_bad_cap(farey):
    with pytest.raises(InvalidInputError):
        induce(farey, N_cap=0)


def test_block_system(sim23, lattice):
    b = block_system(sim23, 3)
    assert b.n_letters == 8
    x = np.linspace(0, 1, 7)
    for k, w in enumerate(b.meta["block_words"]):
        np.testing.assert_allclose(b.maps[k].apply(x), sim23.compose(w).apply(x), atol=1e-14)
    d1 = bowen_dimension(PressureEvaluator(sim23)).delta
    d3 = bowen_dimension(PressureEvaluator(b)).delta
    assert abs(d1 - d3) < 1e-8
    assert block_system(lattice, 2).n_letters == 4

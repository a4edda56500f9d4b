import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CHI_23, DELTA_23, SIGMA2_23
from gdmskit import systems
from gdmskit.counting import Coding
from gdmskit.errors import InvalidInputError, MustInduceError
from gdmskit.thermo import (
    PressureEvaluator,
    SpectralModel,
    bowen_dimension,
    gibbs_measure,
    lyapunov,
    poincare_residue_probe,
    spectral_radius_complex,
    thermo_report,
    variance,
)


@pytest.fixture(scope="module")
def gauss200():
    return systems.gauss_system(200)


@pytest.fixture(scope="module")
def gauss_ev(gauss200):
    return PressureEvaluator(gauss200)


def test_similarity_pressure_closed_form(sim23):
    ev = PressureEvaluator(sim23)
    assert ev.method == "exact"
    assert ev.value(1.0) == pytest.approx(np.log(5 / 6), abs=1e-14)
    assert ev.pressure(1.0).error == 0.0


def test_single_map_pressure_is_linear():
    s = systems.similarity_system([0.3])
    ev = PressureEvaluator(s)
    for t in (0.0, 0.5, 2.0):
        assert ev.value(t) == pytest.approx(t * np.log(0.3), abs=1e-14)


def test_gauss_pressure_vanishes_at_one(gauss_ev):
    val, err = gauss_ev.pressure(1.0)
    assert abs(val) < 1e-6
    assert err < 1e-4


def test_gauss_tail_bound_formula(gauss200):
    N, s = 200, 0.8
    assert gauss200.tail_bound(s) == pytest.approx(N ** (1 - 2 * s) / (2 * s - 1))
    assert np.isinf(gauss200.tail_bound(0.5))


def test_word_pressure_agrees_with_exact(sim23):
    words = PressureEvaluator(sim23, method="words", level=10)
    exact = PressureEvaluator(sim23)
    val, err = words.pressure(0.6)
    assert val == pytest.approx(exact.value(0.6), abs=1e-12)


def test_pressure_method_errors(sim23):
    with pytest.raises(InvalidInputError):
        PressureEvaluator(sim23, method="magic")
    with pytest.raises(InvalidInputError):
        PressureEvaluator(systems.gauss_system(5), method="exact")


def test_equal_ratio_dimension():
    r = 0.3
    d = bowen_dimension(PressureEvaluator(systems.lattice_system(r))).delta
    assert d == pytest.approx(np.log(2) / np.log(1 / r), abs=1e-10)


def test_half_third_dimension(sim23):
    res = bowen_dimension(PressureEvaluator(sim23))
    assert res.delta == pytest.approx(DELTA_23, abs=1e-10)
    assert res.bracket[0] <= DELTA_23 <= res.bracket[1]
    assert res.bracket[1] - res.bracket[0] <= 1e-8


def test_gauss_dimension(gauss_ev):
    res = bowen_dimension(gauss_ev, s_min=0.5 + 1e-6)
    assert res.delta == pytest.approx(1.0, abs=1e-6)


def test_truncated_gauss_dimension_frozen():
    # oracle: separate Nystrom solve on 61 Chebyshev-Lobatto nodes with barycentric interpolation
    ev = PressureEvaluator(systems.gauss_system(4, tail=False))
    assert bowen_dimension(ev).delta == pytest.approx(0.788945557483, abs=1e-9)


def test_full_shift_conformal_masses(sim23):
    meas = gibbs_measure(sim23, DELTA_23, depth=4)
    t = meas.table(1)
    assert np.allclose(t.m, [0.5**DELTA_23, (1 / 3) ** DELTA_23], atol=1e-10)
    assert meas.eigenvalue == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("method", ["operator", "cylinder"])
def test_refinement_consistency(method):
    g = systems.gauss_system(6, tail=False)
    d = bowen_dimension(PressureEvaluator(g)).delta
    meas = gibbs_measure(g, d, depth=4, method=method)
    for n in range(1, 4):
        parent = meas.table(n)
        child = meas.table(n + 1)
        assert parent.m.sum() == pytest.approx(1.0, abs=1e-10)
        assert child.mu.sum() == pytest.approx(1.0, abs=1e-8)
        for w, mass in zip(parent.words, parent.m):
            sel = np.all(child.words[:, :n] == w, axis=1)
            assert child.m[sel].sum() == pytest.approx(mass, abs=1e-10)


def test_operator_and_cylinder_measures_agree():
    g = systems.gauss_system(4, tail=False)
    d = bowen_dimension(PressureEvaluator(g)).delta
    a = gibbs_measure(g, d, depth=8, method="operator").table(2)
    b = gibbs_measure(g, d, depth=8, method="cylinder").table(2)
    assert np.allclose(a.m, b.m, rtol=2e-2)


def test_lyapunov_single_map():
    s = systems.similarity_system([0.3])
    assert lyapunov(s, 0.0).chi == pytest.approx(np.log(1 / 0.3), rel=1e-8)


def test_lyapunov_half_third(sim23):
    res = lyapunov(sim23, DELTA_23)
    assert res.chi == pytest.approx(CHI_23, rel=1e-8)
    assert res.chi_fd == pytest.approx(CHI_23, rel=1e-6)
    assert not res.flagged


def test_lyapunov_estimates_agree_on_gauss():
    g = systems.gauss_system(100)
    ev = PressureEvaluator(g)
    d = bowen_dimension(ev, s_min=0.5 + 1e-6).delta
    res = lyapunov(g, d, ev)
    assert res.relative_difference < 0.01
    assert res.chi == pytest.approx(np.pi**2 / (6 * np.log(2)), rel=1e-3)


def test_lyapunov_refuses_parabolic(farey):
    with pytest.raises(MustInduceError):
        lyapunov(farey, 1.0)


def test_variance(sim23, lattice):
    assert variance(lattice, 1.0) == pytest.approx(0.0, abs=1e-6)
    assert variance(sim23, DELTA_23) == pytest.approx(SIGMA2_23, rel=1e-5)


def test_variance_matches_exact_distribution(sim23):
    from gdmskit.stats import exact_counting_distribution

    tab = exact_counting_distribution(sim23, Coding((), (0,)), 16, DELTA_23, CHI_23)
    assert tab.var == pytest.approx(variance(sim23, DELTA_23), rel=0.05)


def test_spectral_radius_at_real_axis(sim23):
    assert spectral_radius_complex(sim23, DELTA_23, depth=6) == pytest.approx(1.0, abs=1e-8)


def test_lattice_resonance(lattice):
    t = 2 * np.pi / np.log(2)
    assert spectral_radius_complex(lattice, 1.0 + 1j * t, depth=6) == pytest.approx(1.0, abs=1e-6)


def test_generic_gap_is_stable_across_depths(sim23):
    vals = [spectral_radius_complex(sim23, DELTA_23 + 1j, depth=k) for k in (6, 8, 10)]
    assert max(vals) < 0.999
    assert np.ptp(vals) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 30.0))
def test_normalized_radius_never_exceeds_one(t):
    s = systems.similarity_system([0.5, 1 / 3])
    assert spectral_radius_complex(s, 0.7 + 1j * t, depth=5) <= 1 + 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(0.55, 1.6), st.floats(0.02, 0.3))
def test_gauss_pressure_decreasing_and_convex(s, h):
    ev = _gauss_ev_shared()
    p1, p2, p3 = ev.value(s), ev.value(s + h), ev.value(s + 2 * h)
    assert p1 > p2 > p3
    assert p2 <= 0.5 * (p1 + p3) + 1e-9


_EV = {}


def _gauss_ev_shared():
    if "g" not in _EV:
        _EV["g"] = PressureEvaluator(systems.gauss_system(60))
    return _EV["g"]


def test_spectral_model_rows_respect_incidence():
    import numpy as np

    from gdmskit.gdms import Gdms
    from gdmskit.maps import Interval, similarity
    from gdmskit.symbolic import Alphabet, IncidenceMatrix

    A = IncidenceMatrix(np.array([[1, 1], [1, 0]]))
    s = Gdms(Alphabet.single_vertex(2), A, [similarity(0.4), similarity(0.3, 0.6)], (Interval(0.0, 1.0),))
    model = SpectralModel(s, 3)
    M = model.matrix(0.8).toarray()
    assert np.all(M >= 0)
    for r, c in zip(*np.nonzero(M)):
        e = model.words[c][0]
        assert A.allowed(e, model.words[r][0])


def test_residue_probe_full_shift(sim23):
    probe = poincare_residue_probe(sim23, Coding((), (0,)), delta=DELTA_23)
    assert probe.extrapolated == pytest.approx(1 / CHI_23, rel=0.10)
    assert not probe.unreliable


def test_residue_probe_cylinder(sim23):
    probe = poincare_residue_probe(sim23, Coding((), (0,)), tau=(1,), delta=DELTA_23)
    m1 = (1 / 3) ** DELTA_23
    # psi = 1 for full-shift similarities
    assert probe.extrapolated == pytest.approx(m1 / CHI_23, rel=0.15)


def test_thermo_report(sim23):
    rep = thermo_report(sim23, gibbs_depth=4)
    assert rep.delta == pytest.approx(DELTA_23, abs=1e-10)
    assert rep.chi > 0 and rep.sigma2 >= 0
    assert rep.gibbs_C == pytest.approx(1.0, abs=1e-8)
    assert set(rep.to_dict()) == {"delta", "chi", "sigma2", "gibbs_C", "method"}

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CHI_23, DELTA_23, SIGMA2_23
from gdmskit import systems
from gdmskit.counting import Coding
from gdmskit.errors import InvalidInputError, LatticeDegenerateError, MustInduceError
from gdmskit.kleinian import apollonian_triangle_ifs, enumerate_packing
from gdmskit.parabolic import classify_finiteness, parabolic_profile
from gdmskit.stats import (
    DistributionTable,
    HistogramSpec,
    apollonian_histogram,
    clt_gate,
    exact_counting_distribution,
    gibbs_chain_sample,
    ks_distance,
    word_multipliers,
)
from gdmskit.thermo import gibbs_measure


def test_single_letter_atoms(sim23):
    tab = exact_counting_distribution(sim23, Coding((), (0,)), 1, DELTA_23, CHI_23)
    np.testing.assert_allclose(tab.values, [np.log(2) - CHI_23, np.log(3) - CHI_23], atol=1e-14)
    np.testing.assert_allclose(tab.weights, [2**-DELTA_23, 3**-DELTA_23], atol=1e-14)
    assert tab.total_weight == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n", [2, 5, 10, 16])
def test_exact_distribution_moments(sim23, n):
    # lambda is a sum of n independent Bernoulli steps under the Gibbs weights
    tab = exact_counting_distribution(sim23, Coding((), (0,)), n, DELTA_23, CHI_23)
    assert tab.total_weight == pytest.approx(1.0, abs=1e-12)
    assert abs(tab.mean) < 1e-12
    assert tab.var == pytest.approx(SIGMA2_23, rel=1e-10)
    assert len(tab) == n + 1


def test_skewness_decays(sim23):
    s = [abs(exact_counting_distribution(sim23, Coding((), (0,)), n, DELTA_23, CHI_23).skewness) for n in (4, 16)]
    assert s[1] == pytest.approx(s[0] / 2, rel=1e-8)


def test_word_multipliers_count(sim23):
    words, lam = word_multipliers(sim23, Coding((), (1,)), 6)
    assert words.shape == (64, 6)
    k = np.sum(words == 1, axis=1)
    np.testing.assert_allclose(lam, (6 - k) * np.log(2) + k * np.log(3), atol=1e-12)


def test_ks_single_atom():
    tab = DistributionTable(np.array([0.0]), np.array([1.0]))
    assert ks_distance(tab, 1.0) == pytest.approx(0.5)
    assert ks_distance(tab, 1.0, midpoint=True) == pytest.approx(0.0)
    with pytest.raises(LatticeDegenerateError):
        ks_distance(tab, 0.0)


def test_ks_decreases_with_n(sim23):
    sig = np.sqrt(SIGMA2_23)
    ks = [ks_distance(exact_counting_distribution(sim23, Coding((), (0,)), n, DELTA_23, CHI_23), sig)
          for n in (4, 8, 16)]
    assert ks[0] > ks[1] > ks[2]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.floats(0.01, 5.0)), min_size=1, max_size=30))
def test_table_normalizes_and_merges(atoms):
    v = np.array([a for a, _ in atoms], dtype=float) / 4
    w = np.array([b for _, b in atoms])
    tab = DistributionTable(v, w)
    assert abs(tab.weights.sum() - 1) < 1e-12
    assert np.all(np.diff(tab.values) > 0)
    assert len(tab) == len(set(v.tolist()))
    c = tab.cdf(np.linspace(-6, 6, 50))
    assert np.all(np.diff(c) >= -1e-15)
    assert tab.cdf(10.0) == pytest.approx(1.0)


def test_table_validation():
    with pytest.raises(InvalidInputError):
        DistributionTable(np.array([]), np.array([]))
    with pytest.raises(InvalidInputError):
        DistributionTable(np.array([0.0, 1.0]), np.array([1.0, -1.0]))


def test_parabolic_inputs_refused(farey):
    with pytest.raises(MustInduceError):
        exact_counting_distribution(farey, Coding((), (1,)), 3, 1.0, 1.0)
    prof = parabolic_profile(farey)
    with pytest.raises(InvalidInputError):
        clt_gate(prof)
    with pytest.raises(MustInduceError):
        clt_gate(classify_finiteness(1.0, prof))


def test_clt_gate_passes_finite(triangle):
    clt_gate(classify_finiteness(1.3057, parabolic_profile(triangle)))


def test_gibbs_chain(sim23):
    mu = gibbs_measure(sim23, DELTA_23, depth=3)
    a = gibbs_chain_sample(sim23, mu, 200_000, seed=7)
    b = gibbs_chain_sample(sim23, mu, 200_000, seed=7)
    np.testing.assert_array_equal(a.symbols, b.symbols)
    assert abs(a.steps.mean() - CHI_23) < 5e-3
    assert a.block_variance(100, CHI_23) == pytest.approx(SIGMA2_23, rel=0.05)
    assert np.mean(a.symbols == 0) == pytest.approx(2**-DELTA_23, abs=5e-3)
    with pytest.raises(InvalidInputError):
        a.block_variance(10**6, CHI_23)
    with pytest.raises(InvalidInputError):
        gibbs_chain_sample(sim23, mu, 0)


def test_histogram_generation_one(tmp_path):
    c1, c2, c3, _ = systems.standard_apollonian_circles()
    pk = enumerate_packing(apollonian_triangle_ifs(c1, c2, c3), generations=1)
    h = apollonian_histogram(pk, HistogramSpec(bin_count=5), delta=1.3057)
    assert h.n_circles == 3
    assert h.weights.sum() == pytest.approx(1.0)
    x = -np.log(pk.radii)
    w = pk.radii**1.3057
    assert h.mean == pytest.approx(np.sum(w * x) / w.sum())
    h.to_csv(tmp_path / "h.csv")
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "bin_lo,bin_hi,weight"
    assert len(rows) == 6


def test_histogram_spec_validation():
    with pytest.raises(InvalidInputError):
        HistogramSpec(bin_count=0)
    with pytest.raises(InvalidInputError):
        HistogramSpec(range=(2.0, 1.0))
    with pytest.raises(InvalidInputError):
        apollonian_histogram(np.array([]))

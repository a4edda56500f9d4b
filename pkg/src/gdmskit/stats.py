"""Exact counting distributions, Gaussian comparison and packing histograms."""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .counting import Coding
from .errors import BudgetExceededError, InvalidInputError, LatticeDegenerateError, MustInduceError
from .gdms import Gdms
from .maps import domain_center


@dataclass
class DistributionTable:
    """Finitely supported probability distribution (sorted, merged atoms)."""

    values: np.ndarray
    weights: np.ndarray
    total_weight: float = 1.0
    n: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1 or len(v) == 0:
            raise InvalidInputError("values and weights must be equal-length nonempty vectors")
        if np.any(w < 0) or not np.all(np.isfinite(v)):
            raise InvalidInputError("weights must be nonnegative and values finite")
        order = np.argsort(v, kind="stable")
        v, w = v[order], w[order]
        # merge atoms that agree to rounding
        scale = max(1.0, float(np.max(np.abs(v))))
        key = np.round(v / scale, 11)
        uniq, start = np.unique(key, return_index=True)
        w = np.add.reduceat(w, start)
        v = v[start]
        keep = w > 0
        self.values = v[keep]
        self.weights = w[keep] / w[keep].sum()

    def __len__(self) -> int:
        return len(self.values)

    def moment(self, k: int, central: bool = True) -> float:
        c = self.mean if central else 0.0
        return float(np.sum(self.weights * (self.values - c) ** k))

    @property
    def mean(self) -> float:
        return float(np.sum(self.weights * self.values))

    @property
    def var(self) -> float:
        return self.moment(2)

    @property
    def skewness(self) -> float:
        v = self.var
        return self.moment(3) / v**1.5 if v > 0 else 0.0

    @property
    def excess_kurtosis(self) -> float:
        v = self.var
        return self.moment(4) / v**2 - 3 if v > 0 else 0.0

    def cdf(self, x) -> np.ndarray:
        cw = np.cumsum(self.weights)
        k = np.searchsorted(self.values, x, side="right")
        return np.where(k > 0, cw[np.maximum(k - 1, 0)], 0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["value", "weight"])
            for v, p in zip(self.values, self.weights):
                w.writerow([repr(float(v)), repr(float(p))])


# --------------------------------------------------------------------------
# exact distributions
# --------------------------------------------------------------------------


def word_multipliers(system: Gdms, rho: Coding, n: int, budget: int = 50_000_000):
    """``lambda_rho(w) = -log |phi_w'(xi)|`` for every admissible ``w`` of length ``n``
    that may precede ``rho``. Returns the words (as an array) and the values.
    """
    A = system.incidence.matrix
    total = 0
    xi = rho.point(system)
    cplx = system.ambient_dim == 2
    x = np.array([xi], dtype=complex if cplx else float)
    lam = np.zeros(1)
    words = np.zeros((1, 0), dtype=np.int64)
    firsts = np.array([rho.first])
    for _ in range(n):
        nx, nl, nw = [], [], []
        for e in range(system.n_letters):
            sel = A[e, firsts]
            if not np.any(sel):
                continue
            xe = x[sel]
            nl.append(lam[sel] - system.maps[e].log_abs_derivative(xe))
            nx.append(system.maps[e].apply(xe))
            nw.append(np.hstack([np.full((int(sel.sum()), 1), e), words[sel]]))
        x = np.concatenate(nx)
        lam = np.concatenate(nl)
        words = np.vstack(nw)
        firsts = words[:, 0]
        total += len(lam)
        if total > budget:
            raise BudgetExceededError(f"word enumeration exceeded the budget of {budget} nodes")
    return words, lam


def exact_counting_distribution(system: Gdms, rho: Coding, n: int, delta: float, chi: float,
                                budget: int = 50_000_000) -> DistributionTable:
    """Distribution of ``(lambda_rho(w) - chi n)/sqrt(n)`` with weights ``exp(-delta lambda_rho(w))``.

    ``total_weight`` holds the unnormalized sum, which is close to
    ``exp(n P(delta)) = 1``.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    from .gdms import detect_parabolic

    if detect_parabolic(system).is_parabolic:
        raise MustInduceError("counting distributions of parabolic systems need the induced system")
    _, lam = word_multipliers(system, rho, n, budget)
    w = np.exp(-delta * lam)
    tab = DistributionTable((lam - chi * n) / np.sqrt(n), w)
    tab.total_weight = float(w.sum())
    tab.n = n
    return tab


def clt_gate(profile) -> None:
    """Refuse a counting CLT on a parabolic system with an infinite invariant measure."""
    if profile.measure_finite is None:
        raise InvalidInputError("classify the parabolic profile first")
    if not profile.measure_finite:
        raise MustInduceError("invariant measure is infinite: the counting CLT does not apply")


def ks_distance(table: DistributionTable, sigma: float, midpoint: bool = False) -> float:
    """Kolmogorov distance between ``table`` and ``N(0, sigma^2)``.

    The sup runs over both one-sided limits of the empirical CDF at each
    atom. With ``midpoint=True`` the average of the two limits is used
    instead, which discounts the jump of each atom (a lattice diagnostic).
    """
    if not sigma > 0:
        raise LatticeDegenerateError("sigma must be positive")
    cw = np.cumsum(table.weights)
    right = cw
    left = np.concatenate([[0.0], cw[:-1]])
    phi = ndtr(table.values / sigma)
    if midpoint:
        return float(np.max(np.abs(0.5 * (left + right) - phi)))
    return float(max(np.max(np.abs(right - phi)), np.max(np.abs(left - phi))))


# --------------------------------------------------------------------------
# Gibbs chain
# --------------------------------------------------------------------------


@dataclass
class ChainSample:
    symbols: np.ndarray
    steps: np.ndarray
    seed: int

    @property
    def sums(self) -> np.ndarray:
        return np.cumsum(self.steps)

    def block_variance(self, block: int, chi: float) -> float:
        """Variance of ``(S_block - chi block)/sqrt(block)`` over disjoint blocks."""
        k = len(self.steps) // block
        if k < 2:
            raise InvalidInputError("sample too short for the block size")
        s = self.steps[: k * block].reshape(k, block).sum(axis=1)
        return float(np.var((s - chi * block) / np.sqrt(block), ddof=1))


def gibbs_chain_sample(system: Gdms, measure, length: int, seed: int = 0) -> ChainSample:
    """Markov chain with transitions ``mu([ab]) / mu([a])``.

    The per-step value of symbol ``a`` followed by ``b`` is
    ``-log |phi_a'(phi_b(center))|``.
    """
    if length < 1:
        raise InvalidInputError("length must be positive")
    t2 = measure.table(2)
    t1 = measure.table(1)
    E = system.n_letters
    P = np.zeros((E, E))
    P[t2.words[:, 0], t2.words[:, 1]] = t2.mu
    row = P.sum(axis=1)
    P = np.divide(P, row[:, None], out=np.zeros_like(P), where=row[:, None] > 0)
    cum = np.cumsum(P, axis=1)
    f = np.zeros((E, E))
    for a in range(E):
        for b in range(E):
            if P[a, b] > 0:
                x = system.maps[b].apply(domain_center(system.domain_of(b)))
                f[a, b] = -float(np.real(system.maps[a].log_abs_derivative(x)))
    rng = np.random.default_rng(seed)
    pi = np.zeros(E)
    pi[t1.words[:, 0]] = t1.mu
    pi = pi / pi.sum()
    u = rng.random(length + 1)
    sym = np.empty(length + 1, dtype=np.int64)
    sym[0] = min(int(np.searchsorted(np.cumsum(pi), u[0], side="right")), E - 1)
    cum_rows = [list(c) for c in cum]
    for i in range(1, length + 1):
        r = cum_rows[sym[i - 1]]
        sym[i] = min(bisect.bisect_right(r, u[i]), E - 1)
    steps = f[sym[:-1], sym[1:]]
    return ChainSample(sym[:-1], steps, seed)


# --------------------------------------------------------------------------
# packing histograms
# --------------------------------------------------------------------------


@dataclass
class HistogramSpec:
    bin_count: int = 46
    range: tuple | None = None
    weighting: str = "r^delta"

    def __post_init__(self):
        if self.bin_count < 1:
            raise InvalidInputError("bin_count must be >= 1")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise InvalidInputError("histogram range must satisfy lo < hi")
        if self.weighting not in ("uniform", "r^delta"):
            raise InvalidInputError("weighting must be 'uniform' or 'r^delta'")


@dataclass
class PackingHistogram:
    edges: np.ndarray
    weights: np.ndarray
    mean: float
    var: float
    skewness: float
    excess_kurtosis: float
    binned_skewness: float
    binned_excess_kurtosis: float
    gaussian_l1: float
    n_circles: int
    notes: list = field(default_factory=list)

    def gaussian_check(self, skew_tol: float = 0.2, kurt_tol: float = 0.5) -> bool:
        """Binned moments close to those of a Gaussian."""
        return abs(self.binned_skewness) <= skew_tol and abs(self.binned_excess_kurtosis) <= kurt_tol

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "weight"])
            for lo, hi, p in zip(self.edges[:-1], self.edges[1:], self.weights):
                w.writerow([repr(float(lo)), repr(float(hi)), repr(float(p))])


def apollonian_histogram(radii, spec: HistogramSpec | None = None, delta: float = 1.30568) -> PackingHistogram:
    """Weighted histogram of ``-log r`` over packing circles.

    ``radii`` may be a :class:`~gdmskit.kleinian.Packing`. Reports the exact
    weighted moments and the moments of the binned histogram, plus the L1
    distance between bin masses and a Gaussian with the same mean and
    variance.
    """
    spec = spec or HistogramSpec()
    r = np.asarray(getattr(radii, "radii", radii), dtype=float)
    if len(r) == 0:
        raise InvalidInputError("empty packing")
    x = -np.log(r)
    w = r**delta if spec.weighting == "r^delta" else np.ones_like(r)
    tab = DistributionTable(x, w)
    lo, hi = spec.range or (float(x.min()), float(x.max()))
    if hi <= lo:
        hi = lo + 1.0
    hist, edges = np.histogram(x, bins=spec.bin_count, range=(lo, hi), weights=w)
    hist = hist / hist.sum()
    mids = 0.5 * (edges[1:] + edges[:-1])
    bm = float(np.sum(hist * mids))
    bv = float(np.sum(hist * (mids - bm) ** 2))
    bs = float(np.sum(hist * (mids - bm) ** 3) / bv**1.5) if bv > 0 else 0.0
    bk = float(np.sum(hist * (mids - bm) ** 4) / bv**2 - 3) if bv > 0 else 0.0
    if tab.var > 0:
        g = np.diff(ndtr((edges - tab.mean) / np.sqrt(tab.var)))
        l1 = float(np.sum(np.abs(hist - g)))
    else:
        l1 = float("nan")
    return PackingHistogram(edges, hist, tab.mean, tab.var, tab.skewness, tab.excess_kurtosis, bs, bk, l1, len(r))

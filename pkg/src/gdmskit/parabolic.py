"""Inducing parabolic systems, parabolic indices and finiteness classification."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GdmsError, InvalidInputError
from .gdms import (
    Gdms,
    MoebiusParabolicTail,
    PowerLawTail,
    detect_parabolic,
)
from .maps import (
    DomainRegion,
    LadderRung,
    Moebius,
    PowerLadder,
    compose,
    moebius_compose,
    sup_log_derivative,
)
from .symbolic import Alphabet, IncidenceMatrix, admissible_words


class InductionError(GdmsError):
    """An induced letter failed the contraction check."""


# --------------------------------------------------------------------------
# block presentation (for parabolic words of length > 1)
# --------------------------------------------------------------------------


def block_system(system: Gdms, L: int) -> Gdms:
    """Presentation of ``system`` by admissible blocks of length ``L``.

    Block ``u`` may follow block ``v`` iff ``v_L u_1`` is admissible. The
    limit set is unchanged and pressure scales by ``L``, so the Bowen
    dimension is the same.
    """
    if L == 1:
        return system
    words = admissible_words(system.incidence, L)
    alph = system.alphabet
    init = tuple(int(alph.initial[w[0]]) for w in words)
    term = tuple(int(alph.terminal[w[-1]]) for w in words)
    new_alph = Alphabet(init, term, alph.n_vertices, tuple(".".join(map(str, w)) for w in words))
    A = system.incidence.matrix[np.ix_(words[:, -1], words[:, 0])]
    maps = [compose(tuple(int(x) for x in w), system.maps) for w in words]
    lookup = {tuple(int(x) for x in w): i for i, w in enumerate(words)}
    par = tuple((lookup[tuple(w)],) for w in system.parabolic_words if len(w) == L and tuple(w) in lookup)
    meta = dict(system.meta, block_words=[tuple(int(x) for x in w) for w in words])
    return Gdms(new_alph, IncidenceMatrix(A), maps, system.domains, iterate_order=1,
                parabolic_words=par, name=f"{system.name}[blocks{L}]", meta=meta)


# --------------------------------------------------------------------------
# parabolic index
# --------------------------------------------------------------------------


def _far_point(system: Gdms, a: int, x_a) -> complex:
    """Point of ``X_a`` (images of the non-``a`` branches) farthest from ``x_a``."""
    best, best_d = None, -1.0
    for b in range(system.n_letters):
        if b == a or not system.incidence.allowed(a, b):
            continue
        dom = system.domain_of(b)
        pts = np.concatenate([np.atleast_1d(dom.boundary_samples(64)), np.atleast_1d(dom.interior_samples(64))])
        img = np.atleast_1d(system.maps[b].apply(pts))
        d = np.abs(img - x_a)
        k = int(np.argmax(d))
        if d[k] > best_d:
            best, best_d = img[k], float(d[k])
    if best is None:
        raise InvalidInputError(f"letter {a} has no admissible successor other than itself")
    return best


def _orbit_log_derivatives(m, z, n_max: int) -> np.ndarray:
    """``log |(m^n)'(z)|`` for ``n = 1..n_max``."""
    out = np.empty(n_max)
    total = 0.0
    for n in range(n_max):
        total += float(np.real(m.log_abs_derivative(z)))
        z = m.apply(z)
        out[n] = total
    return out


@dataclass
class IndexFit:
    """Power-law fit ``|(phi_a^n)'| ~ C n^slope``."""

    letter: int
    p: float
    slope: float
    residual: float
    poor_fit: bool


def estimate_parabolic_index(system: Gdms, a: int, n_range=(20, 200), x_a=None) -> IndexFit:
    """Fit the parabolic index ``p`` of letter ``a``.

    The derivative of ``phi_a^n`` is evaluated at the point of ``X_a`` farthest
    from the parabolic point, the slope ``s`` of ``log |.|`` against ``log n``
    is fitted by least squares over ``n_range`` and ``p = -1/(1+s)``.
    A residual RMS above 0.05 triggers a warning.
    """
    if x_a is None:
        cls = detect_parabolic(system)
        if a not in cls.fixed_points:
            raise InvalidInputError(f"letter {a} is not parabolic")
        x_a = cls.fixed_points[a]
    lo, hi = n_range
    if not 1 <= lo < hi:
        raise InvalidInputError("n_range must satisfy 1 <= lo < hi")
    z = _far_point(system, a, x_a)
    logs = _orbit_log_derivatives(system.maps[a], z, hi)
    n = np.arange(lo, hi + 1)
    y = logs[n - 1]
    X = np.vstack([np.log(n), np.ones(len(n))]).T
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    slope = float(coef[0])
    poor = resid > 0.05
    if poor:
        warnings.warn(f"parabolic index fit for letter {a} is poor (residual {resid:.3g})", stacklevel=2)
    if slope >= -1:
        raise InductionError(f"derivative of letter {a} does not decay faster than 1/n (slope {slope:.3g})")
    return IndexFit(a, -1.0 / (1.0 + slope), slope, resid, poor)


# --------------------------------------------------------------------------
# finiteness classification
# --------------------------------------------------------------------------


@dataclass
class ParabolicProfile:
    """Parabolic indices and the finiteness verdicts derived from them."""

    indices: dict
    fixed_points: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    delta: float | None = None
    Omega_infinity: tuple = ()
    measure_finite: bool | None = None
    boundary_cases: tuple = ()

    @property
    def p_max(self) -> float:
        return max(self.indices.values()) if self.indices else 0.0

    def threshold(self, a) -> float:
        p = self.indices[a]
        return 2 * p / (p + 1)


def parabolic_profile(system: Gdms, n_range=(20, 200)) -> ParabolicProfile:
    cls = detect_parabolic(system)
    idx, res = {}, {}
    for a in cls.omega:
        fit = estimate_parabolic_index(system, a, n_range, cls.fixed_points[a])
        idx[a] = fit.p
        res[a] = fit.residual
    return ParabolicProfile(idx, {a: cls.fixed_points[a] for a in cls.omega}, res)


def classify_finiteness(delta: float, profile: ParabolicProfile, tol: float = 0.05) -> ParabolicProfile:
    """Fill ``Omega_infinity = {a : 2 p_a/(p_a+1) >= delta}`` and the measure verdict.

    Letters whose threshold is within ``tol`` of ``delta`` are listed in
    ``boundary_cases``: a fitted index cannot separate them from equality.
    """
    om = []
    edge = []
    for a in profile.indices:
        th = profile.threshold(a)
        if th >= delta:
            om.append(a)
        if abs(th - delta) <= tol:
            edge.append(a)
    # boundary letters count as infinite: the definition is non-strict
    om = sorted(set(om) | set(edge), key=str)
    p = profile.p_max
    finite = not profile.indices or delta > 2 * p / (p + 1)
    if edge:
        finite = False
    profile.delta = float(delta)
    profile.Omega_infinity = tuple(om)
    profile.measure_finite = bool(finite)
    profile.boundary_cases = tuple(edge)
    return profile


def _closure_contains(Y, x, tol: float) -> bool:
    if isinstance(Y, DomainRegion):
        return bool(np.all(Y.contains(x, tol)))
    pts = np.asarray(Y)
    return bool(np.min(np.abs(pts - x)) <= tol)


def diameter_constant_finite(profile: ParabolicProfile, Y, tol: float = 1e-9) -> bool:
    """Whether the diameter-counting constant of ``Y`` is finite.

    It is finite iff the closure of ``Y`` avoids the parabolic points of
    ``Omega_infinity``.
    """
    if profile.measure_finite is None:
        raise InvalidInputError("classify_finiteness must run first")
    for a in profile.Omega_infinity:
        if _closure_contains(Y, profile.fixed_points[a], tol):
            return False
    return True


# --------------------------------------------------------------------------
# inducing
# --------------------------------------------------------------------------


@dataclass
class InducedSystem:
    """Uniformly contracting system obtained by collapsing parabolic blocks.

    ``star_words[k]`` is the base word ``a^n b`` (or ``(e,)``) of star letter ``k``.
    """

    base: Gdms
    star: Gdms
    star_words: list
    N_cap: int
    omega: tuple
    indices: dict
    sup_logs: np.ndarray

    @property
    def n_letters(self) -> int:
        return self.star.n_letters

    def tail_bound(self, s: float) -> float:
        return self.star.tail_bound(s)


def _power_stack(a: Moebius, N: int):
    """Matrices of ``a^n`` for ``n = 0..N`` (with the conjugation parity)."""
    mats = [Moebius(np.eye(2))]
    for _ in range(N):
        mats.append(moebius_compose(mats[-1], a))
    return mats


def induce(system: Gdms, N_cap: int = 200, n_range=(20, 200), check: bool = True) -> InducedSystem:
    """Collapse parabolic blocks ``a^n b`` (``1 <= n <= N_cap``) into letters.

    Letters outside the parabolic set are kept. Omitted blocks ``n > N_cap``
    are summarized by tail groups: exact Hurwitz-zeta sums for Möbius
    branches and a fitted power law otherwise. Declared parabolic words of
    length ``L > 1`` are first turned into letters by the length-``L`` block
    presentation.
    """
    if N_cap < 1:
        raise InvalidInputError("N_cap must be >= 1")
    lens = {len(w) for w in system.parabolic_words}
    if lens - {1}:
        if len(lens) > 1:
            raise InvalidInputError("parabolic words of different lengths are not supported")
        system = block_system(system, lens.pop())
    cls = detect_parabolic(system)
    omega = tuple(cls.omega) + tuple(w[0] for w in cls.words if len(w) == 1 and w[0] not in cls.omega)
    if not omega:
        return InducedSystem(system, system, [(e,) for e in range(system.n_letters)], N_cap, (), {},
                             np.asarray(system.sup_logs))
    alph = system.alphabet
    A = system.incidence
    words, maps, tails = [], [], []
    indices = {}
    for e in range(system.n_letters):
        if e not in omega:
            words.append((e,))
            maps.append(system.maps[e])
    for a in omega:
        ma = system.maps[a]
        mo = ma.as_moebius()
        if mo is not None and mo.is_anti:
            raise InvalidInputError(f"parabolic letter {a} reverses orientation; use its square")
        x_a = cls.fixed_points.get(a, cls.fixed_points.get((a,)))
        fit = estimate_parabolic_index(system, a, n_range, x_a)
        indices[a] = fit.p
        powers = _power_stack(mo, N_cap) if mo is not None else None
        for b in range(system.n_letters):
            if b == a or not A.allowed(a, b):
                continue
            mb = system.maps[b]
            mbo = mb.as_moebius()
            ladder = None if powers is not None and mbo is not None else PowerLadder(ma, mb, N_cap)
            for n in range(1, N_cap + 1):
                words.append((a,) * n + (b,))
                if ladder is None:
                    maps.append(moebius_compose(powers[n], mbo))
                else:
                    maps.append(LadderRung(ladder, n))
            src, dst = int(alph.terminal[b]), int(alph.initial[a])
            if powers is not None and mbo is not None and not mbo.is_anti:
                tails.append(MoebiusParabolicTail(mo, mbo, N_cap, src, dst))
            else:
                tails.append(PowerLawTail(maps[-1], N_cap, fit.p, src, dst))
    init = tuple(int(alph.initial[w[0]]) for w in words)
    term = tuple(int(alph.terminal[w[-1]]) for w in words)
    labels = tuple(".".join(map(str, w)) if len(w) <= 3 else f"{w[0]}^{len(w) - 1}.{w[-1]}" for w in words)
    last = np.array([w[-1] for w in words])
    first = np.array([w[0] for w in words])
    M = A.matrix[np.ix_(last, first)]
    star_alph = Alphabet(init, term, alph.n_vertices, labels)
    star = Gdms(star_alph, IncidenceMatrix(M), maps, system.domains, tails=tuple(tails),
                name=f"{system.name}*", meta={"star_words": words, "N_cap": N_cap})
    sups = np.array([sup_log_derivative(m, star.domain_of(k)) for k, m in enumerate(maps)])
    if check and np.any(sups >= 0):
        # a neutral letter is acceptable when every two-letter composite contracts
        for e in np.flatnonzero(sups >= 0):
            for f in range(len(words)):
                for w in ((e, f), (f, e)):
                    if star.incidence.allowed(*w) and star.word_sup_log(w) >= 0:
                        raise InductionError(f"induced letter {labels[e]} is not a contraction even at order 2")
        star = star.with_maps(maps, iterate_order=2)
    object.__setattr__(star, "sup_logs", sups)
    return InducedSystem(system, star, words, N_cap, omega, indices, sups)

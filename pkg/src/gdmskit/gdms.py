"""Graph directed Markov systems: assembly, validation, classification.

A :class:`Gdms` bundles an alphabet, an incidence matrix, one conformal branch
per edge and one domain per vertex. Infinite alphabets are truncated to a
finite list of explicit letters; the omitted letters can be summarized by
*tail groups* that the transfer-operator code uses to account for them.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

import numpy as np
from scipy.special import zeta

from .errors import InvalidInputError
from .maps import (
    ConformalMap,
    Disk,
    DomainRegion,
    Interval,
    Moebius,
    NumericBranch,
    Similarity1D,
    compose,
    fixed_point,
    image_circle,
    inf_log_derivative,
    moebius_fixed_points,
    pole_in_domain,
    sup_log_derivative,
)
from .symbolic import Alphabet, IncidenceMatrix, admissible_words, periodic_words

# --------------------------------------------------------------------------
# tails of truncated alphabets
# --------------------------------------------------------------------------


class TailGroup:
    """Aggregate contribution of infinitely many omitted letters.

    Subclasses implement :meth:`weight_and_point`, returning for each base
    point ``x`` the total weight ``sum_n |phi_n'(x)|^s`` of the omitted letters
    and a single representative image point carrying that weight.
    """

    source_vertex = 0  # vertex containing x (terminal vertex of the letters)
    target_vertex = 0  # vertex containing the images

    def weight_and_point(self, x, s: float):
        raise NotImplementedError

    def bound(self, s: float) -> float:
        """Upper bound on ``sum_n ||phi_n'||^s`` over omitted letters."""
        raise NotImplementedError


@dataclass(frozen=True)
class GaussTail(TailGroup):
    """Letters ``1/(x+n)`` with ``n > N``."""

    N: int

    def weight_and_point(self, x, s):
        if 2 * s <= 1:
            return np.full(np.shape(x), np.inf), np.zeros(np.shape(x))
        q = np.asarray(x, dtype=float) + self.N + 1
        w = zeta(2 * s, q)
        return w, zeta(2 * s + 1, q) / w

    def bound(self, s):
        if 2 * s <= 1:
            return np.inf
        return self.N ** (1 - 2 * s) / (2 * s - 1)


@dataclass(frozen=True, eq=False)
class MoebiusParabolicTail(TailGroup):
    """Letters ``a^n o b`` with ``n > N`` for a parabolic Möbius ``a``.

    Uses ``a^n = I + n (A - I)`` (trace +2 normalization), a second-order
    expansion of ``|1 + n u|^{-2s}`` and Hurwitz zeta sums.
    """

    a: Moebius
    b: Moebius
    N: int
    source_vertex: int = 0
    target_vertex: int = 0

    def __post_init__(self):
        if self.a.conjugate or self.b.conjugate:
            raise InvalidInputError("parabolic tail needs orientation-preserving maps")

    @functools.cached_property
    def nilpotent(self) -> np.ndarray:
        m = np.array(self.a.matrix)
        if np.trace(m).real < 0:
            m = -m
        return m - np.eye(2)

    def weight_and_point(self, x, s):
        if 2 * s <= 1:
            return np.full(np.shape(x), np.inf), np.zeros(np.shape(x), dtype=complex)
        nil = self.nilpotent
        w = self.b.apply(x)
        logdb = self.b.log_abs_derivative(x)
        u = nil[1, 0] * np.asarray(w, dtype=complex) + nil[1, 1]
        inv = 1.0 / u
        al, be = inv.real, inv.imag
        q = self.N + 1 + al
        z2 = zeta(2 * s, q)
        weight = np.exp(s * logdb) * np.abs(u) ** (-2 * s) * (z2 - s * be**2 * zeta(2 * s + 2, q))
        nc = z2 / zeta(2 * s + 1, q) - al
        m00 = 1 + nc * nil[0, 0]
        m01 = nc * nil[0, 1]
        m10 = nc * nil[1, 0]
        m11 = 1 + nc * nil[1, 1]
        pt = (m00 * w + m01) / (m10 * w + m11)
        if np.isrealobj(x) and self.a.is_real and self.b.is_real:
            pt = pt.real
        return weight, pt

    def bound(self, s, domain: DomainRegion | None = None):
        if 2 * s <= 1:
            return np.inf
        if domain is None:
            raise InvalidInputError("a sampling domain is required")
        pts = np.concatenate([np.atleast_1d(domain.boundary_samples(64)), np.atleast_1d(domain.interior_samples(200))])
        w, _ = self.weight_and_point(pts, s)
        return float(np.max(w) * 1.1)


@dataclass(frozen=True, eq=False)
class PowerLawTail(TailGroup):
    """Letters ``a^n o b`` with ``n > N`` for a numeric parabolic branch.

    Derivatives of the omitted letters are extrapolated from the last explicit
    letter with the decay ``n^{-(p+1)/p}``; all their images are placed at
    the image of the last explicit letter.
    """

    last: ConformalMap
    N: int
    p: float
    source_vertex: int = 0
    target_vertex: int = 0

    def weight_and_point(self, x, s):
        g = s * (self.p + 1) / self.p
        if g <= 1:
            return np.full(np.shape(x), np.inf), np.zeros(np.shape(x))
        base = np.exp(s * self.last.log_abs_derivative(x))
        factor = self.N**g * zeta(g, self.N + 1)
        return base * factor, self.last.apply(x)

    def bound(self, s, domain: DomainRegion | None = None):
        g = s * (self.p + 1) / self.p
        if g <= 1:
            return np.inf
        sup = np.exp(s * sup_log_derivative(self.last, domain)) if domain is not None else 1.0
        return float(sup * self.N**g * zeta(g, self.N + 1))


# --------------------------------------------------------------------------
# the system
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Gdms:
    """Conformal graph directed Markov system.

    Parameters
    ----------
    alphabet : Alphabet
    incidence : IncidenceMatrix
    maps : tuple of ConformalMap
        ``maps[e]`` sends ``domains[t(e)]`` into ``domains[i(e)]``.
    domains : tuple of DomainRegion
        One region per vertex.
    iterate_order : int
        Smallest ``q`` for which all ``q``-fold composites contract.
    tails : tuple of TailGroup
        Omitted letters of a truncated infinite alphabet.
    parabolic_words : tuple of Word
        Words declared parabolic in addition to single letters.
    name : str
    """

    alphabet: Alphabet
    incidence: IncidenceMatrix
    maps: tuple
    domains: tuple
    iterate_order: int = 1
    tails: tuple = ()
    parabolic_words: tuple = ()
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "domains", tuple(self.domains))
        if len(self.maps) != self.alphabet.n_edges:
            raise InvalidInputError("every edge needs exactly one map")
        if self.incidence.size != self.alphabet.n_edges:
            raise InvalidInputError("incidence matrix size does not match the alphabet")
        if len(self.domains) != self.alphabet.n_vertices:
            raise InvalidInputError("every vertex needs exactly one domain")
        if not self.incidence.is_compatible(self.alphabet):
            raise InvalidInputError("incidence matrix allows transitions the graph forbids")
        if self.iterate_order < 1:
            raise InvalidInputError("iterate order must be >= 1")

    # structure ---------------------------------------------------------
    @property
    def n_letters(self) -> int:
        return self.alphabet.n_edges

    @property
    def ambient_dim(self) -> int:
        return 1 if all(d.is_real for d in self.domains) else 2

    @property
    def is_maximal(self) -> bool:
        return self.incidence.is_maximal(self.alphabet)

    def domain_of(self, e: int) -> DomainRegion:
        return self.domains[self.alphabet.terminal[e]]

    def codomain_of(self, e: int) -> DomainRegion:
        return self.domains[self.alphabet.initial[e]]

    def domain_of_word(self, word) -> DomainRegion:
        return self.domain_of(word[-1])

    @functools.cached_property
    def sup_logs(self) -> np.ndarray:
        """``log ||phi_e'||`` for each letter."""
        return np.array([sup_log_derivative(m, self.domain_of(e)) for e, m in enumerate(self.maps)])

    @functools.cached_property
    def inf_logs(self) -> np.ndarray:
        return np.array([inf_log_derivative(m, self.domain_of(e)) for e, m in enumerate(self.maps)])

    @property
    def all_moebius(self) -> bool:
        return all(m.as_moebius() is not None for m in self.maps)

    @property
    def all_similarity(self) -> bool:
        return all(isinstance(m, Similarity1D) for m in self.maps)

    def compose(self, word) -> ConformalMap:
        return compose(word, self.maps)

    def word_sup_log(self, word) -> float:
        return sup_log_derivative(self.compose(word), self.domain_of_word(word))

    @functools.cached_property
    def distortion_K(self) -> float:
        from .maps import distortion_constant

        return distortion_constant(self.maps, [self.domain_of(e) for e in range(self.n_letters)])

    @functools.cached_property
    def kappa(self) -> float | None:
        """Contraction bound of the ``q``-fold composites (``None`` if >= 1)."""
        k = contraction_bound(self, self.iterate_order)
        return k if k < 1 else None

    def tail_bound(self, s: float) -> float:
        total = 0.0
        for t in self.tails:
            if isinstance(t, GaussTail):
                total += t.bound(s)
            else:
                total += t.bound(s, self.domains[t.source_vertex])
        return total

    def with_maps(self, maps, **kw) -> "Gdms":
        args = dict(
            alphabet=self.alphabet,
            incidence=self.incidence,
            maps=maps,
            domains=self.domains,
            iterate_order=self.iterate_order,
            tails=self.tails,
            parabolic_words=self.parabolic_words,
            name=self.name,
            meta=dict(self.meta),
        )
        args.update(kw)
        return Gdms(**args)


def contraction_bound(system: Gdms, q: int, max_words: int = 200000) -> float:
    """``max ||phi_w'||`` over admissible words of length ``q``."""
    n = system.n_letters
    if n**q > max_words:
        q = 1
    if q == 1:
        return float(np.exp(np.max(system.sup_logs)))
    worst = -np.inf
    for w in admissible_words(system.incidence, q):
        worst = max(worst, system.word_sup_log(tuple(int(e) for e in w)))
    return float(np.exp(worst))


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass
class CheckResult:
    status: str  # "pass", "fail", "sampled", "exempt" or "unchecked"
    detail: str = ""


@dataclass
class ValidationReport:
    """Per-condition outcome of :func:`validate`."""

    checks: dict
    kappa: float | None
    distortion_K: float
    iterate_order: int

    @property
    def ok(self) -> bool:
        return all(c.status in ("pass", "sampled", "exempt", "unchecked") for c in self.checks.values())

    def status(self, name: str) -> str:
        return self.checks[name].status


def first_level_images(system: Gdms, e: int):
    """Exact image of the domain of ``e``: an interval, a disk or ``None``."""
    m = system.maps[e]
    dom = system.domain_of(e)
    if isinstance(dom, Interval):
        if pole_in_domain(m, dom):
            return None
        if isinstance(m, NumericBranch) or m.as_moebius() is not None:
            ends = m.apply(np.array([dom.lo, dom.hi]))
            return Interval(float(min(ends)), float(max(ends))) if ends[0] != ends[1] else None
        return None
    if isinstance(dom, Disk) and m.as_moebius() is not None:
        c, r, inside = image_circle(m.as_moebius(), dom.center, dom.radius)
        if not bool(inside):
            return None
        return Disk(complex(c), float(r))
    return None


def _overlap(a, b, margin: float) -> bool:
    if isinstance(a, Interval):
        return min(a.hi, b.hi) - max(a.lo, b.lo) > margin
    return abs(a.center - b.center) < a.radius + b.radius - margin


def validate(system: Gdms, margin: float = 1e-7) -> ValidationReport:
    """Check contraction, open set condition, domain nesting and distortion."""
    checks = {}
    # structure
    for e, m in enumerate(system.maps):
        if not isinstance(m, ConformalMap):
            raise InvalidInputError(f"edge {e} has no conformal map")

    # domain nesting (sampled)
    nest_ok = True
    for e, m in enumerate(system.maps):
        dom = system.domain_of(e)
        if pole_in_domain(m, dom):
            nest_ok = False
            break
        pts = np.concatenate([np.atleast_1d(dom.boundary_samples(64)), np.atleast_1d(dom.interior_samples(100))])
        img = m.apply(pts)
        if not np.all(system.codomain_of(e).contains(img, 1e-9)):
            nest_ok = False
            break
    checks["domain_nesting"] = CheckResult("sampled" if nest_ok else "fail")

    # open set condition
    images = [first_level_images(system, e) for e in range(system.n_letters)]
    exact = all(im is not None for im in images)
    osc_ok = True
    if exact:
        for v in range(system.alphabet.n_vertices):
            idx = [e for e in range(system.n_letters) if system.alphabet.initial[e] == v]
            ims = [images[e] for e in idx]
            if ims and isinstance(ims[0], Interval):
                order = sorted(range(len(ims)), key=lambda k: ims[k].lo)
                for k1, k2 in zip(order[:-1], order[1:]):
                    if ims[k2].lo < ims[k1].hi - margin:
                        osc_ok = False
            else:
                for a, b in itertools.combinations(ims, 2):
                    if _overlap(a, b, margin):
                        osc_ok = False
        checks["open_set_condition"] = CheckResult("pass" if osc_ok else "fail")
    else:
        checks["open_set_condition"] = CheckResult("unchecked", "no exact image geometry")

    # contraction at the declared iterate order
    cls = detect_parabolic(system)
    k = contraction_bound(system, system.iterate_order)
    if k < 1:
        checks["contraction"] = CheckResult("pass", f"kappa={k:.6g} at q={system.iterate_order}")
    elif cls.tag == "parabolic":
        checks["contraction"] = CheckResult("exempt", "parabolic letters present")
    else:
        checks["contraction"] = CheckResult("fail", f"kappa={k:.6g} at q={system.iterate_order}")

    K = system.distortion_K
    checks["distortion"] = CheckResult("pass" if np.isfinite(K) else "fail", f"K={K:.6g}")
    checks["cone_condition"] = CheckResult("unchecked", "assumed")
    return ValidationReport(checks, k if k < 1 else None, K, system.iterate_order)


# --------------------------------------------------------------------------
# parabolic detection
# --------------------------------------------------------------------------


@dataclass
class SystemClass:
    """Attracting or parabolic tag with parabolic letters and fixed points."""

    tag: str
    omega: tuple = ()
    fixed_points: dict = field(default_factory=dict)
    words: tuple = ()

    @property
    def is_parabolic(self) -> bool:
        return self.tag == "parabolic"


def _boundary_fixed_points(m: ConformalMap, dom: DomainRegion, tol: float):
    cands = []
    mo = m.as_moebius()
    if mo is not None and not mo.conjugate:
        cands = moebius_fixed_points(mo)
    elif isinstance(dom, Interval):
        cands = [complex(dom.lo), complex(dom.hi)]
    out = []
    for z in cands:
        z = z.real if dom.is_real else z
        if not np.all(dom.contains(z, tol)):
            continue
        if float(dom.distance_to_boundary(z)) > tol:
            continue
        try:
            if abs(complex(m.apply(z)) - z) > 1e-7:
                continue
            if abs(float(m.log_abs_derivative(z))) <= tol:
                out.append(z)
        except Exception:
            continue
    return out


def detect_parabolic(system: Gdms, tol: float = 1e-9) -> SystemClass:
    """Find letters (and declared words) with a neutral boundary fixed point."""
    omega = []
    fps = {}
    for e, m in enumerate(system.maps):
        if not system.incidence.allowed(e, e):
            continue
        pts = _boundary_fixed_points(m, system.domain_of(e), tol)
        if pts:
            omega.append(e)
            fps[e] = pts[0]
    words = []
    for w in system.parabolic_words:
        w = tuple(w)
        pts = _boundary_fixed_points(system.compose(w), system.domain_of_word(w), max(tol, 1e-8))
        if pts:
            words.append(w)
            fps[w] = pts[0]
    if omega or words:
        return SystemClass("parabolic", tuple(omega), fps, tuple(words))
    return SystemClass("attracting")


# --------------------------------------------------------------------------
# periodic multipliers and D-genericity
# --------------------------------------------------------------------------


def periodic_point(system: Gdms, word) -> complex | float:
    """Fixed point of ``phi_word`` in its domain."""
    return fixed_point(system.compose(word), system.domain_of_word(word))


def periodic_multiplier(system: Gdms, word) -> float:
    """``lambda_p(w) = -log |phi_w'(x_w)|``."""
    m = system.compose(word)
    x = fixed_point(m, system.domain_of_word(word))
    return float(-m.log_abs_derivative(x))


def rational_approximation(x: float, cap: int = 10**6, tol: float = 1e-10):
    """Continued-fraction rationality test.

    Accepts ``p/q`` (``q <= cap``) only if ``|x - p/q| <= min(tol, 1e-2 / q^2)``.
    The second term rejects the Dirichlet approximations every real number has.

    Returns
    -------
    Fraction or None
    """
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    y = x
    for _ in range(64):
        a = np.floor(y)
        h0, h1 = h1, int(a) * h1 + h0
        k0, k1 = k1, int(a) * k1 + k0
        if k1 > cap:
            return None
        if abs(x - h1 / k1) <= min(tol, 1e-2 / k1**2):
            return Fraction(h1, k1)
        frac = y - a
        if frac == 0:
            return Fraction(h1, k1)
        y = 1.0 / frac
    return None


@dataclass
class DGenericity:
    """Numerical evidence on the lattice / non-lattice dichotomy."""

    verdict: str  # "lattice", "generic" or "inconclusive"
    generator: float | None
    evidence: str
    ratios: list

    def __str__(self):
        return f"{self.verdict}: {self.evidence}"


def is_D_generic(system: Gdms, word_budget: int = 6, max_values: int = 200,
                 cap: int = 10**6, tol: float = 1e-10) -> DGenericity:
    """Decide whether periodic multipliers generate a cyclic group.

    Multipliers of all periodic words up to length ``word_budget`` are
    collected; the ratio of each to the smallest is tested for rationality.
    """
    vals = []
    for n in range(1, word_budget + 1):
        if system.n_letters**n > 50000:
            break
        for w in periodic_words(system.incidence, n):
            try:
                lam = periodic_multiplier(system, w)
            except Exception:
                continue
            if lam > 1e-9:
                vals.append(lam)
    if not vals:
        return DGenericity("inconclusive", None, "no periodic words found", [])
    vals = np.unique(np.round(np.array(vals), 12))[:max_values]
    base = vals[0]
    ratios = []
    fracs = [Fraction(1)]
    for v in vals[1:]:
        r = v / base
        f = rational_approximation(r, cap, tol)
        ratios.append(r)
        if f is None:
            return DGenericity("generic", None, f"ratio {v:.12g}/{base:.12g} = {r:.15g} is not rational", ratios)
        fracs.append(f)
    num = 0
    den = 1
    for f in fracs:
        num = gcd(num, f.numerator)
        den = den * f.denominator // gcd(den, f.denominator)
    if den > cap:
        return DGenericity("inconclusive", None, "common denominator exceeds cap", ratios)
    g = base * num / den
    return DGenericity("lattice", float(g), f"all {len(vals)} multipliers are integer multiples of {g:.12g}", ratios)

"""Conformal contraction branches on the line and the plane.

Points are numpy arrays, real for one-dimensional systems and complex for
planar ones. Every map supports vectorized evaluation and evaluation of
``log |phi'(x)|``. Similarities and (anti-)Möbius maps share the
:class:`Moebius` representation so that compositions stay exact matrix
products; monotone branches without a closed form use :class:`NumericBranch`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError, NoConvergenceError, SingularMapError

DOMAIN_SLACK = 1e-9


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


class DomainRegion:
    """Compact (or half-plane) region in the line or the plane."""

    kind = "abstract"
    is_real = False

    def contains(self, z, slack: float = DOMAIN_SLACK):
        raise NotImplementedError

    def boundary_samples(self, n: int = 64) -> np.ndarray:
        raise NotImplementedError

    def interior_samples(self, n: int = 400) -> np.ndarray:
        raise NotImplementedError

    def distance_to_boundary(self, z) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Interval(DomainRegion):
    """Closed real interval ``[lo, hi]``."""

    lo: float
    hi: float
    kind = "interval"
    is_real = True

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInputError("interval needs lo < hi")

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameter(self) -> float:
        return self.hi - self.lo

    def contains(self, z, slack: float = DOMAIN_SLACK):
        z = np.asarray(z)
        return (np.abs(np.imag(z)) <= slack) & (np.real(z) >= self.lo - slack) & (np.real(z) <= self.hi + slack)

    def boundary_samples(self, n: int = 2) -> np.ndarray:
        return np.array([self.lo, self.hi])

    def interior_samples(self, n: int = 400) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n)

    def distance_to_boundary(self, z) -> np.ndarray:
        z = np.real(np.asarray(z))
        return np.minimum(np.abs(z - self.lo), np.abs(z - self.hi))


@dataclass(frozen=True)
class Disk(DomainRegion):
    """Closed disk with complex ``center`` and positive ``radius``."""

    center: complex
    radius: float
    kind = "disk"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("disk radius must be positive")
        object.__setattr__(self, "center", complex(self.center))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, z, slack: float = DOMAIN_SLACK):
        return np.abs(np.asarray(z) - self.center) <= self.radius + slack

    def boundary_samples(self, n: int = 64) -> np.ndarray:
        t = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * t)

    def interior_samples(self, n: int = 400) -> np.ndarray:
        # sunflower lattice: deterministic and evenly spread
        k = np.arange(n) + 0.5
        r = self.radius * np.sqrt(k / n)
        th = np.pi * (3 - np.sqrt(5)) * k
        return self.center + r * np.exp(1j * th)

    def distance_to_boundary(self, z) -> np.ndarray:
        return np.abs(np.abs(np.asarray(z) - self.center) - self.radius)


@dataclass(frozen=True)
class HalfPlane(DomainRegion):
    """Closed half-plane ``{z : Re((z - point) * conj(normal)) >= 0}``."""

    point: complex
    normal: complex
    kind = "half-plane"

    def __post_init__(self):
        if self.normal == 0:
            raise InvalidInputError("half-plane normal must be nonzero")
        object.__setattr__(self, "point", complex(self.point))
        object.__setattr__(self, "normal", complex(self.normal) / abs(self.normal))

    @property
    def center(self) -> complex:
        return self.point + self.normal

    @property
    def diameter(self) -> float:
        return np.inf

    def signed_distance(self, z) -> np.ndarray:
        return np.real((np.asarray(z) - self.point) * np.conj(self.normal))

    def contains(self, z, slack: float = DOMAIN_SLACK):
        return self.signed_distance(z) >= -slack

    def boundary_samples(self, n: int = 64) -> np.ndarray:
        t = np.tan(np.linspace(-1.5, 1.5, n))
        return self.point + 1j * self.normal * t

    def interior_samples(self, n: int = 400) -> np.ndarray:
        m = int(np.ceil(np.sqrt(n)))
        u, v = np.meshgrid(np.tan(np.linspace(-1.4, 1.4, m)), np.tan(np.linspace(0, 1.4, m)))
        return (self.point + self.normal * (v + 1j * u)).ravel()

    def distance_to_boundary(self, z) -> np.ndarray:
        return np.abs(self.signed_distance(z))


def domain_center(domain: DomainRegion):
    return domain.center


# --------------------------------------------------------------------------
# maps
# --------------------------------------------------------------------------


class ConformalMap:
    """Abstract conformal branch."""

    kind = "abstract"

    def apply(self, x):
        raise NotImplementedError

    def log_abs_derivative(self, x):
        raise NotImplementedError

    def apply_log(self, x):
        """``(phi(x), log |phi'(x)|)`` in one call."""
        return self.apply(x), self.log_abs_derivative(x)

    def as_moebius(self) -> "Moebius | None":
        return None

    def __call__(self, x):
        return self.apply(x)


def _normalize(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0:
        raise SingularMapError("matrix is singular")
    return m / np.sqrt(complex(det))


@dataclass(frozen=True, eq=False)
class Moebius(ConformalMap):
    """``z -> (a w + b) / (c w + d)`` with ``w = z`` or ``w = conj(z)``.

    The matrix is stored with unit determinant. ``conjugate=True`` gives the
    orientation-reversing maps used for circle inversions.

    Parameters
    ----------
    matrix : array_like, shape (2, 2)
    conjugate : bool
    """

    matrix: np.ndarray = field(repr=False)
    conjugate: bool = False
    normalize: bool = True

    kind = "moebius"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex).reshape(2, 2)
        if self.normalize:
            m = _normalize(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def is_anti(self) -> bool:
        return bool(self.conjugate)

    @property
    def is_real(self) -> bool:
        """True when the map preserves the real line as a set of real numbers."""
        m = self.matrix
        # unit-determinant normalization may scale a real matrix by i
        k = m.ravel()[np.argmax(np.abs(m.ravel()))]
        r = m / (k / abs(k))
        return bool(np.allclose(r.imag, 0, atol=1e-14))

    def as_moebius(self) -> "Moebius":
        return self

    def _w(self, x):
        z = np.asarray(x, dtype=complex)
        return np.conj(z) if self.conjugate else z

    def apply(self, x):
        realin = np.isrealobj(x)
        (a, b), (c, d) = self.matrix
        w = self._w(x)
        den = c * w + d
        if np.any(den == 0):
            raise SingularMapError("evaluation at a pole")
        out = (a * w + b) / den
        if realin:
            return out.real
        return out

    def log_abs_derivative(self, x):
        c, d = self.matrix[1]
        den = np.abs(c * self._w(x) + d)
        if np.any(den == 0):
            raise SingularMapError("evaluation at a pole")
        return -2.0 * np.log(den)

    @property
    def pole(self) -> complex:
        c, d = self.matrix[1]
        if c == 0:
            return complex(np.inf)
        p = -d / c
        return complex(np.conj(p)) if self.conjugate else complex(p)

    def inverse(self) -> "Moebius":
        (a, b), (c, d) = self.matrix
        inv = np.array([[d, -b], [-c, a]])
        if self.conjugate:
            # (M conj)^-1 = conj(M^-1) o conj
            inv = np.conj(inv)
        return Moebius(inv, self.conjugate)

    def trace(self) -> complex:
        return complex(self.matrix[0, 0] + self.matrix[1, 1])


def similarity(ratio: float, shift: float = 0.0) -> Moebius:
    """Real similarity ``x -> ratio * x + shift`` as an affine Möbius map."""
    if ratio == 0:
        raise InvalidInputError("similarity ratio must be nonzero")
    return Similarity1D(ratio, shift)


class Similarity1D(Moebius):
    """Affine map ``x -> r x + c`` of the line."""

    kind = "similarity1D"

    def __init__(self, ratio: float, shift: float = 0.0):
        super().__init__(np.array([[ratio, shift], [0.0, 1.0]]), False)
        object.__setattr__(self, "ratio", float(ratio))
        object.__setattr__(self, "shift", float(shift))

    def apply(self, x):
        return self.ratio * np.asarray(x) + self.shift

    def log_abs_derivative(self, x):
        return np.full(np.shape(x), np.log(abs(self.ratio)))

    def __repr__(self):
        return f"Similarity1D(ratio={self.ratio!r}, shift={self.shift!r})"


def moebius_compose(m1: Moebius, m2: Moebius) -> Moebius:
    """Exact product ``m1 o m2`` with conjugation parity."""
    right = np.conj(m2.matrix) if m1.conjugate else m2.matrix
    # both factors have unit determinant; renormalizing would reintroduce
    # the cancellation error of det for long words
    return Moebius(m1.matrix @ right, m1.conjugate ^ m2.conjugate, normalize=False)


def inversion(center: complex, radius: float) -> Moebius:
    """Inversion in the circle ``|z - center| = radius``."""
    c = complex(center)
    return Moebius(np.array([[c, radius**2 - abs(c) ** 2], [1.0, -np.conj(c)]]), True)


@dataclass(frozen=True, eq=False)
class NumericBranch(ConformalMap):
    """Inverse branch of a monotone map ``f`` on ``[lo, hi]``.

    ``apply(y)`` solves ``f(x) = y`` with ``x`` in ``[lo, hi]`` by bisection
    polished with Newton steps.

    Parameters
    ----------
    forward, forward_derivative : callable
        Vectorized ``f`` and ``f'``.
    lo, hi : float
        Bracket on which ``f`` is monotone.
    tol : float
        Absolute tolerance on the preimage.
    """

    forward: Callable
    forward_derivative: Callable
    lo: float
    hi: float
    tol: float = 1e-13
    name: str = "numeric"

    kind = "numeric_branch"

    def _apply_scalar(self, y: float) -> float:
        f, df = self.forward, self.forward_derivative
        lo, hi = self.lo, self.hi
        increasing = float(f(hi)) > float(f(lo))
        x = 0.5 * (lo + hi)
        for _ in range(200):
            fx = float(f(x)) - y
            if (fx > 0) == increasing:
                hi = x
            else:
                lo = x
            step = fx / float(df(x))
            x_new = x - step
            if not lo <= x_new <= hi:
                x_new = 0.5 * (lo + hi)
            if abs(x_new - x) <= self.tol:
                return x_new
            x = x_new
        raise NoConvergenceError("numeric branch inversion did not converge")

    def apply(self, y):
        if np.ndim(y) == 0:
            return np.float64(self._apply_scalar(float(y)))
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, self.lo)
        hi = np.full(y.shape, self.hi)
        increasing = self.forward(self.hi) > self.forward(self.lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = self.forward(mid) - y
            left = (fm > 0) == increasing
            hi = np.where(left, mid, hi)
            lo = np.where(left, lo, mid)
            if np.max(hi - lo, initial=0.0) < 1e-3:
                break
        x = 0.5 * (lo + hi)
        for _ in range(60):
            step = (self.forward(x) - y) / self.forward_derivative(x)
            x_new = np.clip(x - step, self.lo, self.hi)
            done = np.max(np.abs(x_new - x), initial=0.0) <= self.tol
            x = x_new
            if done:
                break
        else:
            raise NoConvergenceError("numeric branch inversion did not converge")
        return x

    def log_abs_derivative(self, y):
        return self.apply_log(y)[1]

    def apply_log(self, y):
        x = self.apply(y)
        return x, -np.log(np.abs(self.forward_derivative(x)))


@dataclass(frozen=True, eq=False)
class Composite(ConformalMap):
    """``maps[0] o maps[1] o ... o maps[-1]`` evaluated point by point."""

    maps: tuple

    kind = "composite"

    def apply(self, x):
        for m in reversed(self.maps):
            x = m.apply(x)
        return x

    def log_abs_derivative(self, x):
        return self.apply_log(x)[1]

    def apply_log(self, x):
        total = np.zeros(np.shape(x))
        for m in reversed(self.maps):
            x, lg = m.apply_log(x)
            total = total + lg
        return x, total


class PowerLadder:
    """Shared evaluation of ``a^n o b`` for ``n = 0..N``.

    One pass computes every rung at a point set; the last few point sets
    are cached so that the rungs of one ladder reuse the work.
    """

    def __init__(self, a: ConformalMap, b: ConformalMap, N: int, cache_size: int = 4):
        self.a, self.b, self.N = a, b, N
        self._cache: dict = {}
        self._cache_size = cache_size

    def evaluate(self, x):
        x = np.asarray(x)
        key = (x.dtype.str, x.shape, x.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        imgs = np.empty((self.N + 1,) + x.shape, dtype=x.dtype)
        logs = np.empty((self.N + 1,) + x.shape)
        y, lg = self.b.apply_log(x)
        imgs[0], logs[0] = y, np.real(lg)
        for n in range(1, self.N + 1):
            y, step = self.a.apply_log(y)
            lg = lg + step
            imgs[n], logs[n] = y, np.real(lg)
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = (imgs, logs)
        return imgs, logs


@dataclass(frozen=True, eq=False)
class LadderRung(ConformalMap):
    """The map ``a^n o b`` read off a :class:`PowerLadder`."""

    ladder: PowerLadder
    n: int

    kind = "composite"

    def apply(self, x):
        return self.apply_log(x)[0]

    def log_abs_derivative(self, x):
        return self.apply_log(x)[1]

    def apply_log(self, x):
        if np.size(x) < 8:
            # few points: walking one rung beats filling the whole ladder
            y, lg = self.ladder.b.apply_log(x)
            for _ in range(self.n):
                y, step = self.ladder.a.apply_log(y)
                lg = lg + step
            return y, np.real(lg)
        imgs, logs = self.ladder.evaluate(x)
        return imgs[self.n], logs[self.n]


class Identity(Moebius):
    kind = "identity"

    def __init__(self):
        super().__init__(np.eye(2), False)


def compose(word: Sequence[int], maps: Sequence[ConformalMap]) -> ConformalMap:
    """Composite ``phi_{w_1} o ... o phi_{w_n}``.

    Möbius and similarity factors are multiplied exactly; any numeric factor
    produces a :class:`Composite`. The empty word gives the identity.
    """
    if len(word) == 0:
        return Identity()
    parts = [maps[e] for e in word]
    if all(isinstance(p, Similarity1D) for p in parts):
        r, c = 1.0, 0.0
        for p in parts:
            r, c = r * p.ratio, c + r * p.shift
        return Similarity1D(r, c)
    if all(p.as_moebius() is not None for p in parts):
        out = parts[0].as_moebius()
        for p in parts[1:]:
            out = moebius_compose(out, p.as_moebius())
        return out
    return Composite(tuple(parts))


def power(m: ConformalMap, n: int) -> ConformalMap:
    return compose((0,) * n, [m])


# --------------------------------------------------------------------------
# extremal derivative analysis
# --------------------------------------------------------------------------


def _den_range(m: Moebius, domain: DomainRegion) -> tuple[float, float]:
    """Min and max of ``|c w + d|`` for ``w`` ranging over the (conjugated) domain."""
    c, d = m.matrix[1]
    if isinstance(domain, Interval):
        if c == 0:
            return abs(d), abs(d)
        ends = np.abs(c * np.array([domain.lo, domain.hi]) + d)
        # |c x + d|^2 is a convex quadratic in real x
        x = -np.real(np.conj(c) * d) / abs(c) ** 2
        inner = abs(c * x + d) if domain.lo <= x <= domain.hi else ends.min()
        return float(min(inner, ends.min())), float(ends.max())
    if isinstance(domain, Disk):
        center = np.conj(domain.center) if m.conjugate else domain.center
        if c == 0:
            return abs(d), abs(d)
        dist = abs(center + d / c)
        return abs(c) * max(0.0, dist - domain.radius), abs(c) * (dist + domain.radius)
    if isinstance(domain, HalfPlane):
        if c == 0:
            return abs(d), abs(d)
        pole = m.pole
        h = domain
        inside = h.signed_distance(pole) >= 0
        dist = 0.0 if inside else abs(h.signed_distance(pole))
        return abs(c) * dist, np.inf
    raise InvalidInputError(f"unsupported domain {domain!r}")


def pole_in_domain(m: ConformalMap, domain: DomainRegion) -> bool:
    mo = m.as_moebius()
    if mo is None:
        return False
    return _den_range(mo, domain)[0] == 0.0


def sup_log_derivative(m: ConformalMap, domain: DomainRegion) -> float:
    """Upper bound on ``log |m'|`` over ``domain``.

    Exact for similarities and (anti-)Möbius maps; grid maximum plus a
    Lipschitz pad for numeric or composite branches.
    """
    if isinstance(m, Similarity1D):
        return float(np.log(abs(m.ratio)))
    mo = m.as_moebius()
    if mo is not None:
        lo, _ = _den_range(mo, domain)
        return np.inf if lo == 0 else float(-2.0 * np.log(lo))
    return _grid_extreme(m, domain, np.max)


def inf_log_derivative(m: ConformalMap, domain: DomainRegion) -> float:
    """Lower bound on ``log |m'|`` over ``domain``."""
    if isinstance(m, Similarity1D):
        return float(np.log(abs(m.ratio)))
    mo = m.as_moebius()
    if mo is not None:
        _, hi = _den_range(mo, domain)
        return -np.inf if not np.isfinite(hi) else float(-2.0 * np.log(hi))
    return _grid_extreme(m, domain, np.min)


def _grid_extreme(m: ConformalMap, domain: DomainRegion, pick) -> float:
    if isinstance(domain, Interval):
        x = np.linspace(domain.lo, domain.hi, 2001)
        v = m.log_abs_derivative(x)
        pad = np.max(np.abs(np.diff(v)))
    else:
        x = np.concatenate([domain.interior_samples(4000), domain.boundary_samples(400)])
        v = m.log_abs_derivative(x)
        pad = 0.0
    return float(pick(v) + (pad if pick is np.max else -pad))


def fixed_point(m: ConformalMap, domain: DomainRegion, tol: float = 1e-12, max_iter: int = 100000):
    """Fixed point of ``m`` inside ``domain``.

    Similarities and orientation-preserving Möbius maps use closed forms,
    other maps of an interval Brent's method on ``m(x) - x`` and the rest
    Banach iteration from the domain center.
    """
    if isinstance(m, Similarity1D):
        if m.ratio == 1:
            raise NoConvergenceError("translation has no fixed point")
        return m.shift / (1 - m.ratio)
    if isinstance(m, Moebius) and not m.conjugate:
        roots = moebius_fixed_points(m)
        if roots:
            dist = [_outside(domain, r) for r in roots]
            r = roots[int(np.argmin(dist))]
            if min(dist) <= 1e-7:
                return r.real if domain.is_real else r
    if isinstance(domain, Interval):
        # m maps the interval into itself, so m(x) - x changes sign on it
        g_lo = float(m.apply(domain.lo)) - domain.lo
        g_hi = float(m.apply(domain.hi)) - domain.hi
        if g_lo == 0:
            return domain.lo
        if g_hi == 0:
            return domain.hi
        if g_lo > 0 > g_hi:
            return brentq(lambda x: float(m.apply(x)) - x, domain.lo, domain.hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    x = domain.center
    for _ in range(max_iter):
        y = m.apply(x)
        if abs(y - x) <= tol:
            return y
        x = y
    raise NoConvergenceError("fixed point iteration hit the iteration cap")


def _outside(domain: DomainRegion, z: complex) -> float:
    if isinstance(domain, Interval):
        return max(abs(z.imag), domain.lo - z.real, z.real - domain.hi, 0.0)
    if isinstance(domain, Disk):
        return max(abs(z - domain.center) - domain.radius, 0.0)
    return max(-float(domain.signed_distance(z)), 0.0)


def moebius_fixed_points(m: Moebius) -> list:
    """Fixed points of an orientation-preserving Möbius map (finite ones)."""
    (a, b), (c, d) = m.matrix
    if abs(c) < 1e-15:
        if abs(d - a) < 1e-15:
            return []
        return [complex(b / (d - a))]
    if abs((a + d) ** 2 - 4) < 1e-12:
        # parabolic: the double root would otherwise split by ~sqrt(eps)
        return [complex((a - d) / (2 * c))]
    disc = np.sqrt(complex((d - a) ** 2 + 4 * b * c))
    r1 = ((a - d) + disc) / (2 * c)
    r2 = ((a - d) - disc) / (2 * c)
    return [complex(r1), complex(r2)]


def distortion_constant(maps: Sequence[ConformalMap], domains, pad: float = 0.1) -> float:
    """Empirical bounded-distortion constant.

    ``K = raw ** (1 + pad)`` where ``raw`` is the largest ratio
    ``sup |phi'| / inf |phi'|`` over the given maps. The pad is applied on the
    logarithmic scale so that constant-derivative systems keep ``K = 1``.

    Parameters
    ----------
    maps : sequence of ConformalMap
    domains : DomainRegion or sequence of DomainRegion
        Domain of each map (a single region is shared).
    """
    if isinstance(domains, DomainRegion):
        domains = [domains] * len(maps)
    worst = 0.0
    for m, dom in zip(maps, domains):
        hi = sup_log_derivative(m, dom)
        lo = inf_log_derivative(m, dom)
        worst = max(worst, hi - lo)
    return float(np.exp(worst * (1 + pad)))


def apply_checked(m: ConformalMap, x, domain: DomainRegion):
    """``apply`` with the outward-slack domain precondition enforced."""
    if not np.all(domain.contains(x)):
        raise InvalidInputError("point outside the map's domain")
    if pole_in_domain(m, domain):
        raise SingularMapError("pole inside the domain")
    return m.apply(x)


def image_circle(m: Moebius, center, radius):
    """Image of the circle ``|z - center| = radius`` under a Möbius map.

    Vectorized over ``center`` and ``radius``. Returns ``(center, radius,
    keeps_inside)``; ``keeps_inside`` is True where the pole lies outside the
    disk, in which case the disk maps onto the image disk.
    """
    center = np.asarray(center, dtype=complex)
    radius = np.asarray(radius, dtype=float)
    if m.conjugate:
        center = np.conj(center)
    (a, b), (c, d) = m.matrix
    # written in terms of q = c z0 + d so that c -> 0 degrades gracefully
    q = c * center + d
    den = np.abs(q) ** 2 - np.abs(c) ** 2 * radius**2
    if np.any(den == 0):
        raise SingularMapError("circle passes through the pole")
    new_center = ((a * center + b) * np.conj(q) - a * np.conj(c) * radius**2) / den
    new_radius = np.abs(a * d - b * c) * radius / np.abs(den)
    return new_center, new_radius, den > 0

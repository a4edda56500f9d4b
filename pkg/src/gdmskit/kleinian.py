"""Schottky groups and Apollonian packings built from circle data."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, InvalidGeometryError, InvalidInputError
from .gdms import Gdms
from .maps import Disk, HalfPlane, Moebius, image_circle, inversion, moebius_compose
from .symbolic import Alphabet, IncidenceMatrix

GEOM_TOL = 1e-9


@dataclass(frozen=True)
class Circle:
    """Circle with complex ``center`` and positive ``radius``.

    ``orientation`` records which complementary region is meant as the disk:
    ``interior`` (bounded side) or ``exterior``.
    """

    center: complex
    radius: float
    orientation: str = "interior"

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidGeometryError("circle radius must be finite and positive")
        if self.orientation not in ("interior", "exterior"):
            raise InvalidGeometryError("orientation must be 'interior' or 'exterior'")
        object.__setattr__(self, "center", complex(self.center))

    @property
    def curvature(self) -> float:
        k = 1.0 / self.radius
        return -k if self.orientation == "exterior" else k

    def disk(self) -> Disk:
        return Disk(self.center, self.radius)

    def inversion(self) -> Moebius:
        return inversion(self.center, self.radius)

    def points(self, n: int = 64) -> np.ndarray:
        t = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * t)


@dataclass(frozen=True)
class Line:
    """Straight line through ``point`` with direction ``direction``.

    Plays the role of a circle through infinity; ``side`` is a unit normal
    selecting the closed half-plane used as a domain.
    """

    point: complex
    direction: complex
    side: complex = 0j

    def __post_init__(self):
        if self.direction == 0:
            raise InvalidGeometryError("line direction must be nonzero")
        u = complex(self.direction) / abs(self.direction)
        object.__setattr__(self, "point", complex(self.point))
        object.__setattr__(self, "direction", u)
        object.__setattr__(self, "side", complex(self.side) if self.side else 1j * u)

    def oriented_away_from(self, z: complex) -> "Line":
        n = 1j * self.direction
        if np.real((z - self.point) * np.conj(n)) > 0:
            n = -n
        return Line(self.point, self.direction, n)

    def disk(self) -> HalfPlane:
        return HalfPlane(self.point, self.side)

    def inversion(self) -> Moebius:
        """Reflection ``z -> point + u^2 conj(z - point)``."""
        u2 = self.direction**2
        return Moebius(np.array([[u2, self.point - u2 * np.conj(self.point)], [0.0, 1.0]]), True)

    def points(self, n: int = 64) -> np.ndarray:
        t = np.tan(np.linspace(-1.4, 1.4, n))
        return self.point + self.direction * t

    def distance(self, z) -> np.ndarray:
        return np.abs(np.real((np.asarray(z) - self.point) * np.conj(1j * self.direction)))


def generalized_circle_through(z1: complex, z2: complex, z3: complex, tol: float = 1e-12):
    """Circle through three points, or the line through them when collinear."""
    a, b, c = complex(z1), complex(z2), complex(z3)
    cross = ((b - a).conjugate() * (c - a)).imag
    if abs(cross) <= tol * max(1.0, abs(b - a) * abs(c - a)):
        if abs(b - a) < tol:
            raise InvalidGeometryError("coincident points")
        return Line(a, b - a)
    return circle_through(a, b, c)


def circle_through(z1: complex, z2: complex, z3: complex) -> Circle:
    """Circumcircle of three points."""
    a, b, c = complex(z1), complex(z2), complex(z3)
    d = 2 * (a.real * (b.imag - c.imag) + b.real * (c.imag - a.imag) + c.real * (a.imag - b.imag))
    if abs(d) < 1e-14:
        raise InvalidGeometryError("collinear points do not determine a circle")
    ux = (abs(a) ** 2 * (b.imag - c.imag) + abs(b) ** 2 * (c.imag - a.imag) + abs(c) ** 2 * (a.imag - b.imag)) / d
    uy = (abs(a) ** 2 * (c.real - b.real) + abs(b) ** 2 * (a.real - c.real) + abs(c) ** 2 * (b.real - a.real)) / d
    center = complex(ux, uy)
    return Circle(center, abs(a - center))


def tangency_point(c1, c2, tol: float = GEOM_TOL) -> complex:
    """Point of tangency of two tangent circles (internal or external) or of a circle and a line."""
    if isinstance(c1, Line):
        c1, c2 = c2, c1
    if isinstance(c2, Line):
        n = 1j * c2.direction
        foot = c1.center - np.real((c1.center - c2.point) * np.conj(n)) * n
        if abs(abs(foot - c1.center) - c1.radius) > tol:
            raise InvalidGeometryError("circle and line are not tangent")
        return complex(foot)
    d = abs(c2.center - c1.center)
    if abs(d - (c1.radius + c2.radius)) <= tol:
        return c1.center + c1.radius * (c2.center - c1.center) / d
    if abs(d - abs(c1.radius - c2.radius)) <= tol and d > 0:
        u = (c2.center - c1.center) / d
        big, small = (c1, c2) if c1.radius > c2.radius else (c2, c1)
        sgn = 1 if big is c1 else -1
        return big.center + sgn * big.radius * u
    raise InvalidGeometryError(f"circles are not tangent (distance residual {min(abs(d - c1.radius - c2.radius), abs(d - abs(c1.radius - c2.radius))):.3g})")


def moebius_from_points(src, dst) -> Moebius:
    """Unique Möbius map sending three points ``src`` to ``dst``."""

    def to_std(z1, z2, z3):
        return np.array([[z2 - z3, -z1 * (z2 - z3)], [z2 - z1, -z3 * (z2 - z1)]], dtype=complex)

    A = to_std(*src)
    B = to_std(*dst)
    return Moebius(np.linalg.inv(B) @ A)


def image_of_circle(m: Moebius, c: Circle) -> Circle:
    cc, r, _ = image_circle(m, c.center, c.radius)
    return Circle(complex(cc), float(r))


# --------------------------------------------------------------------------
# Schottky groups
# --------------------------------------------------------------------------


@dataclass
class SchottkyData:
    """Balls and pairing maps of a (generalized) Schottky group.

    Parameters
    ----------
    balls : dict
        ``j -> Circle``; the closed disk of each circle is ``B_j``.
    generators : dict
        ``j -> map`` with ``g_j(complement of B_{inv(j)}) = closure(B_j)``.
    inverse : dict
        ``j -> inv(j)``; for reflection groups ``inv(j) = j``.
    tangency_allowed : bool
    """

    balls: dict
    generators: dict
    inverse: dict
    tangency_allowed: bool = False

    @classmethod
    def from_bisector_pairs(cls, circles: dict, tangency_allowed: bool = False) -> "SchottkyData":
        """Pair ``C_j`` with ``C_{-j}`` (equal radii) by
        ``g_j = inversion(C_j) o reflection in the perpendicular bisector``."""
        gens = {}
        for j in [k for k in circles if k > 0]:
            a, b = circles[j], circles[-j]
            if abs(a.radius - b.radius) > GEOM_TOL:
                raise InvalidGeometryError("bisector pairing needs equal radii")
            mid = 0.5 * (a.center + b.center)
            u = (a.center - b.center) / abs(a.center - b.center)
            # reflection in the line through mid perpendicular to u
            refl = Moebius(np.array([[-u / np.conj(u), mid + u / np.conj(u) * np.conj(mid)], [0, 1]]), True)
            g = moebius_compose(a.inversion(), refl)
            gens[j] = g
            gens[-j] = g.inverse()
        inv = {j: -j for j in circles}
        return cls(dict(circles), gens, inv, tangency_allowed)

    @classmethod
    def reflection_group(cls, circles: dict, tangency_allowed: bool = False) -> "SchottkyData":
        """Group generated by inversions in the given circles."""
        gens = {j: c.inversion() for j, c in circles.items()}
        return cls(dict(circles), gens, {j: j for j in circles}, tangency_allowed)

    def check(self, tol: float = GEOM_TOL) -> None:
        """Verify disjointness and the pairing condition on boundary samples."""
        keys = list(self.balls)
        for a, b in itertools.combinations(keys, 2):
            gap = _gap(self.balls[a], self.balls[b])
            if gap < -tol:
                raise InvalidGeometryError(f"balls {a} and {b} overlap")
            if gap <= tol and not self.tangency_allowed:
                raise InvalidGeometryError(f"balls {a} and {b} are tangent but tangency is not allowed")
        for j, g in self.generators.items():
            src = self.balls[self.inverse[j]]
            dst = self.balls[j]
            img = g.apply(src.points(32))
            if _boundary_residual(dst, img) > 1e-7:
                raise InvalidGeometryError(f"generator {j} does not map circle {self.inverse[j]} onto circle {j}")
            if isinstance(src, Line):
                continue
            probes = (src.center + 2.5 * src.radius + 0j, src.center - 2.5 * src.radius, src.center + 2.5j * src.radius)
            far = [p for p in probes if not any(np.all(c.disk().contains(p, 0.0)) for c in self.balls.values())]
            for p in far:
                if not np.all(dst.disk().contains(g.apply(p), 1e-9)):
                    raise InvalidGeometryError(f"generator {j} does not map the exterior of B_{self.inverse[j]} into B_{j}")


def _gap(a, b) -> float:
    """Separation of two closed disks or a disk and a half-plane (negative when overlapping)."""
    if isinstance(a, Line) and isinstance(b, Line):
        return -np.inf
    if isinstance(a, Line):
        a, b = b, a
    if isinstance(b, Line):
        return float(-b.disk().signed_distance(a.center) - a.radius)
    return abs(a.center - b.center) - a.radius - b.radius


def _boundary_residual(obj, pts) -> float:
    if isinstance(obj, Line):
        return float(np.max(obj.distance(pts)))
    return float(np.max(np.abs(np.abs(pts - obj.center) - obj.radius)) / max(1.0, obj.radius))


def build_schottky_gdms(data: SchottkyData, name: str = "schottky") -> Gdms:
    """Pair-alphabet system: letters ``(a, b)`` with ``b != inv(a)``,
    ``A[(a,b),(c,d)] = 1`` iff ``b == c``, ``phi_(a,b) = g_a`` on ``B_b``.

    Length-two words whose composite has a neutral fixed point on a domain
    boundary are declared parabolic.
    """
    data.check()
    keys = sorted(data.balls)
    vid = {k: i for i, k in enumerate(keys)}
    letters = [(a, b) for a in keys for b in keys if b != data.inverse[a]]
    alph = Alphabet(tuple(vid[a] for a, _ in letters), tuple(vid[b] for _, b in letters), len(keys),
                    tuple(f"{a},{b}" for a, b in letters))
    inc = IncidenceMatrix.maximal(alph)
    maps = [data.generators[a] for a, _ in letters]
    domains = [data.balls[k].disk() for k in keys]
    system = Gdms(alph, inc, maps, domains, name=name, meta={"letters": letters})
    if data.tangency_allowed:
        from .gdms import _boundary_fixed_points

        words = []
        for x, y in itertools.product(range(len(letters)), repeat=2):
            if not inc.allowed(x, y):
                continue
            m = system.compose((x, y))
            if _boundary_fixed_points(m, system.domain_of(y), 1e-8):
                words.append((x, y))
        system = system.with_maps(maps, parabolic_words=tuple(words))
    return system


# --------------------------------------------------------------------------
# Apollonian packings
# --------------------------------------------------------------------------


def descartes_fourth(c1: Circle, c2: Circle, c3: Circle, exclude: Circle | None = None) -> Circle:
    """Circle tangent to three mutually tangent circles (complex Descartes).

    Returns the solution different from ``exclude`` (or the smaller one).
    """
    ks = [c.curvature for c in (c1, c2, c3)]
    zs = [c.center for c in (c1, c2, c3)]
    s = sum(ks)
    q = ks[0] * ks[1] + ks[1] * ks[2] + ks[2] * ks[0]
    cand = []
    for sk in (1, -1):
        k4 = s + sk * 2 * np.sqrt(max(q, 0.0))
        kz = [k * z for k, z in zip(ks, zs)]
        S = sum(kz)
        Q = kz[0] * kz[1] + kz[1] * kz[2] + kz[2] * kz[0]
        for sz in (1, -1):
            if abs(k4) < 1e-14:
                continue
            z4 = (S + sz * 2 * np.sqrt(Q + 0j)) / k4
            cand.append(Circle(z4, abs(1 / k4), "interior" if k4 > 0 else "exterior"))
    good = []
    for c in cand:
        ok = all(_tangent(c, o) for o in (c1, c2, c3))
        if ok and not (exclude is not None and _same(c, exclude)):
            good.append(c)
    if not good:
        raise InvalidGeometryError("no fourth tangent circle found")
    good.sort(key=lambda c: c.radius)
    return good[0]


def _same(a: Circle, b: Circle, tol: float = 1e-7) -> bool:
    return abs(a.center - b.center) < tol and abs(a.radius - b.radius) < tol


def _tangent(a: Circle, b: Circle, tol: float = 1e-7) -> bool:
    d = abs(a.center - b.center)
    return abs(d - a.radius - b.radius) < tol or abs(d - abs(a.radius - b.radius)) < tol


def _check_pair_tangent(a: Circle, b: Circle, tol: float = GEOM_TOL) -> None:
    d = abs(a.center - b.center)
    if a.orientation == "exterior" or b.orientation == "exterior":
        res = abs(d - abs(a.radius - b.radius))
    else:
        res = abs(d - (a.radius + b.radius))
    if res > tol:
        raise InvalidGeometryError(f"circles are not tangent (residual {res:.3g})")


@dataclass
class TriangleIFS:
    """Three parabolic Möbius maps of a curvilinear triangle and the seed circle."""

    maps: tuple
    seed: Circle
    vertices: tuple
    seed_tangency: tuple
    domain: Disk
    sides: tuple

    def gdms(self, name: str = "apollonian-triangle") -> Gdms:
        alph = Alphabet.single_vertex(3)
        return Gdms(alph, IncidenceMatrix.full(3), self.maps, (self.domain,), name=name)


def _interstice_maps(c1: Circle, c2: Circle, c3: Circle, seed: Circle):
    circles = (c1, c2, c3)
    # x_i: tangency point of the two circles other than C_i
    x = [tangency_point(circles[(i + 1) % 3], circles[(i + 2) % 3]) for i in range(3)]
    t = [tangency_point(seed, circles[i]) for i in range(3)]
    maps = []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        # x_k lies on C_i and C_j; it goes to the seed's tangency with C_j
        maps.append(moebius_from_points((x[i], x[k], x[j]), (x[i], t[j], t[k])))
    return tuple(maps), tuple(x), tuple(t)


def apollonian_triangle_ifs(c1: Circle, c2: Circle, c3: Circle, seed: Circle | None = None) -> TriangleIFS:
    """Parabolic triangle IFS of three mutually tangent circles.

    ``phi_i`` fixes the vertex ``x_i`` opposite to ``C_i`` and sends the other
    two vertices to the tangency points of the inscribed circle ``C_0`` with
    ``C_j`` and ``C_k``. The domain is the disk bounded by the circle through
    the three vertices.
    """
    for a, b in itertools.combinations((c1, c2, c3), 2):
        _check_pair_tangent(a, b)
    if seed is None:
        seed = descartes_fourth(c1, c2, c3)
    maps, x, t = _interstice_maps(c1, c2, c3, seed)
    try:
        dual = circle_through(*x)
    except InvalidGeometryError:
        raise InvalidGeometryError("tangency points are collinear") from None
    return TriangleIFS(maps, seed, x, t, dual.disk(), (c1, c2, c3))


@dataclass
class ApollonianSystem:
    """Output of :func:`build_apollonian`."""

    circles: tuple
    tangency_points: dict
    dual: tuple
    inversions: tuple
    generators: tuple
    parabolic_fixed_points: list
    gdms: Gdms
    triangle: TriangleIFS
    interstices: list = field(default_factory=list)


def build_apollonian(c1: Circle, c2: Circle, c3: Circle, c4: Circle) -> ApollonianSystem:
    """Dual circles, inversions and generators of a bounded Apollonian configuration.

    ``c4`` is the outer circle (orientation ``exterior``). Dual circle ``K_i``
    passes through the three tangency points not on ``C_i``; ``g_i`` is the
    inversion in ``K_i`` and ``gamma_i = g_4 o g_i`` for ``i = 1, 2, 3``.
    The returned system is the reflection-group pair alphabet on the disks of
    ``K_1..K_4``; words ``(a,b)(b,a)`` are parabolic.
    """
    cs = (c1, c2, c3, c4)
    if c4.orientation != "exterior":
        c4 = Circle(c4.center, c4.radius, "exterior")
        cs = (c1, c2, c3, c4)
    for a, b in itertools.combinations(cs, 2):
        _check_pair_tangent(a, b)
    tp = {(i, j): tangency_point(cs[i], cs[j]) for i, j in itertools.combinations(range(4), 2)}
    dual = []
    for i in range(4):
        pts = [p for (a, b), p in tp.items() if i not in (a, b)]
        k = generalized_circle_through(*pts)
        ref = cs[i].center if cs[i].orientation == "interior" else cs[i].center + 2 * cs[i].radius
        if isinstance(k, Line):
            k = k.oriented_away_from(ref)
        dual.append(k)
    inv = tuple(k.inversion() for k in dual)
    gens = tuple(moebius_compose(inv[3], inv[i]) for i in range(3))
    fps = []
    for a, b in itertools.combinations(range(4), 2):
        # g_a g_b is parabolic, fixing the tangency point of K_a and K_b
        fps.append(((a, b), tangency_point(dual[a], dual[b])))
    data = SchottkyData.reflection_group({i + 1: dual[i] for i in range(4)}, tangency_allowed=True)
    gd = build_schottky_gdms(data, name="apollonian-pairs")
    tri = apollonian_triangle_ifs(c1, c2, c3)
    inters = []
    for trio in itertools.combinations(range(4), 3):
        other = [k for k in range(4) if k not in trio][0]
        seed = descartes_fourth(*[cs[k] for k in trio], exclude=cs[other])
        maps, _, _ = _interstice_maps(*[cs[k] for k in trio], seed)
        inters.append((trio, maps, seed))
    return ApollonianSystem(cs, tp, tuple(dual), inv, gens, fps, gd, tri, inters)


# --------------------------------------------------------------------------
# packing enumeration
# --------------------------------------------------------------------------


@dataclass
class Packing:
    """Circles with generation index and generating word."""

    centers: np.ndarray
    radii: np.ndarray
    generations: np.ndarray
    words: list
    convention: str = "triangle"

    def __len__(self) -> int:
        return len(self.radii)

    def circles(self):
        for c, r, g, w in zip(self.centers, self.radii, self.generations, self.words):
            yield Circle(complex(c), float(r)), int(g), w

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cx", "cy", "r", "generation", "word"])
            for c, r, g, wd in zip(self.centers, self.radii, self.generations, self.words):
                w.writerow([repr(float(c.real)), repr(float(c.imag)), repr(float(r)), int(g), "".join(str(s) for s in wd)])


def _push_circles(maps, centers, radii):
    out_c, out_r = [], []
    for m in maps:
        c, r, _ = image_circle(m, centers, radii)
        out_c.append(c)
        out_r.append(r)
    return out_c, out_r


def enumerate_packing(ifs, generations: int | None = None, T: float | None = None,
                      budget: int = 10_000_000, keep_words: bool = True, seeds: bool = False) -> Packing:
    """Circles ``phi_w(C_0)`` of a triangle IFS.

    Parameters
    ----------
    ifs : TriangleIFS or ApollonianSystem
        With an :class:`ApollonianSystem` all four interstices are used and
        generation ``n`` holds ``4 * 3^(n-1)`` circles.
    generations : int, optional
        ``by_generation`` mode: words of length exactly ``generations - 1``
        applied to the seed of each interstice (triangle convention: length
        ``generations`` for a bare triangle IFS).
    T : float, optional
        ``by_diameter`` mode: all circles with diameter ``>= exp(-T)``.
        Children of a circle are strictly smaller (Descartes), so pruning on
        the diameter is exact.
    seeds : bool
        Include the configuration circles themselves (generation 0).
    """
    if (generations is None) == (T is None):
        raise InvalidInputError("give exactly one of generations or T")
    if isinstance(ifs, ApollonianSystem):
        sources = [(maps, seed, k) for k, (_, maps, seed) in enumerate(ifs.interstices)]
        conv = "packing"
    else:
        sources = [(ifs.maps, ifs.seed, None)]
        conv = "triangle"
    cs, rs, gs, ws = [], [], [], []
    total = 0
    for maps, seed, tag in sources:
        centers = np.array([seed.center])
        radii = np.array([seed.radius])
        words = [() if tag is None else (tag,)]
        depth = 0
        while len(radii):
            if T is not None:
                ok = 2 * radii >= np.exp(-T)
                centers, radii = centers[ok], radii[ok]
                if keep_words:
                    words = [w for w, k in zip(words, ok) if k]
                if not len(radii):
                    break
            gen = depth + 1 if conv == "packing" else depth
            emit = T is not None or (generations is not None and gen == generations)
            if emit:
                cs.append(centers)
                rs.append(radii)
                gs.append(np.full(len(radii), gen))
                if keep_words:
                    ws.extend(words)
                total += len(radii)
                if total > budget:
                    raise BudgetExceededError(f"packing exceeded the budget of {budget} circles",
                                              Packing(np.concatenate(cs), np.concatenate(rs), np.concatenate(gs), ws, conv))
            if generations is not None and gen >= generations:
                break
            nxt_size = 3 * len(radii)
            if generations is not None and total + nxt_size > budget and gen + 1 == generations:
                raise BudgetExceededError(f"generation {generations} exceeds the budget of {budget} circles")
            pc, pr = _push_circles(maps, centers, radii)
            centers = np.concatenate(pc)
            radii = np.concatenate(pr)
            if keep_words:
                words = [w + (i + 1,) for i in range(3) for w in words]
            depth += 1
    if seeds and isinstance(ifs, ApollonianSystem):
        for c in ifs.circles:
            cs.append(np.array([c.center]))
            rs.append(np.array([c.radius]))
            gs.append(np.array([0]))
            ws.append(())
    elif seeds:
        for c in ifs.sides:
            cs.append(np.array([c.center]))
            rs.append(np.array([c.radius]))
            gs.append(np.array([0]))
            ws.append(())
    if not cs:
        return Packing(np.zeros(0, dtype=complex), np.zeros(0), np.zeros(0, dtype=int), [], conv)
    return Packing(np.concatenate(cs), np.concatenate(rs), np.concatenate(gs), ws if keep_words else [], conv)


def count_circles(ifs, T_grid, budget: int = 10_000_000):
    """``N(T)``: number of circles with diameter ``>= exp(-T)`` for each ``T``."""
    T_grid = np.asarray(T_grid, dtype=float)
    pk = enumerate_packing(ifs, T=float(T_grid[-1]), budget=budget, keep_words=False)
    lam = -np.log(2 * pk.radii)
    lam.sort()
    return np.searchsorted(lam, T_grid, side="right")


def generation_counts(n: int) -> dict:
    """Circle counts at generation ``n`` under the available conventions."""
    return {
        "triangle_ifs": 3**n,
        "full_packing": 4 * 3 ** (n - 1),
        "pair_alphabet_words": 12 * 3 ** (n - 1),
    }

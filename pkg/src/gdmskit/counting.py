"""Counting functions for preimages, periodic points and diameters.

All enumerations grow words by prepending letters level by level with numpy
arrays. A node is discarded once its weight exceeds ``T_max`` plus a slack
that bounds how much any extension can decrease it; the slack is zero when
every branch satisfies ``||phi_e'|| <= 1``, which makes the pruning exact.
"""

from __future__ import annotations

import csv
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, InvalidInputError
from .gdms import Gdms, detect_parabolic
from .maps import Disk, Interval, fixed_point, image_circle
from .symbolic import admissible_words

DEFAULT_BUDGET = 50_000_000
BOUNDARY_TOL = 1e-9
LAMBDA_TOL = 1e-12


# --------------------------------------------------------------------------
# reference codings and regions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Coding:
    """Eventually periodic infinite word ``prefix + period period ...``."""

    prefix: tuple = ()
    period: tuple = (0,)

    def __post_init__(self):
        if len(self.period) == 0:
            raise InvalidInputError("period must be non-empty")
        object.__setattr__(self, "prefix", tuple(int(e) for e in self.prefix))
        object.__setattr__(self, "period", tuple(int(e) for e in self.period))

    @property
    def first(self) -> int:
        return self.prefix[0] if self.prefix else self.period[0]

    def letters(self, n: int) -> tuple:
        out = list(self.prefix)
        while len(out) < n:
            out.extend(self.period)
        return tuple(out[:n])

    def point(self, system: Gdms):
        """``pi(rho)``: periodic fixed point pushed through the prefix."""
        x = fixed_point(system.compose(self.period), system.domain_of_word(self.period))
        if self.prefix:
            x = system.compose(self.prefix).apply(np.asarray(x))
        return x.item() if isinstance(x, np.ndarray) else x


@dataclass(frozen=True)
class BorelRegion:
    """Simple region with a total membership predicate.

    ``kind`` is one of ``whole``, ``interval`` (``params=(lo, hi)``), ``box``
    (``(x0, x1, y0, y1)``) or ``disk`` (``(cx, cy, r)``); ``complement``
    flips membership.
    """

    kind: str = "whole"
    params: tuple = ()
    complement: bool = False
    boundary_null_assumed: bool = True

    def __post_init__(self):
        need = {"whole": 0, "interval": 2, "box": 4, "disk": 3}
        if self.kind not in need:
            raise InvalidInputError(f"unknown region kind {self.kind!r}")
        if len(self.params) != need[self.kind]:
            raise InvalidInputError(f"region {self.kind} needs {need[self.kind]} parameters")

    def _inside_and_dist(self, z):
        z = np.asarray(z)
        x, y = np.real(z), np.imag(z)
        if self.kind == "whole":
            return np.ones(z.shape, dtype=bool), np.full(z.shape, np.inf)
        if self.kind == "interval":
            lo, hi = self.params
            inside = (x >= lo) & (x <= hi)
            return inside, np.minimum(np.abs(x - lo), np.abs(x - hi))
        if self.kind == "box":
            x0, x1, y0, y1 = self.params
            inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
            dx = np.minimum(np.abs(x - x0), np.abs(x - x1))
            dy = np.minimum(np.abs(y - y0), np.abs(y - y1))
            return inside, np.minimum(dx, dy)
        cx, cy, r = self.params
        d = np.abs(z - complex(cx, cy))
        return d <= r, np.abs(d - r)

    def contains(self, z):
        inside, _ = self._inside_and_dist(z)
        return ~inside if self.complement else inside

    def near_boundary(self, z, tol: float = BOUNDARY_TOL):
        return self._inside_and_dist(z)[1] < tol

    def intersects_interval(self, lo, hi):
        """Vectorized test ``[lo, hi] ∩ region ≠ ∅``."""
        lo, hi = np.asarray(lo), np.asarray(hi)
        if self.kind == "whole":
            base = np.ones(lo.shape, dtype=bool)
            return ~base if self.complement else base
        if self.kind != "interval":
            raise InvalidInputError("interval images need an interval region")
        a, b = self.params
        if self.complement:
            return (lo < a) | (hi > b)
        return (hi >= a) & (lo <= b)

    def intersects_disk(self, c, r):
        c, r = np.asarray(c, dtype=complex), np.asarray(r)
        if self.kind == "whole":
            base = np.ones(c.shape, dtype=bool)
            return ~base if self.complement else base
        if self.kind == "disk":
            cx, cy, R = self.params
            d = np.abs(c - complex(cx, cy))
            return (d + r > R) if self.complement else (d <= R + r)
        if self.kind == "box":
            x0, x1, y0, y1 = self.params
            px = np.clip(c.real, x0, x1)
            py = np.clip(c.imag, y0, y1)
            hit = np.abs(c - (px + 1j * py)) <= r
            if self.complement:
                inside = (c.real - r >= x0) & (c.real + r <= x1) & (c.imag - r >= y0) & (c.imag + r <= y1)
                return ~inside
            return hit
        raise InvalidInputError("disk images need a disk or box region")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "complement": self.complement}


WHOLE = BorelRegion()


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class CountingReport:
    """Counting curve on a ``T`` grid with convergence diagnostics."""

    kind: str
    T: np.ndarray
    counts: np.ndarray
    delta: float
    words_expanded: int = 0
    boundary_hits: int = 0
    truncation_notes: list = field(default_factory=list)
    window: float = 1.0 / 3.0
    truncated: bool = False

    @property
    def normalized(self) -> np.ndarray:
        return self.counts * np.exp(-self.delta * self.T)

    def _tail(self) -> np.ndarray:
        n = len(self.T)
        k = max(1, int(round(n * self.window)))
        return self.normalized[n - k :]

    @property
    def limit_estimate(self) -> float:
        return float(np.mean(self._tail()))

    @property
    def oscillation(self) -> float:
        t = self._tail()
        if np.min(t) <= 0:
            return np.inf
        return float(np.max(t) / np.min(t) - 1.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "count", "normalized"])
            for t, c, v in zip(self.T, self.counts, self.normalized):
                w.writerow([repr(float(t)), int(c), repr(float(v))])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "T": [float(t) for t in self.T],
            "counts": [int(c) for c in self.counts],
            "normalized": [float(v) for v in self.normalized],
            "limit_estimate": self.limit_estimate,
            "oscillation": self.oscillation,
            "words_expanded": int(self.words_expanded),
            "boundary_hits": int(self.boundary_hits),
            "truncation_notes": list(self.truncation_notes),
            "truncated": self.truncated,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check_grid(T_grid) -> np.ndarray:
    T = np.asarray(T_grid, dtype=float)
    if T.ndim != 1 or len(T) == 0 or np.any(np.diff(T) <= 0):
        raise InvalidInputError("T grid must be a non-empty strictly increasing sequence")
    return T


def _bin(T: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # relative tolerance so that e.g. -log(2^-10) counts at T = 10 log 2
    idx = np.searchsorted(T, lam - LAMBDA_TOL * (1 + np.abs(lam)), side="left")
    return np.bincount(idx, minlength=len(T) + 1)[: len(T)]


class _Budget:
    def __init__(self, cap: int):
        self.cap = cap
        self.used = 0
        self.lock = threading.Lock()

    def spend(self, n: int) -> bool:
        with self.lock:
            self.used += n
            return self.used <= self.cap


def _slack(system: Gdms) -> float:
    return (system.iterate_order - 1) * max(0.0, float(np.max(system.sup_logs)))


def _letter_order(system: Gdms) -> np.ndarray:
    """Letters sorted by decreasing sup-derivative (increasing minimal cost)."""
    return np.argsort(-system.sup_logs, kind="stable")


def _run_subtrees(starts, worker, threads: int):
    if threads <= 1 or len(starts) <= 1:
        return [worker(s) for s in starts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, starts))


def _reject_parabolic_reference(system: Gdms, rho: "Coding", xi) -> None:
    """Powers of a parabolic letter fixing ``xi`` all have multiplier 0."""
    cls = detect_parabolic(system)
    for a in cls.omega:
        if system.incidence.allowed(a, rho.first) and abs(complex(xi) - complex(cls.fixed_points[a])) < 1e-9:
            raise InvalidInputError(f"reference point is the parabolic fixed point of letter {a}; counts are infinite")


def _default_delta(system: Gdms) -> float:
    from .thermo import PressureEvaluator, bowen_dimension

    return bowen_dimension(PressureEvaluator(system)).delta


# --------------------------------------------------------------------------
# preimages
# --------------------------------------------------------------------------


def count_preimages(system: Gdms, rho: Coding, T_grid, region: BorelRegion = WHOLE, delta: float | None = None,
                    max_len: int | None = None, budget: int = DEFAULT_BUDGET, threads: int = 1) -> CountingReport:
    """``N_rho(B, T) = #{w : w rho admissible, lambda_rho(w) <= T, phi_w(xi) in B}``.

    ``lambda_rho(w) = -log |phi_w'(xi)|`` with ``xi = pi(rho)``.

    Parameters
    ----------
    max_len : int, optional
        Only count words of length ``<= max_len``.
    budget : int
        Cap on expanded nodes; exceeding it raises
        :class:`~gdmskit.errors.BudgetExceededError` carrying the partial report.
    threads : int
        Workers; subtrees are split by the letter adjacent to ``rho``.
    """
    T = _check_grid(T_grid)
    if delta is None:
        delta = _default_delta(system)
    xi = rho.point(system)
    A = system.incidence.matrix
    _reject_parabolic_reference(system, rho, xi)
    T_max = T[-1] + LAMBDA_TOL * (1 + abs(T[-1]))
    slack = _slack(system)
    order = _letter_order(system)
    cost_min = -system.sup_logs
    bud = _Budget(budget)
    starts = [e for e in range(system.n_letters) if A[e, rho.first]]
    dtype = float if system.ambient_dim == 1 else complex
    xi_arr = np.array([xi], dtype=dtype)

    def worker(e):
        counts = np.zeros(len(T), dtype=np.int64)
        hits = 0
        expanded = 0
        m = system.maps[e]
        lam = -m.log_abs_derivative(xi_arr)
        y = m.apply(xi_arr)
        first = np.array([e])
        keep = lam <= T_max + slack
        lam, y, first = lam[keep], y[keep], first[keep]
        depth = 1
        exceeded = False
        while len(lam):
            inside = region.contains(y)
            hits += int(np.count_nonzero(region.near_boundary(y) & (lam <= T_max)))
            counts += _bin(T, lam[inside])
            if max_len is not None and depth >= max_len:
                break
            lmin = lam.min()
            nl, ny, nf = [], [], []
            for f in order:
                if lmin + cost_min[f] > T_max + slack:
                    break
                sel = A[f, first]
                if not sel.any():
                    continue
                yy = y[sel]
                ll = lam[sel] - system.maps[f].log_abs_derivative(yy)
                ok = ll <= T_max + slack
                if not ok.any():
                    continue
                nl.append(ll[ok])
                ny.append(system.maps[f].apply(yy[ok]))
                nf.append(np.full(int(ok.sum()), f))
            if not nl:
                break
            lam, y, first = np.concatenate(nl), np.concatenate(ny), np.concatenate(nf)
            expanded += len(lam)
            depth += 1
            if not bud.spend(len(lam)):
                exceeded = True
                break
        return counts, hits, expanded, exceeded

    results = _run_subtrees(starts, worker, threads)
    return _merge("preimage", T, delta, results, bud)


def _merge(kind, T, delta, results, bud) -> CountingReport:
    counts = np.zeros(len(T), dtype=np.int64)
    hits = expanded = 0
    exceeded = False
    for c, h, x, ex in results:
        counts += c
        hits += h
        expanded += x
        exceeded |= ex
    rep = CountingReport(kind, T, np.cumsum(counts), delta, expanded, hits)
    if hits:
        rep.truncation_notes.append(f"{hits} counted points within {BOUNDARY_TOL:g} of the region boundary")
    if exceeded:
        rep.truncated = True
        rep.truncation_notes.append(f"node budget {bud.cap} exceeded")
        raise BudgetExceededError(f"enumeration exceeded the budget of {bud.cap} nodes", rep)
    return rep


# --------------------------------------------------------------------------
# periodic points
# --------------------------------------------------------------------------


def _stack_fixed_points(mats, conj, dom, real: bool):
    """Attracting fixed points of Möbius stacks (anti-Möbius by iteration)."""
    a, b, c, d = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    out = np.empty(len(mats), dtype=complex)
    lin = np.abs(c) < 1e-14
    plain = ~conj
    # orientation preserving: c z^2 + (d - a) z - b = 0, pick |c z + d| > 1
    idx = plain & ~lin
    if idx.any():
        disc = np.sqrt((d[idx] - a[idx]) ** 2 + 4 * b[idx] * c[idx])
        r1 = ((a[idx] - d[idx]) + disc) / (2 * c[idx])
        r2 = ((a[idx] - d[idx]) - disc) / (2 * c[idx])
        pick = np.abs(c[idx] * r1 + d[idx]) >= np.abs(c[idx] * r2 + d[idx])
        out[idx] = np.where(pick, r1, r2)
    idx = plain & lin
    if idx.any():
        out[idx] = b[idx] / (d[idx] - a[idx])
    idx = conj
    if idx.any():
        z = np.full(int(idx.sum()), complex(dom.center))
        aa, bb, cc, dd = a[idx], b[idx], c[idx], d[idx]
        for _ in range(2000):
            w = np.conj(z)
            zn = (aa * w + bb) / (cc * w + dd)
            if np.max(np.abs(zn - z)) < 1e-14:
                z = zn
                break
            z = zn
        out[idx] = z
    return out.real if real else out


def _apply_words(system: Gdms, words: np.ndarray, x):
    """``phi_w(x)`` and ``-log |phi_w'(x)|`` row by row."""
    x = np.array(x)
    lam = np.zeros(len(words))
    for j in range(words.shape[1] - 1, -1, -1):
        for e in np.unique(words[:, j]):
            sel = words[:, j] == e
            lam[sel] -= np.real(system.maps[e].log_abs_derivative(x[sel]))
            x[sel] = system.maps[e].apply(x[sel])
    return x, lam


def _word_fixed_points(system: Gdms, words: np.ndarray):
    """Fixed points and multipliers of a stack of equal-length words.

    On intervals ``phi_w(x) - x`` changes sign across the domain, so a
    vectorized bisection is used; disks fall back to iteration word by word.
    """
    doms = [system.domain_of(int(e)) for e in words[:, -1]]
    if all(isinstance(d, Interval) for d in doms):
        lo = np.array([d.lo for d in doms], dtype=float)
        hi = np.array([d.hi for d in doms], dtype=float)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            y, _ = _apply_words(system, words, mid)
            up = y > mid
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
            if np.max(hi - lo) < 1e-15:
                break
        x = 0.5 * (lo + hi)
    else:
        x = np.array([fixed_point(system.compose(w), d) for w, d in zip(words, doms)], dtype=complex)
    _, lam = _apply_words(system, words, x)
    return x, lam


def _periodic_generic(system: Gdms, T, region, max_len, parab, bud, prune: bool):
    """Periodic counts for branches without a closed-form fixed point.

    Words are grown by prepending; with ``prune`` a node is dropped once the
    sum of letter-wise ``-log ||phi_e'||`` exceeds ``T_max``, a lower bound
    on ``lambda_p`` of every extension by the chain rule.
    """
    A = system.incidence.matrix
    T_max = T[-1] + LAMBDA_TOL * (1 + abs(T[-1]))
    cost_e = -system.sup_logs
    counts = np.zeros(len(T), dtype=np.int64)
    hits = expanded = 0
    exceeded = False
    level = [((e,), cost_e[e]) for e in range(system.n_letters)]
    depth = 1
    while level:
        closed = [w for w, _ in level if A[w[-1], w[0]] and not (w[0] in parab and len(set(w)) == 1)]
        if closed:
            x, lam = _word_fixed_points(system, np.array(closed))
            hits += int(np.count_nonzero(region.near_boundary(x) & (lam <= T_max)))
            counts += _bin(T, lam[region.contains(x)])
        if max_len is not None and depth >= max_len:
            break
        nxt = []
        for w, c in level:
            for f in range(system.n_letters):
                if not A[f, w[0]]:
                    continue
                cf = c + cost_e[f]
                if prune and cf > T_max:
                    continue
                nxt.append(((f,) + w, cf))
        level = nxt
        expanded += len(level)
        depth += 1
        if bud is not None and not bud.spend(len(level)):
            exceeded = True
            break
    return counts, hits, expanded, exceeded


def count_periodic(system: Gdms, T_grid, region: BorelRegion = WHOLE, delta: float | None = None,
                   max_len: int | None = None, budget: int = DEFAULT_BUDGET, threads: int = 1) -> CountingReport:
    """``N_p(B, T) = #{w closable : lambda_p(w) <= T, x_w in B}``.

    Every closable word is counted, so each periodic orbit of period ``n``
    contributes its ``n`` cyclic rotations. Möbius branches use closed-form
    fixed points, other branches fixed-point iteration. Pure powers of
    parabolic letters (``lambda_p = 0``) are skipped
    and parabolic systems need ``max_len``.
    """
    T = _check_grid(T_grid)
    if delta is None:
        delta = _default_delta(system)
    cls = detect_parabolic(system)
    notes = []
    if cls.is_parabolic:
        if max_len is None:
            raise InvalidInputError("parabolic systems need an explicit max_len for periodic counting")
        notes.append(f"parabolic system: words longer than {max_len} omitted; pure parabolic powers skipped")
    if not system.all_moebius:
        bud = _Budget(budget)
        results = [_periodic_generic(system, T, region, max_len, set(cls.omega), bud, prune=True)]
        rep = _merge("periodic", T, delta, results, bud)
        rep.truncation_notes.extend(notes)
        return rep
    A = system.incidence.matrix
    T_max = T[-1] + LAMBDA_TOL * (1 + abs(T[-1]))
    slack = _slack(system)
    order = _letter_order(system)
    cost_min = -system.sup_logs
    bud = _Budget(budget)
    mats_e = np.array([m.as_moebius().matrix for m in system.maps])
    conj_e = np.array([m.as_moebius().conjugate for m in system.maps])
    real = system.ambient_dim == 1
    parab = set(cls.omega)

    from .thermo import _stack_den_range

    def worker(e):
        dom = system.domain_of(e)
        counts = np.zeros(len(T), dtype=np.int64)
        hits = expanded = 0
        mats = mats_e[[e]].copy()
        conj = conj_e[[e]].copy()
        first = np.array([e])
        pure = np.array([e in parab])
        depth = 1
        exceeded = False
        while len(mats):
            sup = -2.0 * np.log(_stack_den_range(mats, conj, dom))
            cost = -sup
            close = A[e, first] & ~pure
            if close.any():
                x = _stack_fixed_points(mats[close], conj[close], dom, real)
                cc, dd = mats[close, 1, 0], mats[close, 1, 1]
                w = np.where(conj[close], np.conj(x), x)
                lam = 2.0 * np.log(np.abs(cc * w + dd))
                inside = region.contains(x)
                hits += int(np.count_nonzero(region.near_boundary(x) & (lam <= T_max)))
                counts += _bin(T, lam[inside])
            if max_len is not None and depth >= max_len:
                break
            keep = (cost <= T_max + slack) | pure
            mats, conj, first, pure, cost = mats[keep], conj[keep], first[keep], pure[keep], cost[keep]
            if not len(mats):
                break
            cmin = cost.min()
            nm, nc, nf, npure = [], [], [], []
            for f in order:
                if cmin + cost_min[f] > T_max + slack and not pure.any():
                    break
                sel = A[f, first]
                if not sel.any():
                    continue
                rhs = np.conj(mats[sel]) if conj_e[f] else mats[sel]
                nm.append(mats_e[f][None] @ rhs)
                nc.append(conj[sel] ^ conj_e[f])
                nf.append(np.full(int(sel.sum()), f))
                npure.append(pure[sel] & (f == e))
            if not nm:
                break
            mats, conj, first, pure = np.concatenate(nm), np.concatenate(nc), np.concatenate(nf), np.concatenate(npure)
            # drop children whose sup bound already exceeds the horizon
            c2 = -(-2.0 * np.log(_stack_den_range(mats, conj, dom)))
            ok = (c2 <= T_max + slack) | pure
            mats, conj, first, pure = mats[ok], conj[ok], first[ok], pure[ok]
            expanded += len(mats)
            depth += 1
            if not bud.spend(len(mats)):
                exceeded = True
                break
        return counts, hits, expanded, exceeded

    results = _run_subtrees(list(range(system.n_letters)), worker, threads)
    rep = _merge("periodic", T, delta, results, bud)
    rep.truncation_notes.extend(notes)
    return rep


# --------------------------------------------------------------------------
# diameters
# --------------------------------------------------------------------------


def count_diameters(system: Gdms, rho: Coding, Y, T_grid, region: BorelRegion = WHOLE, mode: str = "D",
                    delta: float | None = None, max_len: int | None = None, budget: int = DEFAULT_BUDGET,
                    threads: int = 1) -> CountingReport:
    """Diameter counts ``D_Y`` (mode ``D``) or ``E_Y`` (mode ``E``).

    ``Delta(w) = -log diam(phi_w(Y))``. Intervals are tracked by their
    endpoints (monotone branches), disks by exact Möbius image circles and
    finite point sets point by point. Mode ``D`` tests ``phi_w(xi)`` against
    the region, mode ``E`` tests whether ``phi_w(Y)`` meets it.

    Parameters
    ----------
    Y : Interval, Disk or array of points
        Subset of the domain of the letters preceding ``rho``.
    """
    T = _check_grid(T_grid)
    if mode not in ("D", "E"):
        raise InvalidInputError("mode must be 'D' or 'E'")
    if delta is None:
        delta = _default_delta(system)
    if isinstance(Y, Interval):
        shape = "interval"
        geom0 = np.array([[Y.lo, Y.hi]], dtype=float)
    elif isinstance(Y, Disk):
        if not system.all_moebius:
            raise InvalidInputError("disk sets need Möbius branches")
        shape = "disk"
        geom0 = np.array([[Y.center, Y.radius]], dtype=complex)
    else:
        pts = np.atleast_1d(np.asarray(Y))
        if len(pts) < 2:
            raise InvalidInputError("Y needs at least two points")
        shape = "points"
        geom0 = pts[None, :]
    xi = rho.point(system)
    A = system.incidence.matrix
    T_max = T[-1] + LAMBDA_TOL * (1 + abs(T[-1]))
    slack = _slack(system)
    order = _letter_order(system)
    cost_min = -system.sup_logs
    bud = _Budget(budget)
    starts = [e for e in range(system.n_letters) if A[e, rho.first]]
    dtype = float if system.ambient_dim == 1 else complex

    def push(m, geom, x):
        if shape == "disk":
            c, r, _ = image_circle(m.as_moebius(), geom[:, 0], geom[:, 1].real)
            g = np.stack([c, r.astype(complex)], axis=1)
        else:
            g = m.apply(geom)
        return g, m.apply(x)

    def diam(geom):
        if shape == "interval":
            return np.abs(geom[:, 1] - geom[:, 0])
        if shape == "disk":
            return 2 * geom[:, 1].real
        diff = np.abs(geom[:, :, None] - geom[:, None, :])
        return diff.max(axis=(1, 2))

    def hit(geom, x):
        if mode == "D":
            return region.contains(x), region.near_boundary(x)
        if shape == "interval":
            lo, hi = np.minimum(geom[:, 0], geom[:, 1]), np.maximum(geom[:, 0], geom[:, 1])
            return region.intersects_interval(lo, hi), np.zeros(len(x), dtype=bool)
        if shape == "disk":
            return region.intersects_disk(geom[:, 0], geom[:, 1].real), np.zeros(len(x), dtype=bool)
        return region.contains(geom).any(axis=1), np.zeros(len(x), dtype=bool)

    def worker(e):
        counts = np.zeros(len(T), dtype=np.int64)
        hits = expanded = 0
        geom, x = push(system.maps[e], geom0, np.array([xi], dtype=dtype))
        first = np.array([e])
        lam = -np.log(diam(geom))
        keep = lam <= T_max + slack
        geom, x, first, lam = geom[keep], x[keep], first[keep], lam[keep]
        depth = 1
        exceeded = False
        while len(lam):
            ok, near = hit(geom, x)
            hits += int(np.count_nonzero(near & (lam <= T_max)))
            counts += _bin(T, lam[ok])
            if max_len is not None and depth >= max_len:
                break
            lmin = lam.min()
            ng, nx, nf, nl = [], [], [], []
            for f in order:
                if lmin + cost_min[f] > T_max + slack:
                    break
                sel = A[f, first]
                if not sel.any():
                    continue
                g2, x2 = push(system.maps[f], geom[sel], x[sel])
                l2 = -np.log(diam(g2))
                good = l2 <= T_max + slack
                if not good.any():
                    continue
                ng.append(g2[good])
                nx.append(x2[good])
                nl.append(l2[good])
                nf.append(np.full(int(good.sum()), f))
            if not ng:
                break
            geom, x, lam, first = np.concatenate(ng), np.concatenate(nx), np.concatenate(nl), np.concatenate(nf)
            expanded += len(lam)
            depth += 1
            if not bud.spend(len(lam)):
                exceeded = True
                break
        return counts, hits, expanded, exceeded

    results = _run_subtrees(starts, worker, threads)
    return _merge(f"diameter_{mode}", T, delta, results, bud)


# --------------------------------------------------------------------------
# growth rate and exhaustive oracles
# --------------------------------------------------------------------------


def growth_rate(report: CountingReport, window: float = 0.5) -> float:
    """Least-squares slope of ``log N(T)`` over the trailing ``window`` of the grid."""
    T = np.asarray(report.T)
    c = np.asarray(report.counts, dtype=float)
    if len(T) < 5:
        raise InvalidInputError("growth rate needs at least five grid points")
    k = max(5, int(round(len(T) * window)))
    T, c = T[-k:], c[-k:]
    pos = c > 0
    if pos.sum() < 5:
        raise InvalidInputError("growth rate needs at least five positive counts")
    slope, _ = np.polyfit(T[pos], np.log(c[pos]), 1)
    return float(slope)


def exhaustive_preimage_counts(system: Gdms, rho: Coding, T_grid, max_len: int,
                               region: BorelRegion = WHOLE) -> np.ndarray:
    """Unpruned reference count over all words of length ``<= max_len``."""
    T = _check_grid(T_grid)
    xi = rho.point(system)
    A = system.incidence.matrix
    out = np.zeros(len(T), dtype=np.int64)
    ends = [e for e in range(system.n_letters) if A[e, rho.first]]
    for n in range(1, max_len + 1):
        words = admissible_words(system.incidence, n)
        words = words[np.isin(words[:, -1], ends)]
        x = np.full(len(words), xi, dtype=float if system.ambient_dim == 1 else complex)
        lam = np.zeros(len(words))
        for j in range(n - 1, -1, -1):
            for e in np.unique(words[:, j]):
                sel = words[:, j] == e
                lam[sel] -= system.maps[e].log_abs_derivative(x[sel])
                x[sel] = system.maps[e].apply(x[sel])
        out += _bin(T, lam[region.contains(x)])
    return np.cumsum(out)


def exhaustive_periodic_counts(system: Gdms, T_grid, max_len: int, region: BorelRegion = WHOLE) -> np.ndarray:
    """Unpruned reference periodic count over closable words of length ``<= max_len``."""
    T = _check_grid(T_grid)
    out = np.zeros(len(T), dtype=np.int64)
    A = system.incidence.matrix
    real = system.ambient_dim == 1
    parab = np.zeros(system.n_letters, dtype=bool)
    parab[list(detect_parabolic(system).omega)] = True
    if not system.all_moebius:
        counts = _periodic_generic(system, T, region, max_len, set(np.flatnonzero(parab)), None, prune=False)[0]
        return np.cumsum(counts)
    mats_e = np.array([m.as_moebius().matrix for m in system.maps])
    conj_e = np.array([m.as_moebius().conjugate for m in system.maps])
    for n in range(1, max_len + 1):
        words = admissible_words(system.incidence, n)
        words = words[A[words[:, -1], words[:, 0]]]
        mats = np.broadcast_to(np.eye(2, dtype=complex), (len(words), 2, 2)).copy()
        conj = np.zeros(len(words), dtype=bool)
        for j in range(n):
            rhs = mats_e[words[:, j]]
            rhs = np.where(conj[:, None, None], np.conj(rhs), rhs)
            mats = mats @ rhs
            conj = conj ^ conj_e[words[:, j]]
        lam = np.empty(len(words))
        xs = np.empty(len(words), dtype=float if real else complex)
        for e in np.unique(words[:, -1]):
            sel = words[:, -1] == e
            x = _stack_fixed_points(mats[sel], conj[sel], system.domain_of(e), real)
            w = np.where(conj[sel], np.conj(x), x)
            lam[sel] = 2.0 * np.log(np.abs(mats[sel, 1, 0] * w + mats[sel, 1, 1]))
            xs[sel] = x
        pure = np.all(words == words[:, :1], axis=1) & parab[words[:, 0]]
        ok = region.contains(xs) & ~pure
        out += _bin(T, lam[ok])
    return np.cumsum(out)

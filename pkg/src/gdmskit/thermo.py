"""Pressure, Bowen dimension, conformal and invariant measures, Lyapunov
exponent, variance and spectral probes.

Three pressure back ends are available:

``exact``
    Similarity systems: ``P(s) = log rho(A diag(r^s))``.
``operator``
    Collocation discretization of the transfer operator
    ``L_s f(x) = sum_e |phi_e'(x)|^s f(phi_e(x))`` on Chebyshev bases of
    the vertex domains (intervals and disks); ``e^{P(s)}`` is its leading
    eigenvalue. Truncated infinite alphabets add their tail groups.
``words``
    The defining limit ``(1/n) log sum_{|w|=n} ||phi_w'||^s`` evaluated at
    levels ``n`` and ``n-1``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import brentq

from .errors import (
    InvalidInputError,
    MustInduceError,
    NotRegularError,
    NumericalInstabilityError,
    SpectralError,
)
from .gdms import Gdms, detect_parabolic
from .maps import Disk, Interval
from .symbolic import admissible_words

# --------------------------------------------------------------------------
# collocation bases
# --------------------------------------------------------------------------


class IntervalBasis:
    """Chebyshev polynomials of degree ``<= deg`` on an interval.

    Collocation at the ``deg + 1`` Chebyshev points of the first kind.
    """

    def __init__(self, domain: Interval, deg: int):
        self.domain = domain
        self.deg = deg
        k = np.arange(deg + 1)
        u = np.cos(np.pi * (k + 0.5) / (deg + 1))
        self.nodes = domain.center + 0.5 * domain.diameter * u
        self.projector = np.linalg.inv(self.evaluate(self.nodes))

    @property
    def size(self) -> int:
        return self.deg + 1

    def evaluate(self, x) -> np.ndarray:
        x = np.real(np.asarray(x))
        u = (x - self.domain.center) / (0.5 * self.domain.diameter)
        return cheb.chebvander(u, self.deg)


class DiskBasis:
    """Total-degree tensor Chebyshev basis on the square around a disk.

    Nodes are an oversampled Chebyshev grid clipped to the disk; the
    projector is the least-squares pseudo-inverse.
    """

    def __init__(self, domain: Disk, deg: int, oversample: float = 1.5):
        self.domain = domain
        self.deg = deg
        idx = [(a, b) for a in range(deg + 1) for b in range(deg + 1) if a + b <= deg]
        self._ia = np.array([a for a, _ in idx])
        self._ib = np.array([b for _, b in idx])
        ng = int(oversample * deg) + 2
        g = np.cos(np.pi * (np.arange(ng) + 0.5) / ng)
        U, V = np.meshgrid(g, g)
        inside = U**2 + V**2 <= 1
        self.nodes = domain.center + domain.radius * (U[inside] + 1j * V[inside])
        self.projector = np.linalg.pinv(self.evaluate(self.nodes))

    @property
    def size(self) -> int:
        return len(self._ia)

    def evaluate(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        u = (z.real - self.domain.center.real) / self.domain.radius
        v = (z.imag - self.domain.center.imag) / self.domain.radius
        return cheb.chebvander(u, self.deg)[..., self._ia] * cheb.chebvander(v, self.deg)[..., self._ib]


def make_basis(domain, deg: int):
    if isinstance(domain, Interval):
        return IntervalBasis(domain, deg)
    if isinstance(domain, Disk):
        return DiskBasis(domain, deg)
    raise InvalidInputError(f"no collocation basis for {type(domain).__name__}")


def operator_supported(system: Gdms) -> bool:
    return system.is_maximal and all(isinstance(d, (Interval, Disk)) for d in system.domains)


# --------------------------------------------------------------------------
# collocation transfer operator
# --------------------------------------------------------------------------


@dataclass
class _LetterGroup:
    src: int  # vertex of the base points (terminal vertex of the letters)
    dst: int  # vertex of the images
    letters: np.ndarray
    logw: np.ndarray  # (E, nodes)
    images: np.ndarray  # (E, nodes)
    cached: np.ndarray | None = None  # (E, nodes, basis) basis values at images


class TransferOperator:
    """Collocation matrix of the transfer operator of a maximal system.

    Parameters
    ----------
    system : Gdms
        Maximal system whose vertex domains are intervals or disks.
    degree : int, optional
        Polynomial degree (default 24 on intervals, 12 on disks).
    cache_limit : int
        Largest number of cached basis values; above it basis values at the
        image points are recomputed on each evaluation.
    """

    def __init__(self, system: Gdms, degree: int | None = None, cache_limit: int = 15_000_000):
        if not operator_supported(system):
            raise InvalidInputError("collocation needs a maximal system on intervals or disks")
        self.system = system
        if degree is None:
            degree = 24 if system.ambient_dim == 1 else 12
        self.degree = degree
        self.bases = [make_basis(d, degree) for d in system.domains]
        sizes = [b.size for b in self.bases]
        nsizes = [len(b.nodes) for b in self.bases]
        self.coef_offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.node_offsets = np.concatenate([[0], np.cumsum(nsizes)])
        self.projector = scipy.linalg.block_diag(*[b.projector for b in self.bases])
        alph = system.alphabet
        groups = {}
        for e in range(system.n_letters):
            groups.setdefault((alph.terminal[e], alph.initial[e]), []).append(e)
        self.groups = []
        budget = cache_limit
        for (src, dst), letters in sorted(groups.items()):
            nodes = self.bases[src].nodes
            logw = np.empty((len(letters), len(nodes)))
            images = np.empty((len(letters), len(nodes)), dtype=nodes.dtype)
            for k, e in enumerate(letters):
                m = system.maps[e]
                images[k] = m.apply(nodes)
                logw[k] = m.log_abs_derivative(nodes)
            g = _LetterGroup(src, dst, np.array(letters), logw, images)
            need = images.size * self.bases[dst].size
            if need <= budget:
                g.cached = self.bases[dst].evaluate(images)
                budget -= need
            self.groups.append(g)

    @property
    def size(self) -> int:
        return int(self.coef_offsets[-1])

    def _block(self, g: _LetterGroup, weights: np.ndarray) -> np.ndarray:
        if g.cached is not None:
            return np.einsum("en,enb->nb", weights, g.cached)
        out = np.zeros((weights.shape[1], self.bases[g.dst].size))
        step = max(1, 2_000_000 // max(1, weights.shape[1] * self.bases[g.dst].size))
        for k0 in range(0, len(g.letters), step):
            vals = self.bases[g.dst].evaluate(g.images[k0 : k0 + step])
            out += np.einsum("en,enb->nb", weights[k0 : k0 + step], vals)
        return out

    def values_matrix(self, s: float, derivative: bool = False) -> np.ndarray:
        """``W`` with ``(L_s f)(nodes) = W @ coeffs(f)``.

        With ``derivative=True`` returns ``dW/ds``.
        """
        n_nodes = int(self.node_offsets[-1])
        W = np.zeros((n_nodes, self.size))
        for g in self.groups:
            w = np.exp(s * g.logw)
            if derivative:
                w = w * g.logw
            r0, r1 = self.node_offsets[g.src], self.node_offsets[g.src + 1]
            c0, c1 = self.coef_offsets[g.dst], self.coef_offsets[g.dst + 1]
            W[r0:r1, c0:c1] += self._block(g, w)
        for t in self.system.tails:
            r0, r1 = self.node_offsets[t.source_vertex], self.node_offsets[t.source_vertex + 1]
            c0, c1 = self.coef_offsets[t.target_vertex], self.coef_offsets[t.target_vertex + 1]
            nodes = self.bases[t.source_vertex].nodes
            if derivative:
                h = 1e-6
                wp, yp = t.weight_and_point(nodes, s + h)
                wm, ym = t.weight_and_point(nodes, s - h)
                bp = self.bases[t.target_vertex].evaluate(yp)
                bm = self.bases[t.target_vertex].evaluate(ym)
                W[r0:r1, c0:c1] += (wp[:, None] * bp - wm[:, None] * bm) / (2 * h)
            else:
                w, y = t.weight_and_point(nodes, s)
                if not np.all(np.isfinite(w)):
                    W[r0:r1, c0:c1] = np.inf
                    continue
                W[r0:r1, c0:c1] += w[:, None] * self.bases[t.target_vertex].evaluate(y)
        return W

    def matrix(self, s: float) -> np.ndarray:
        """Coefficient-space matrix ``P @ W`` of ``L_s`` (all ``inf`` once a tail diverges)."""
        W = self.values_matrix(s)
        if not np.all(np.isfinite(W)):
            return np.full((self.size, self.size), np.inf)
        return self.projector @ W

    def leading_eigenvalue(self, s: float) -> float:
        A = self.matrix(s)
        if not np.all(np.isfinite(A)):
            return np.inf
        ev = np.linalg.eigvals(A)
        return float(ev[np.argmax(ev.real)].real)

    def eigen(self, s: float):
        """Leading eigenvalue with left functional and right coefficients."""
        A = self.matrix(s)
        ev, vl, vr = scipy.linalg.eig(A, left=True, right=True)
        k = int(np.argmax(ev.real))
        lam = float(ev[k].real)
        left = np.real(vl[:, k])
        right = np.real(vr[:, k])
        return lam, left, right, A

    def evaluate(self, coeffs: np.ndarray, vertex: int, x) -> np.ndarray:
        c = coeffs[self.coef_offsets[vertex] : self.coef_offsets[vertex + 1]]
        return self.bases[vertex].evaluate(np.atleast_1d(x)) @ c

    def coefficients(self, values_by_vertex: dict) -> np.ndarray:
        """Coefficient vector of a function given by its node values per vertex."""
        out = np.zeros(self.size)
        for v, vals in values_by_vertex.items():
            out[self.coef_offsets[v] : self.coef_offsets[v + 1]] = self.bases[v].projector @ vals
        return out


# --------------------------------------------------------------------------
# depth-k cylinder model
# --------------------------------------------------------------------------


def word_codes(words: np.ndarray, n_letters: int) -> np.ndarray:
    code = np.zeros(len(words), dtype=np.int64)
    for j in range(words.shape[1]):
        code = code * n_letters + words[:, j]
    return code


def word_anchors(system: Gdms, words: np.ndarray) -> np.ndarray:
    """``phi_w(center of X_{t(w)})`` for each row ``w``."""
    k = words.shape[1]
    centers = np.array([d.center for d in system.domains])
    pts = centers[np.asarray(system.alphabet.terminal)[words[:, -1]]]
    if system.ambient_dim == 1:
        pts = pts.real.astype(float)
    for j in range(k - 1, -1, -1):
        col = words[:, j]
        new = pts.copy()
        for e in np.unique(col):
            sel = col == e
            new[sel] = system.maps[e].apply(pts[sel])
        pts = new
    return pts


class SpectralModel:
    """Finite cylinder model of the (complexified) transfer operator.

    States are admissible words of length ``depth``. Row ``w`` carries the
    entries ``|phi_e'(anchor(w))|^s`` at column ``(e w)[:depth]``, so the
    leading eigenvalue approximates ``e^{P(Re s)}``-scaled spectral data.
    """

    def __init__(self, system: Gdms, depth: int):
        if depth < 1:
            raise InvalidInputError("depth must be >= 1")
        self.system = system
        self.depth = depth
        A = system.incidence.matrix
        self.words = admissible_words(system.incidence, depth)
        if len(self.words) > 3_000_000:
            raise InvalidInputError("cylinder model too large")
        n = system.n_letters
        self.codes = word_codes(self.words, n)
        self.anchors = word_anchors(system, self.words)
        rows, cols, logs = [], [], []
        first = self.words[:, 0]
        for e in range(n):
            sel = np.nonzero(A[e, first])[0]
            if len(sel) == 0:
                continue
            succ = np.concatenate([np.full((len(sel), 1), e), self.words[sel, : depth - 1]], axis=1)
            col = np.searchsorted(self.codes, word_codes(succ, n))
            rows.append(sel)
            cols.append(col)
            logs.append(system.maps[e].log_abs_derivative(self.anchors[sel]))
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.logs = np.concatenate(logs)

    @property
    def n_states(self) -> int:
        return len(self.words)

    def matrix(self, s: complex):
        vals = np.exp(s * self.logs)
        return scipy.sparse.csr_matrix((vals, (self.rows, self.cols)), shape=(self.n_states,) * 2)

    def spectral_radius(self, s: complex) -> float:
        M = self.matrix(s)
        if self.n_states <= 1500:
            return float(np.max(np.abs(np.linalg.eigvals(M.toarray()))))
        vals = scipy.sparse.linalg.eigs(M, k=1, which="LM", return_eigenvectors=False, tol=1e-12, maxiter=20000)
        return float(np.abs(vals[0]))

    def power_iteration(self, s: float, tol: float = 1e-12, max_iter: int = 100000):
        """Leading eigenvalue with positive right and left eigenvectors."""
        M = self.matrix(s)
        MT = M.T.tocsr()

        def run(op):
            v = np.full(self.n_states, 1.0 / self.n_states)
            lam = 0.0
            for _ in range(max_iter):
                w = op @ v
                lam_new = w.sum()
                w /= lam_new
                if np.max(np.abs(w - v)) <= tol * np.max(np.abs(w)) and abs(lam_new - lam) <= tol * lam_new:
                    return lam_new, w
                v, lam = w, lam_new
            raise SpectralError("power iteration did not converge")

        lam_r, right = run(M)
        _, left = run(MT)
        return lam_r, left, right


# --------------------------------------------------------------------------
# pressure
# --------------------------------------------------------------------------


@dataclass
class PressureValue:
    value: float
    error: float

    def __iter__(self):
        return iter((self.value, self.error))


def _word_sup_logs(system: Gdms, n: int, samples: int = 9):
    """Sampled ``log ||phi_w'||`` for all admissible words of length ``n``.

    Words are grown by prepending letters, tracking images and accumulated
    log-derivatives of sample points in the terminal domain.
    """
    A = system.incidence.matrix
    out = []
    for v, dom in enumerate(system.domains):
        if isinstance(dom, Interval):
            pts = np.linspace(dom.lo, dom.hi, samples)
        else:
            pts = np.concatenate([[dom.center], dom.boundary_samples(samples - 1)])
        lasts = [e for e in range(system.n_letters) if system.alphabet.terminal[e] == v]
        for e in lasts:
            first = np.array([e])
            y = system.maps[e].apply(pts)[None, :]
            acc = system.maps[e].log_abs_derivative(pts)[None, :]
            for _ in range(n - 1):
                nf, ny, na = [], [], []
                for f in range(system.n_letters):
                    sel = A[f, first]
                    if not sel.any():
                        continue
                    yy = y[sel]
                    na.append(acc[sel] + system.maps[f].log_abs_derivative(yy))
                    ny.append(system.maps[f].apply(yy))
                    nf.append(np.full(int(sel.sum()), f))
                first = np.concatenate(nf)
                y = np.concatenate(ny)
                acc = np.concatenate(na)
            out.append(acc.max(axis=1))
    return np.concatenate(out)


class PressureEvaluator:
    """Topological pressure ``P(s)`` of the geometric potential.

    Parameters
    ----------
    system : Gdms
    method : {"auto", "exact", "operator", "words"}
    level : int, optional
        Word length for the ``words`` method (12 for up to three letters,
        otherwise 6).
    degree : int, optional
        Collocation degree for the ``operator`` method.
    """

    def __init__(self, system: Gdms, method: str = "auto", level: int | None = None, degree: int | None = None):
        self.system = system
        if method == "auto":
            if system.all_similarity and not system.tails:
                method = "exact"
            elif operator_supported(system):
                method = "operator"
            else:
                method = "words"
        if method not in ("exact", "operator", "words"):
            raise InvalidInputError(f"unknown pressure method {method!r}")
        if method == "exact" and not system.all_similarity:
            raise InvalidInputError("exact pressure needs a similarity system")
        self.method = method
        self.level = level if level is not None else (12 if system.n_letters <= 3 else 6)
        self.degree = degree
        self._ops = {}

    @property
    def truncation(self) -> int:
        return self.system.n_letters

    def tail_bound(self, s: float) -> float:
        return self.system.tail_bound(s)

    def operator(self, degree: int | None = None) -> TransferOperator:
        key = degree if degree is not None else self.degree
        if key not in self._ops:
            self._ops[key] = TransferOperator(self.system, key)
        return self._ops[key]

    def value(self, s: float) -> float:
        """Pressure without an error estimate (fast path)."""
        if self.method == "exact":
            return self._exact(s)
        if self.method == "operator":
            lam = self.operator().leading_eigenvalue(s)
            return np.log(lam) if lam > 0 and np.isfinite(lam) else np.inf
        return self._words(s)[0]

    def pressure(self, s: float) -> PressureValue:
        """``(value, error_bound)``; ``+inf`` where the series diverges."""
        if self.method == "exact":
            return PressureValue(self._exact(s), 0.0)
        if self.method == "operator":
            v = self.value(s)
            if not np.isfinite(v):
                return PressureValue(np.inf, np.inf)
            op = self.operator()
            coarse = TransferOperator(self.system, max(4, op.degree - 4))
            lam_c = coarse.leading_eigenvalue(s)
            err = abs(v - np.log(lam_c)) if lam_c > 0 else np.inf
            return PressureValue(v, err)
        return PressureValue(*self._words(s))

    __call__ = pressure

    def _exact(self, s: float) -> float:
        r = np.array([abs(m.ratio) for m in self.system.maps])
        A = self.system.incidence.matrix.astype(float)
        M = r[:, None] ** s * A
        return float(np.log(np.max(np.abs(np.linalg.eigvals(M)))))

    @functools.lru_cache(maxsize=None)
    def _sup_table(self, n: int) -> np.ndarray:
        return _word_sup_logs(self.system, n)

    def _words(self, s: float):
        n = self.level
        tn = self._sup_table(n)
        tm = self._sup_table(n - 1) if n > 1 else None
        pn = np.log(np.sum(np.exp(s * tn))) / n
        tail = self.tail_bound(s) if self.system.tails else 0.0
        if not np.isfinite(tail):
            return np.inf, np.inf
        if tm is None:
            return pn, tail
        pm = np.log(np.sum(np.exp(s * tm))) / (n - 1)
        return pn, abs(pn - pm) + tail


# --------------------------------------------------------------------------
# Bowen dimension
# --------------------------------------------------------------------------


@dataclass
class DimensionResult:
    """Root of the pressure with its certified bracket."""

    delta: float
    bracket: tuple
    pressure_error: float
    error: float
    method: str

    def __float__(self):
        return self.delta


def bowen_dimension(evaluator: PressureEvaluator, s_min: float | None = None, s_max: float | None = None,
                    xtol: float = 1e-12) -> DimensionResult:
    """Zero of ``s -> P(s)`` by a scan followed by Brent's method."""
    system = evaluator.system
    d = system.ambient_dim
    lo = s_min if s_min is not None else 1e-3
    hi = s_max if s_max is not None else d + 0.5
    grid = np.linspace(lo, hi, 41)
    prev_s, prev_p = None, None
    bracket = None
    for s in grid:
        p = evaluator.value(s)
        if prev_p is not None and prev_p > 0 and p < 0:
            bracket = (prev_s, s)
            break
        if np.isfinite(p) or p > 0:
            prev_s, prev_p = s, p
    if bracket is None:
        # no branching (e.g. a single map): P(0) = log rho(A) = 0 and the limit set is a point
        if s_min is None and not system.tails and abs(evaluator.value(0.0)) <= 1e-12 and evaluator.value(lo) < 0:
            return DimensionResult(0.0, (0.0, 0.0), 0.0, 0.0, evaluator.method)
        raise NotRegularError("pressure has no sign change in the scanned range")
    a, b = bracket
    if not np.isfinite(evaluator.value(a)):
        # tighten from the divergent side
        for _ in range(60):
            mid = 0.5 * (a + b)
            pm = evaluator.value(mid)
            if not np.isfinite(pm) or pm > 0:
                a = mid
                if np.isfinite(pm):
                    break
            else:
                b = mid
    root = brentq(evaluator.value, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    w = 4e-9
    if evaluator.value(root - w) > 0 and evaluator.value(root + w) < 0:
        br = (root - w, root + w)
    else:
        br = (a, b)
    perr = evaluator.pressure(root).error
    h = 1e-4
    slope = abs(evaluator.value(root + h) - evaluator.value(root - h)) / (2 * h)
    err = perr / slope if slope > 0 else np.inf
    return DimensionResult(float(root), br, float(perr), float(err + (br[1] - br[0]) / 2), evaluator.method)


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


def _stack_den_range(mats: np.ndarray, conj: np.ndarray, domain) -> np.ndarray:
    """Vectorized minimum of ``|c w + d|`` over a domain for matrix stacks."""
    c = mats[:, 1, 0]
    d = mats[:, 1, 1]
    if isinstance(domain, Interval):
        x = np.where(np.abs(c) > 0, -np.real(np.conj(c) * d) / np.maximum(np.abs(c) ** 2, 1e-300), domain.lo)
        x = np.clip(x, domain.lo, domain.hi)
        return np.minimum.reduce([np.abs(c * domain.lo + d), np.abs(c * domain.hi + d), np.abs(c * x + d)])
    center = np.where(conj, np.conj(domain.center), domain.center)
    safe = np.where(np.abs(c) > 0, c, 1.0)
    dist = np.abs(center + d / safe)
    out = np.abs(c) * np.maximum(0.0, dist - domain.radius)
    return np.where(np.abs(c) > 0, out, np.abs(d))


@dataclass
class CylinderTable:
    """Words of one length with their measures and derivative data."""

    words: np.ndarray
    m: np.ndarray
    mu: np.ndarray
    sup_log: np.ndarray

    @property
    def psi(self) -> np.ndarray:
        return self.mu / self.m


@dataclass
class CylinderMeasure:
    """Conformal measure ``m`` and invariant measure ``mu`` on cylinders.

    Built either from the collocation eigen-data (``method="operator"``) or
    from the depth-``k`` cylinder model (``method="cylinder"``).
    """

    system: Gdms
    delta: float
    depth: int
    method: str
    eigenvalue: float
    tables: dict = field(default_factory=dict)
    _op: TransferOperator | None = None
    _left: np.ndarray | None = None
    _right: np.ndarray | None = None

    def table(self, n: int) -> CylinderTable:
        if n not in self.tables:
            if self.method != "operator":
                raise InvalidInputError(f"depth {n} not available for a depth-{self.depth} model")
            self.tables.update(_operator_tables(self, n))
        return self.tables[n]

    def mass(self, word) -> float:
        """``m([word])``."""
        word = tuple(word)
        if not word:
            return 1.0
        t = self.table(len(word))
        idx = np.nonzero(np.all(t.words == np.array(word), axis=1))[0]
        return float(t.m[idx[0]]) if len(idx) else 0.0

    def invariant_mass(self, word) -> float:
        word = tuple(word)
        if not word:
            return 1.0
        t = self.table(len(word))
        idx = np.nonzero(np.all(t.words == np.array(word), axis=1))[0]
        return float(t.mu[idx[0]]) if len(idx) else 0.0

    def integrate(self, func_by_vertex) -> float:
        """``int f dm`` for ``f`` given as ``vertex -> callable`` (operator method)."""
        if self._op is None:
            raise InvalidInputError("integration needs the operator-based measure")
        vals = {v: func_by_vertex(v, b.nodes) for v, b in enumerate(self._op.bases)}
        return float(self._left @ self._op.coefficients(vals))

    def density(self, x, vertex: int = 0) -> np.ndarray:
        """``psi = d mu / d m`` at points of a vertex domain."""
        if self._op is None:
            raise InvalidInputError("density evaluation needs the operator-based measure")
        return self._op.evaluate(self._right, vertex, x)

    def word_masses(self, words) -> np.ndarray:
        """``m([w])`` for a stack of equal-length words without building full tables."""
        if self._op is None:
            raise InvalidInputError("direct word masses need the operator-based measure")
        words = np.atleast_2d(np.asarray(words, dtype=np.int64))
        n = words.shape[1]
        system, op = self.system, self._op
        term = np.asarray(system.alphabet.terminal)[words[:, -1]]
        out = np.empty(len(words))
        for v in np.unique(term):
            rows = np.flatnonzero(term == v)
            b = op.bases[v]
            y = np.broadcast_to(b.nodes, (len(rows), len(b.nodes))).copy()
            acc = np.zeros(y.shape)
            for j in range(n - 1, -1, -1):
                col = words[rows, j]
                for e in np.unique(col):
                    sel = col == e
                    m = system.maps[e]
                    acc[sel] += m.log_abs_derivative(y[sel])
                    y[sel] = m.apply(y[sel])
            left = self._left[op.coef_offsets[v] : op.coef_offsets[v + 1]]
            out[rows] = ((np.exp(self.delta * acc) / self.eigenvalue**n) @ b.projector.T) @ left
        return out

    def psi_at(self, word) -> float:
        """``mu([w]) / m([w])``."""
        return self.invariant_mass(word) / self.mass(word)

    def gibbs_constant(self, max_len: int) -> float:
        """Smallest ``C`` with ``1/C <= m([w]) / ||phi_w'||^delta <= C`` for ``|w| <= max_len``."""
        worst = 1.0
        for n in range(1, max_len + 1):
            t = self.table(n)
            ratio = t.m / np.exp(self.delta * t.sup_log)
            worst = max(worst, float(np.max(ratio)), float(1.0 / np.min(ratio)))
        return worst


def _operator_tables(meas: CylinderMeasure, max_len: int) -> dict:
    """Cylinder masses for all lengths up to ``max_len`` from the eigen-data."""
    system = meas.system
    op = meas._op
    A = system.incidence.matrix
    lam = meas.eigenvalue
    delta = meas.delta
    moeb = system.all_moebius
    out = {}
    # state per terminal vertex: words grown by prepending
    states = []
    for v, b in enumerate(op.bases):
        lasts = [e for e in range(system.n_letters) if system.alphabet.terminal[e] == v]
        for e in lasts:
            m = system.maps[e]
            st = {
                "v": v,
                "words": np.array([[e]]),
                "y": m.apply(b.nodes)[None, :],
                "acc": m.log_abs_derivative(b.nodes)[None, :],
            }
            if moeb:
                mo = m.as_moebius()
                st["mats"] = mo.matrix[None].copy()
                st["conj"] = np.array([mo.conjugate])
            states.append(st)
    for n in range(1, max_len + 1):
        if n > 1:
            new_states = []
            for st in states:
                first = st["words"][:, 0]
                pieces = []
                for f in range(system.n_letters):
                    sel = A[f, first]
                    if not sel.any():
                        continue
                    mf = system.maps[f]
                    yy = st["y"][sel]
                    piece = {
                        "words": np.concatenate([np.full((int(sel.sum()), 1), f), st["words"][sel]], axis=1),
                        "y": mf.apply(yy),
                        "acc": st["acc"][sel] + mf.log_abs_derivative(yy),
                    }
                    if moeb:
                        mo = mf.as_moebius()
                        rhs = np.conj(st["mats"][sel]) if mo.conjugate else st["mats"][sel]
                        piece["mats"] = mo.matrix[None] @ rhs
                        piece["conj"] = st["conj"][sel] ^ mo.conjugate
                    pieces.append(piece)
                if pieces:
                    merged = {k: np.concatenate([p[k] for p in pieces]) for k in pieces[0]}
                    merged["v"] = st["v"]
                    new_states.append(merged)
            states = new_states
        words, ms, mus, sups = [], [], [], []
        for st in states:
            v = st["v"]
            b = op.bases[v]
            P = b.projector
            c0, c1 = op.coef_offsets[v], op.coef_offsets[v + 1]
            left = meas._left[c0:c1]
            jac = np.exp(delta * st["acc"]) / lam**n
            ms.append((jac @ P.T) @ left)
            h_img = np.empty_like(st["acc"])
            for dst in range(system.alphabet.n_vertices):
                sel = np.asarray(system.alphabet.initial)[st["words"][:, 0]] == dst
                if sel.any():
                    coef = meas._right[op.coef_offsets[dst] : op.coef_offsets[dst + 1]]
                    h_img[sel] = op.bases[dst].evaluate(st["y"][sel]) @ coef
            mus.append(((jac * h_img) @ P.T) @ left)
            if moeb:
                dom = system.domains[v]
                den = _stack_den_range(st["mats"], st["conj"], dom)
                sups.append(-2.0 * np.log(den))
            else:
                sups.append(st["acc"].max(axis=1))
            words.append(st["words"])
        order_words = np.concatenate(words)
        order = np.lexsort(order_words.T[::-1])
        out[n] = CylinderTable(
            order_words[order], np.concatenate(ms)[order], np.concatenate(mus)[order], np.concatenate(sups)[order]
        )
    return out


def gibbs_measure(system: Gdms, delta: float, depth: int = 6, method: str = "auto",
                  degree: int | None = None, tol: float = 1e-12, max_iter: int = 100000) -> CylinderMeasure:
    """Conformal measure ``m_delta`` and invariant measure ``mu_delta`` on cylinders.

    Parameters
    ----------
    system : Gdms
    delta : float
        Bowen dimension (``P(delta) = 0``).
    depth : int
        Cylinder length tabulated eagerly.
    method : {"auto", "operator", "cylinder"}
        ``operator`` uses left/right eigenvectors of the collocation matrix;
        ``cylinder`` runs power iteration on the depth-``k`` model.
    """
    if method == "auto":
        method = "operator" if operator_supported(system) else "cylinder"
    if method == "operator":
        op = TransferOperator(system, degree)
        lam, left, right, _ = op.eigen(delta)
        ones = op.coefficients({v: np.ones(len(b.nodes)) for v, b in enumerate(op.bases)})
        left = left / (left @ ones)
        right = right / (left @ right)
        if np.mean(right) < 0:
            right = -right
        meas = CylinderMeasure(system, delta, depth, "operator", lam, {}, op, left, right)
        meas.tables.update(_operator_tables(meas, depth))
        return meas
    if method != "cylinder":
        raise InvalidInputError(f"unknown measure method {method!r}")
    model = SpectralModel(system, depth)
    lam, left, right = model.power_iteration(delta, tol, max_iter)
    m = left / left.sum()
    h = right / (m @ right)
    mu = m * h
    tables = {}
    words = model.words
    for n in range(depth, 0, -1):
        if n == depth:
            mm, uu = m, mu
        else:
            codes = word_codes(words[:, :n], system.n_letters)
            uniq, inv = np.unique(codes, return_inverse=True)
            mm = np.bincount(inv, weights=m)
            uu = np.bincount(inv, weights=mu)
            first = np.unique(codes, return_index=True)[1]
            tables[n] = CylinderTable(words[first, :n], mm, uu, _sup_logs_for(system, words[first, :n]))
            continue
        tables[n] = CylinderTable(words, mm, uu, _sup_logs_for(system, words))
    return CylinderMeasure(system, delta, depth, "cylinder", lam, tables)


def _sup_logs_for(system: Gdms, words: np.ndarray) -> np.ndarray:
    if system.all_similarity:
        r = np.log(np.abs([m.ratio for m in system.maps]))
        return r[words].sum(axis=1)
    return np.array([system.word_sup_log(tuple(int(e) for e in w)) for w in words])


# --------------------------------------------------------------------------
# Lyapunov exponent, variance, spectral probes
# --------------------------------------------------------------------------


@dataclass
class LyapunovResult:
    chi: float
    chi_fd: float
    chi_integral: float
    relative_difference: float
    flagged: bool

    def __float__(self):
        return self.chi


def _require_hyperbolic(system: Gdms):
    if detect_parabolic(system).is_parabolic:
        raise MustInduceError("parabolic system: induce first")


def lyapunov(system: Gdms, delta: float, evaluator: PressureEvaluator | None = None, h: float = 1e-4,
             depth: int = 6) -> LyapunovResult:
    """Lyapunov exponent ``chi = -P'(delta)`` by two independent estimates.

    The finite-difference estimate differentiates the pressure; the integral
    estimate averages ``-log |phi'|`` against the invariant measure (via the
    eigenvalue derivative formula for the collocation operator, or cylinder
    averages otherwise). Estimates differing by more than 1% are flagged.
    """
    _require_hyperbolic(system)
    ev = evaluator or PressureEvaluator(system)
    chi_fd = -(ev.value(delta + h) - ev.value(delta - h)) / (2 * h)
    if ev.method == "operator":
        op = ev.operator()
        lam, left, right, _ = op.eigen(delta)
        dA = op.projector @ op.values_matrix(delta, derivative=True)
        chi_int = -float(left @ dA @ right) / float(left @ right) / lam
    else:
        d = 1 if system.all_similarity else depth
        meas = gibbs_measure(system, delta, d, method="cylinder")
        t = meas.table(d)
        per = np.zeros(len(t.words))
        # -log |phi_w'(anchor of sigma^d w)| / d via the chain rule
        centers = np.array([dd.center for dd in system.domains])
        x = centers[np.asarray(system.alphabet.terminal)[t.words[:, -1]]]
        if system.ambient_dim == 1:
            x = x.real
        for j in range(d - 1, -1, -1):
            col = t.words[:, j]
            for e in np.unique(col):
                sel = col == e
                per[sel] -= system.maps[e].log_abs_derivative(x[sel])
                x[sel] = system.maps[e].apply(x[sel])
        chi_int = float(np.sum(t.mu * per) / d)
    rel = abs(chi_fd - chi_int) / abs(chi_int)
    return LyapunovResult(float(chi_int if ev.method != "words" else chi_fd), float(chi_fd), float(chi_int), float(rel),
                          bool(rel > 0.01))


def variance(system: Gdms, delta: float, evaluator: PressureEvaluator | None = None, h: float = 1e-3,
             tol: float = 1e-7) -> float:
    """Asymptotic variance ``sigma^2 = P''(delta)``.

    Second central difference with step ``h`` refined by Richardson
    extrapolation with ``h/2``.
    """
    _require_hyperbolic(system)
    ev = evaluator or PressureEvaluator(system)

    def d2(step):
        return (ev.value(delta + step) - 2 * ev.value(delta) + ev.value(delta - step)) / step**2

    val = (4 * d2(h / 2) - d2(h)) / 3
    if val < -tol:
        raise NumericalInstabilityError(f"negative variance estimate {val:.3g}")
    return max(float(val), 0.0)


def spectral_radius_complex(system: Gdms, s: complex, depth: int = 8) -> float:
    """Spectral radius of the depth-``k`` model at complex ``s``, divided by
    its value at ``Re s``."""
    _require_hyperbolic(system)
    model = SpectralModel(system, depth)
    return model.spectral_radius(complex(s)) / model.spectral_radius(float(np.real(s)))


@dataclass
class ResidueProbe:
    eps: np.ndarray
    values: np.ndarray
    extrapolated: float
    tail_fraction: np.ndarray
    unreliable: bool
    expected: float | None = None


def poincare_residue_probe(system: Gdms, rho, tau=(), delta: float | None = None,
                           eps=(0.1, 0.05, 0.025, 0.0125), max_len: int = 400,
                           degree: int | None = None) -> ResidueProbe:
    """Probe the residue of the localized Poincaré series at ``s = delta``.

    ``eta(s) = sum_w |phi_w'(xi)|^s`` over words ``w`` starting with ``tau``
    (and admissible before ``rho``). Partial sums are taken up to word length
    ``max_len`` in the collocation discretization; the remainder is computed
    from the resolvent and reported as a fraction of the total. Values
    ``eps * eta(delta + eps)`` are Richardson-extrapolated to ``eps -> 0``.

    Parameters
    ----------
    rho : Coding
        Eventually periodic reference coding (see :mod:`gdmskit.counting`).
    tau : tuple
        Cylinder prefix.
    """
    from .counting import Coding

    _require_hyperbolic(system)
    if not isinstance(rho, Coding):
        rho = Coding((), tuple(rho))
    if delta is None:
        delta = bowen_dimension(PressureEvaluator(system)).delta
    op = TransferOperator(system, degree)
    xi = rho.point(system)
    v_xi = system.alphabet.initial[rho.first]
    tau = tuple(tau)
    eps = np.asarray(eps, dtype=float)
    vals = np.empty(len(eps))
    tails = np.empty(len(eps))
    for k, e in enumerate(eps):
        s = delta + e
        A = op.matrix(s)
        if tau:
            fmap = system.compose(tau)
            v_t = system.alphabet.terminal[tau[-1]]
            f = {v_t: np.exp(s * fmap.log_abs_derivative(op.bases[v_t].nodes))}
            start = len(tau)
        else:
            f = {v: np.ones(len(b.nodes)) for v, b in enumerate(op.bases)}
            start = 1
        c = op.coefficients(f)
        if not tau:
            c = A @ c
        total_coef = np.linalg.solve(np.eye(op.size) - A, c)
        partial = np.zeros_like(c)
        term = c.copy()
        for _ in range(max_len - start + 1):
            partial += term
            term = A @ term
        ev_total = float(op.evaluate(total_coef, v_xi, xi)[0])
        ev_part = float(op.evaluate(partial, v_xi, xi)[0])
        vals[k] = e * ev_part
        tails[k] = abs(ev_total - ev_part) / abs(ev_total)
    # Richardson table for a sequence halving eps
    table = [vals.copy()]
    for j in range(1, len(vals)):
        prev = table[-1]
        table.append(np.array([(2**j * prev[i + 1] - prev[i]) / (2**j - 1) for i in range(len(prev) - 1)]))
    extrap = float(table[-1][-1]) if len(vals) > 1 else float(vals[-1])
    return ResidueProbe(eps, vals, extrap, tails, bool(np.any(tails > 0.1)))


# --------------------------------------------------------------------------
# summary
# --------------------------------------------------------------------------


@dataclass
class ThermoReport:
    delta: float
    chi: float
    sigma2: float
    gibbs_C: float
    method: dict

    def to_dict(self) -> dict:
        return {"delta": self.delta, "chi": self.chi, "sigma2": self.sigma2, "gibbs_C": self.gibbs_C,
                "method": self.method}


def thermo_report(system: Gdms, gibbs_depth: int = 6, evaluator: PressureEvaluator | None = None) -> ThermoReport:
    ev = evaluator or PressureEvaluator(system)
    dim = bowen_dimension(ev)
    ly = lyapunov(system, dim.delta, ev)
    s2 = variance(system, dim.delta, ev)
    meas = gibbs_measure(system, dim.delta, gibbs_depth)
    C = meas.gibbs_constant(gibbs_depth)
    return ThermoReport(dim.delta, ly.chi, s2, C, {"pressure": ev.method, "measure": meas.method,
                                                   "delta_error": dim.error, "chi_flagged": ly.flagged})

"""Alphabets, incidence matrices, admissible words and periodic-word enumeration.

Edges are always the integers ``0 .. n_edges-1``; human readable names live in
``Alphabet.labels``. Words are plain tuples of edge indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

Word = tuple


@dataclass(frozen=True)
class Alphabet:
    """Directed multigraph ``(V, E, i, t)``.

    Parameters
    ----------
    initial, terminal : tuple of int
        Vertex indices ``i(e)`` and ``t(e)`` for each edge.
    n_vertices : int
        Number of vertices.
    labels : tuple, optional
        Display name of each edge (defaults to the edge index).
    """

    initial: tuple
    terminal: tuple
    n_vertices: int = 1
    labels: tuple = ()

    def __post_init__(self):
        if len(self.initial) != len(self.terminal):
            raise InvalidInputError("initial and terminal maps must cover the same edges")
        for v in itertools.chain(self.initial, self.terminal):
            if not 0 <= v < self.n_vertices:
                raise InvalidInputError(f"vertex {v} out of range")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(self.initial))))
        if len(self.labels) != len(self.initial):
            raise InvalidInputError("one label per edge is required")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInputError("edge labels must be unique")

    @classmethod
    def single_vertex(cls, n: int, labels: Sequence[Hashable] = ()) -> "Alphabet":
        """Alphabet of an iterated function system (one vertex)."""
        return cls((0,) * n, (0,) * n, 1, tuple(labels))

    @property
    def n_edges(self) -> int:
        return len(self.initial)

    @property
    def edges(self) -> range:
        return range(self.n_edges)

    def index(self, label) -> int:
        """Edge index for a display label."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidInputError(f"unknown edge label {label!r}") from None


@dataclass(frozen=True)
class IncidenceMatrix:
    """0/1 transition matrix ``A``; ``A[a, b] = 1`` allows ``b`` to follow ``a``.

    Structured infinite alphabets are represented by a rule evaluated at an
    explicit truncation level (see :meth:`from_rule`).
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("incidence matrix must be square")
        if not np.all((m == 0) | (m == 1)):
            raise InvalidInputError("incidence entries must be 0 or 1")
        m = m.astype(bool)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def full(cls, n: int) -> "IncidenceMatrix":
        return cls(np.ones((n, n), dtype=bool))

    @classmethod
    def from_rule(cls, n: int, rule: Callable[[int, int], bool]) -> "IncidenceMatrix":
        """Materialize a rule-based matrix on the first ``n`` symbols."""
        return cls(np.array([[bool(rule(a, b)) for b in range(n)] for a in range(n)]))

    @classmethod
    def maximal(cls, alphabet: Alphabet) -> "IncidenceMatrix":
        """``A[a, b] = 1`` exactly when ``t(a) == i(b)``."""
        t = np.asarray(alphabet.terminal)
        i = np.asarray(alphabet.initial)
        return cls(t[:, None] == i[None, :])

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def allowed(self, a: int, b: int) -> bool:
        return bool(self.matrix[a, b])

    def is_compatible(self, alphabet: Alphabet) -> bool:
        """Check that every allowed transition is compatible with the graph."""
        t = np.asarray(alphabet.terminal)
        i = np.asarray(alphabet.initial)
        ok = t[:, None] == i[None, :]
        return bool(np.all(ok | ~self.matrix))

    def is_maximal(self, alphabet: Alphabet) -> bool:
        t = np.asarray(alphabet.terminal)
        i = np.asarray(alphabet.initial)
        return bool(np.array_equal(t[:, None] == i[None, :], self.matrix))


def _check_symbols(word: Sequence[int], n: int) -> None:
    for s in word:
        if not isinstance(s, (int, np.integer)) or not 0 <= s < n:
            raise InvalidInputError(f"unknown symbol {s!r}")


def is_admissible(word: Sequence[int], A: IncidenceMatrix) -> bool:
    """True iff every adjacent pair of ``word`` is allowed by ``A``."""
    _check_symbols(word, A.size)
    return all(A.matrix[a, b] for a, b in zip(word[:-1], word[1:]))


@dataclass(frozen=True)
class CylinderSpec:
    """Cylinder ``[prefix]`` of infinite words starting with ``prefix``."""

    prefix: Word

    def contains(self, word: Sequence[int]) -> bool:
        return tuple(word[: len(self.prefix)]) == tuple(self.prefix)

    def __len__(self) -> int:
        return len(self.prefix)


def admissible_words(A: IncidenceMatrix, n: int, start: Iterable[int] | None = None) -> np.ndarray:
    """All admissible words of length ``n`` in lexicographic order.

    Returns
    -------
    ndarray of shape (count, n)
    """
    if n < 0:
        raise InvalidInputError("word length must be non-negative")
    first = np.arange(A.size) if start is None else np.asarray(sorted(start), dtype=int)
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    words = first[:, None].astype(np.int64)
    m = A.matrix
    for _ in range(n - 1):
        last = words[:, -1]
        rows, nxt = np.nonzero(m[last])
        words = np.concatenate([words[rows], nxt[:, None]], axis=1)
    return words


def periodic_words(A: IncidenceMatrix, n: int) -> list:
    """Admissible words of length ``n`` that close up (``A[w_n, w_1] = 1``)."""
    if n < 1:
        raise InvalidInputError("periodic words need n >= 1")
    w = admissible_words(A, n)
    keep = A.matrix[w[:, -1], w[:, 0]]
    return [tuple(int(s) for s in row) for row in w[keep]]


def is_finitely_irreducible(A: IncidenceMatrix, search_depth: int = 3):
    """Semi-decide finite irreducibility.

    Searches connector words of length ``<= search_depth``.

    Returns
    -------
    tuple
        ``("yes", witness_set)`` or ``("unknown", None)``.
    """
    n = A.size
    m = A.matrix
    need = np.ones((n, n), dtype=bool)
    witness: list = []
    # connectors of increasing length; empty word first
    for length in range(0, search_depth + 1):
        if not need.any():
            break
        for w in admissible_words(A, length):
            if length == 0:
                ok = m.copy()
            else:
                ok = m[:, w[0]][:, None] & m[w[-1], :][None, :]
            gain = ok & need
            if gain.any():
                witness.append(tuple(int(s) for s in w))
                need &= ~ok
                if not need.any():
                    break
    if need.any():
        return ("unknown", None)
    return ("yes", tuple(witness))

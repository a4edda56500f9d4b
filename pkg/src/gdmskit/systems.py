"""Factories for the standard example systems."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError
from .gdms import GaussTail, Gdms
from .kleinian import (
    Circle,
    SchottkyData,
    apollonian_triangle_ifs,
    build_apollonian,
    build_schottky_gdms,
)
from .maps import Interval, Moebius, NumericBranch, similarity
from .symbolic import Alphabet, IncidenceMatrix

UNIT = Interval(0.0, 1.0)


def similarity_system(ratios, shifts=None, name: str = "similarity") -> Gdms:
    """Real similarities ``x -> r_i x + c_i`` on ``[0, 1]``.

    Without shifts the images are laid out left to right with equal gaps.
    """
    ratios = [float(r) for r in ratios]
    if not ratios or any(not 0 < abs(r) < 1 for r in ratios):
        raise InvalidInputError("ratios must satisfy 0 < |r| < 1")
    if shifts is None:
        total = sum(abs(r) for r in ratios)
        gap = (1 - total) / (len(ratios) - 1) if len(ratios) > 1 and total < 1 else 0.0
        shifts, pos = [], 0.0
        for r in ratios:
            shifts.append(pos if r > 0 else pos - r)
            pos += abs(r) + gap
    maps = [similarity(r, c) for r, c in zip(ratios, shifts)]
    n = len(maps)
    return Gdms(Alphabet.single_vertex(n), IncidenceMatrix.full(n), maps, (UNIT,), name=name)


def lattice_system(ratio: float = 0.5, k: int = 2) -> Gdms:
    """``k`` equal-ratio similarities."""
    return similarity_system([ratio] * k, name="lattice")


def gauss_system(N: int = 200, tail: bool = True) -> Gdms:
    """Continued-fraction branches ``x -> 1/(x+n)``, ``n = 1..N``."""
    if N < 1:
        raise InvalidInputError("truncation N must be >= 1")
    maps = [Moebius(np.array([[0.0, 1.0], [1.0, float(n)]])) for n in range(1, N + 1)]
    tails = (GaussTail(N),) if tail else ()
    return Gdms(Alphabet.single_vertex(N), IncidenceMatrix.full(N), maps, (UNIT,), iterate_order=2,
                tails=tails, name=f"gauss{N}")


def farey_system() -> Gdms:
    """Inverse branches of the Farey map: ``x/(1+x)`` (parabolic at 0) and ``1/(1+x)``."""
    maps = [Moebius(np.array([[1.0, 0.0], [1.0, 1.0]])), Moebius(np.array([[0.0, 1.0], [1.0, 1.0]]))]
    return Gdms(Alphabet.single_vertex(2), IncidenceMatrix.full(2), maps, (UNIT,), name="farey")


def manneville_pomeau_system(alpha: float) -> Gdms:
    """Inverse branches of ``x -> x + x^(1+alpha) mod 1``."""
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    c = brentq(lambda x: x + x ** (1 + alpha) - 1, 0.0, 1.0, xtol=1e-15)

    def f0(x):
        x = np.asarray(x, dtype=float)
        return x + np.abs(x) ** (1 + alpha)

    def df(x):
        return 1 + (1 + alpha) * np.abs(np.asarray(x, dtype=float)) ** alpha

    def f1(x):
        return f0(x) - 1

    maps = [NumericBranch(f0, df, 0.0, c, name="mp-left"), NumericBranch(f1, df, c, 1.0, name="mp-right")]
    return Gdms(Alphabet.single_vertex(2), IncidenceMatrix.full(2), maps, (UNIT,), name=f"mp{alpha:g}",
                meta={"alpha": alpha, "cut": c})


def schottky_circles(offset: float = 2.0, radius: float = 1.2, q: int = 2) -> dict:
    """``2q`` equal disks centered on ``offset * exp(i pi k / q)``."""
    out = {}
    for j in range(1, q + 1):
        u = np.exp(1j * np.pi * (j - 1) / q)
        out[j] = Circle(offset * u, radius)
        out[-j] = Circle(-offset * u, radius)
    return out


def schottky_system(circles: dict | None = None, pairing: str = "bisector", tangency_allowed: bool = False) -> Gdms:
    """Pair-alphabet system of a Schottky group."""
    circles = circles or schottky_circles()
    if pairing == "bisector":
        data = SchottkyData.from_bisector_pairs(circles, tangency_allowed)
    elif pairing == "reflection":
        data = SchottkyData.reflection_group(circles, tangency_allowed)
    else:
        raise InvalidInputError(f"unknown pairing {pairing!r}")
    return build_schottky_gdms(data)


def standard_apollonian_circles():
    """The bounded packing with curvatures (-1, 2, 2, 3)."""
    return (
        Circle(-0.5, 0.5),
        Circle(0.5, 0.5),
        Circle(2j / 3, 1 / 3),
        Circle(0, 1.0, "exterior"),
    )


def apollonian_triangle(circles=None) -> Gdms:
    """Parabolic triangle IFS of the first three circles."""
    c1, c2, c3, _ = circles or standard_apollonian_circles()
    return apollonian_triangle_ifs(c1, c2, c3).gdms()


def apollonian(circles=None):
    return build_apollonian(*(circles or standard_apollonian_circles()))

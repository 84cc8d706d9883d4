"""Interval maps with explicit inverse-branch inventories.

Three maps are bundled:

* ``gauss``: z -> 1/z - floor(1/z), countably many full branches
  z in (1/(b+1), 1/b], inverse y -> 1/(b+y).
* ``doubling``: z -> 2z mod 1.
* ``afu``: z -> 2.5 z mod 1 on [0, 0.4), [0.4, 0.8), [0.8, 1]. The last
  branch only covers [0, 0.5], and 0.5 is not a partition point, so the
  partition is not Markov. Its image set is {[0, 1), [0, 0.5]}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class LinearBranch:
    """f(z) = slope * z - shift on [lo, hi]."""

    lo: float
    hi: float
    slope: float
    shift: float

    @property
    def image(self):
        return (self.slope * self.lo - self.shift, self.slope * self.hi - self.shift)

    def forward(self, z):
        return self.slope * np.asarray(z, dtype=float) - self.shift

    def inverse(self, y):
        return (np.asarray(y, dtype=float) + self.shift) / self.slope

    def inv_deriv(self, y):
        return np.full(np.shape(y), 1.0 / self.slope)

    def mass(self, y0, y1):
        """Lebesgue measure of the preimage of [y0, y1] inside this branch."""
        return (np.asarray(y1) - np.asarray(y0)) / self.slope


@dataclass(frozen=True)
class GaussBranch:
    b: int

    @property
    def lo(self):
        return 1.0 / (self.b + 1)

    @property
    def hi(self):
        return 1.0 / self.b

    @property
    def image(self):
        return (0.0, 1.0)

    def forward(self, z):
        return 1.0 / np.asarray(z, dtype=float) - self.b

    def inverse(self, y):
        return 1.0 / (self.b + np.asarray(y, dtype=float))

    def inv_deriv(self, y):
        return 1.0 / (self.b + np.asarray(y, dtype=float)) ** 2

    def mass(self, y0, y1):
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        # written as a quotient so tiny pieces keep full relative precision
        return (y1 - y0) / ((self.b + y0) * (self.b + y1))


@dataclass
class IntervalMap:
    kind: str
    branches: tuple = ()
    beta: float = 0.0
    breaks: tuple = ()
    images: tuple = ()
    _expansion: float | None = field(default=None, repr=False)

    @property
    def countable(self) -> bool:
        return self.kind == "gauss"

    def branch(self, b: int):
        if self.countable:
            return GaussBranch(b)
        return self.branches[b]

    def step(self, z):
        """One application of f to an array (float64, no endpoint handling)."""
        z = np.asarray(z)
        if self.kind == "gauss":
            y = 1.0 / z
            return y - np.floor(y)
        # every bundled finite map is beta z mod 1 (shift = floor of beta z)
        y = self.beta * z
        return y - np.floor(y)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "gauss":
            return -1.0 / z**2
        out = np.empty_like(z)
        for br in self.branches:
            sel = (z >= br.lo) & (z <= br.hi)
            out[sel] = br.slope
        return out

    def second_derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "gauss":
            return 2.0 / z**3
        return np.zeros_like(z)

    def expansion(self, points: int = 20001) -> tuple:
        """(rho, k): inf |(f^k)'|^(1/k) on a grid, with k=2 for the Gauss map whose f' reaches 1 at z=1."""
        z = np.linspace(0.0, 1.0, points + 2)[1:-1]
        if self.kind == "gauss":
            fz = self.step(z)
            keep = fz > 0
            d2 = np.abs(self.derivative(z[keep]) * self.derivative(fz[keep]))
            return float(np.sqrt(d2.min())), 2
        return float(np.abs(self.derivative(z)).min()), 1

    def adler(self, points: int = 20001) -> float:
        """sup |f''| / f'^2 estimated on a grid."""
        z = np.linspace(0.0, 1.0, points + 2)[1:-1]
        return float(np.max(np.abs(self.second_derivative(z)) / self.derivative(z) ** 2))


def gauss_map() -> IntervalMap:
    return IntervalMap("gauss", images=((0.0, 1.0),))


def doubling_map() -> IntervalMap:
    br = (LinearBranch(0.0, 0.5, 2.0, 0.0), LinearBranch(0.5, 1.0, 2.0, 1.0))
    return IntervalMap("doubling", br, beta=2.0, breaks=(0.5,), images=((0.0, 1.0),))


def afu_map(beta: float = 2.5) -> IntervalMap:
    """beta z mod 1 with the final branch truncated; beta in (2, 3) leaves a partial last branch."""
    if not (2.0 < beta < 3.0):
        raise ValueError("bundled non-Markov map needs beta in (2, 3)")
    br = (LinearBranch(0.0, 1.0 / beta, beta, 0.0),
          LinearBranch(1.0 / beta, 2.0 / beta, beta, 1.0),
          LinearBranch(2.0 / beta, 1.0, beta, 2.0))
    return IntervalMap("afu", br, beta=beta, breaks=(1.0 / beta, 2.0 / beta),
                       images=((0.0, 1.0), (0.0, beta - 2.0)))


MAPS = {"gauss": gauss_map, "doubling": doubling_map, "afu": afu_map}


def make_map(kind: str) -> IntervalMap:
    try:
        return MAPS[kind]()
    except KeyError:
        raise ValueError(f"unknown map kind {kind!r}; choose from {sorted(MAPS)}") from None


def gauss_density(z):
    return 1.0 / ((1.0 + np.asarray(z, dtype=float)) * math.log(2.0))


def parry_density(z, beta: float = 2.5, terms: int = 80):
    """Invariant density of z -> beta z mod 1: sum_k beta^-k 1{z < T^k(1)}, normalised."""
    b = Fraction(beta).limit_denominator(10**6)
    orbit = []
    t = Fraction(1)
    for _ in range(terms):
        orbit.append(float(t))
        t = b * t
        t -= math.floor(t)
        if t == 0:
            break
    orbit = np.array(orbit)
    w = float(beta) ** -np.arange(orbit.size)
    # total mass: sum_k beta^-k T^k(1)
    norm = float(np.dot(w, orbit))
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    vals = (z[:, None] < orbit[None, :]) @ w / norm
    return float(vals[0]) if scalar else vals


def invariant_density(imap: IntervalMap):
    if imap.kind == "gauss":
        return gauss_density
    if imap.kind == "doubling":
        return lambda z: np.ones(np.shape(z))
    return lambda z: parry_density(z, imap.beta)


@dataclass
class Orbit:
    points: np.ndarray
    perturbed: tuple

    @property
    def flagged(self) -> bool:
        return bool(self.perturbed)


def _step_ld(imap: IntervalMap, z):
    if imap.kind == "gauss":
        y = np.longdouble(1) / z
        return y - np.floor(y)
    for br in imap.branches:
        if z < br.hi or br is imap.branches[-1]:
            return np.longdouble(br.slope) * z - np.longdouble(br.shift)
    raise AssertionError


def orbit(imap: IntervalMap, z0: float, n: int) -> Orbit:
    """z0, f z0, ..., f^n z0 in extended precision.

    An iterate whose image lands exactly on 0 or 1 sits on a partition
    endpoint; it is moved up by one ulp and its index recorded.
    """
    if not (0.0 < z0 < 1.0):
        raise ValueError("z0 must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.longdouble(z0)
    out = np.empty(n + 1, dtype=np.longdouble)
    out[0] = z
    flags = []
    one = np.longdouble(1)
    for k in range(1, n + 1):
        y = _step_ld(imap, z)
        tries = 0
        while (y <= 0 or y >= one) and tries < 8:
            z = np.nextafter(z, one)
            y = _step_ld(imap, z)
            tries += 1
        if tries:
            out[k - 1] = z
            flags.append(k - 1)
        out[k] = y
        z = y
    return Orbit(out, tuple(flags))

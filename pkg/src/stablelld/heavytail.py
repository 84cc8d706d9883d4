"""Regularly varying test laws with exact tails and exact-inverse sampling.

Continuous scalar law: P(X > x) = p T(x), P(X <= -x) = q T(x) for x >= 1,
T(x) = ell(x) x^-alpha, and the leftover mass uniform on (-1, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .svf import SlowlyVarying, check_alpha, tail_integral

HALF_ULP = 2.0**-54


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator for substream ``index`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # shift [0,1) grid by half a step so 0 never occurs
    return rng.random(size) + HALF_ULP


@dataclass(frozen=True)
class PowerTail:
    """T(x) = ell(x) x^-alpha on [1, inf) with its inverse."""

    alpha: float
    ell: SlowlyVarying = field(default_factory=SlowlyVarying)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.ell(x) * x ** (-self.alpha)

    @property
    def t1(self) -> float:
        return float(self(1.0))

    def _log_tail(self, lx):
        lc = math.log(self.ell.c)
        return lc + self.ell.beta * np.log(np.log(math.e + np.exp(lx))) - self.alpha * lx

    def inverse(self, w):
        """x >= 1 with T(x) = w, for 0 < w <= T(1)."""
        w = np.asarray(w, dtype=float)
        if self.ell.is_constant:
            out = np.maximum((w / self.ell.c) ** (-1.0 / self.alpha), 1.0)
            return out if out.ndim else float(out)
        lw = np.log(w)
        lo = np.zeros_like(lw)
        hi = np.maximum((math.log(self.ell.c) - lw) / self.alpha, 1.0) + 1.0
        while True:
            bad = self._log_tail(hi) > lw
            if not bad.any():
                break
            hi = np.where(bad, hi * 2.0, hi)
        for _ in range(110):
            mid = 0.5 * (lo + hi)
            up = self._log_tail(mid) > lw
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        out = np.exp(0.5 * (lo + hi))
        return out if out.ndim else float(out)

    def check_decreasing(self, points: int = 2000):
        lx = np.linspace(0.0, math.log(1e15), points)
        vals = self._log_tail(lx)
        if np.any(np.diff(vals) >= 0):
            raise ValueError("tail T is not strictly decreasing on [1, inf)")


@dataclass(frozen=True)
class ScalarTailSpec:
    alpha: float
    p: float
    q: float
    ell: SlowlyVarying = field(default_factory=SlowlyVarying)

    d = 1
    is_lattice = False

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.p < 0 or self.q < 0 or self.p + self.q <= 0:
            raise ValueError("need p, q >= 0 with p + q > 0")
        T = PowerTail(self.alpha, self.ell)
        T.check_decreasing()
        if (self.p + self.q) * T.t1 > 1 + 1e-12:
            raise ValueError("(p + q) T(1) exceeds 1")
        object.__setattr__(self, "T", T)

    @property
    def body_mass(self) -> float:
        return max(0.0, 1.0 - (self.p + self.q) * self.T.t1)

    def tail(self, x):
        return self.T(x)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        t1 = self.T.t1
        lo_cut = self.q * t1
        hi_cut = 1.0 - self.p * t1
        if self.ell.is_constant:
            return self._ppf_power(u, lo_cut, hi_cut)
        out = np.empty_like(u)
        left = u < lo_cut
        right = u >= hi_cut
        mid = ~(left | right)
        if left.any():
            out[left] = -self.T.inverse(np.minimum(u[left] / self.q, t1))
        if right.any():
            out[right] = self.T.inverse(np.minimum((1.0 - u[right]) / self.p, t1))
        if mid.any():
            out[mid] = -1.0 + 2.0 * (u[mid] - lo_cut) / self.body_mass
        return out if out.ndim else float(out)

    def _ppf_power(self, u, lo_cut, hi_cut):
        # one power evaluation for both tails, then select
        right = u >= hi_cut
        with np.errstate(divide="ignore"):
            w = np.where(right, (1.0 - u) / (self.p * self.ell.c) if self.p else 1.0,
                         u / (self.q * self.ell.c) if self.q else 1.0)
        mag = np.maximum(w ** (-1.0 / self.alpha), 1.0)
        B = self.body_mass
        body = -1.0 + 2.0 * (u - lo_cut) / B if B > 0 else 0.0
        out = np.where(right, mag, np.where(u < lo_cut, -mag, body))
        return out if out.ndim else float(out)

    def sample(self, rng, size):
        return self.ppf(open_uniform(rng, size))

    def cdf(self, x):
        """P(X <= x)."""
        x = np.asarray(x, dtype=float)
        t1 = self.T.t1
        ax = np.maximum(np.abs(x), 1.0)
        Tx = self.T(ax)
        body = self.q * t1 + self.body_mass * np.clip((x + 1.0) / 2.0, 0.0, 1.0)
        out = np.where(x <= -1.0, self.q * Tx, np.where(x >= 1.0, 1.0 - self.p * Tx, body))
        return out if out.ndim else float(out)

    def sf(self, x):
        """P(X > x), accurate in the right tail."""
        x = np.asarray(x, dtype=float)
        ax = np.maximum(np.abs(x), 1.0)
        Tx = self.T(ax)
        body = self.p * self.T.t1 + self.body_mass * np.clip((1.0 - x) / 2.0, 0.0, 1.0)
        out = np.where(x >= 1.0, self.p * Tx, np.where(x <= -1.0, 1.0 - self.q * Tx, body))
        return out if out.ndim else float(out)

    cdf_left = cdf

    def atom(self, x):
        return np.zeros(np.shape(x))

    def interval_prob(self, a, b):
        """P(a < X <= b), using whichever tail keeps precision."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        left = self.cdf(b) - self.cdf(a)
        right = self.sf(a) - self.sf(b)
        out = np.where(a >= 0, right, left)
        return np.maximum(out, 0.0)

    def mean(self) -> float:
        if self.alpha < 1:
            return float("nan")
        ti = tail_integral(self.ell, self.alpha)
        return (self.p - self.q) * (self.T.t1 + ti)


@dataclass(frozen=True)
class SpectralMeasure:
    thetas: tuple
    weights: tuple

    def __post_init__(self):
        th = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if th.shape[0] != w.shape[0]:
            raise ValueError("one weight per atom")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if np.any(np.abs(np.linalg.norm(th, axis=1) - 1.0) > 1e-12):
            raise ValueError("atoms must be unit vectors")
        object.__setattr__(self, "thetas", tuple(map(tuple, th)))
        object.__setattr__(self, "weights", tuple(w))

    @property
    def d(self) -> int:
        return len(self.thetas[0])

    @property
    def theta_array(self) -> np.ndarray:
        return np.asarray(self.thetas, dtype=float)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def alpha_moment(self, u, alpha):
        """sum_i w_i |u . theta_i|^alpha for directions u of shape (..., d)."""
        proj = np.asarray(u, dtype=float) @ self.theta_array.T
        return np.abs(proj) ** alpha @ self.weight_array


def sphere_grid(d: int, count: int = 10_000) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        # u and -u give the same moment, a half circle suffices
        phi = np.linspace(0.0, np.pi, count, endpoint=False)
        return np.column_stack([np.cos(phi), np.sin(phi)])
    if d == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + 5**0.5) * i
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    rng = stream(0)
    g = rng.standard_normal((count, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class Nondegeneracy:
    minimum: float
    witness: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.minimum < 1e-8


def nondegeneracy_check(sigma: SpectralMeasure, alpha: float) -> Nondegeneracy:
    d = sigma.d
    grid = sphere_grid(d)
    vals = sigma.alpha_moment(grid, alpha)
    k = int(np.argmin(vals))
    best, u = float(vals[k]), grid[k]
    if d == 2:
        phi0 = math.atan2(u[1], u[0])
        step = np.pi / len(grid)
        f = lambda ph: float(sigma.alpha_moment(np.array([math.cos(ph), math.sin(ph)]), alpha))
        res = optimize.minimize_scalar(f, bounds=(phi0 - step, phi0 + step), method="bounded",
                                       options={"xatol": 1e-12})
        if res.fun < best:
            best, u = float(res.fun), np.array([math.cos(res.x), math.sin(res.x)])
    elif d >= 3:
        f = lambda v: float(sigma.alpha_moment(v / np.linalg.norm(v), alpha))
        res = optimize.minimize(f, u, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        if res.fun < best:
            best, u = float(res.fun), res.x / np.linalg.norm(res.x)
    return Nondegeneracy(best, np.asarray(u))


@dataclass(frozen=True)
class RadialLaw:
    """|X| for the multivariate law: P(R > r) = T(r) for r >= 1, uniform (0,1) body."""

    alpha: float
    ell: SlowlyVarying = field(default_factory=SlowlyVarying)

    def __post_init__(self):
        T = PowerTail(self.alpha, self.ell)
        T.check_decreasing()
        if T.t1 > 1 + 1e-12:
            raise ValueError("T(1) exceeds 1")
        object.__setattr__(self, "T", T)

    @property
    def body_mass(self) -> float:
        return max(0.0, 1.0 - self.T.t1)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        B = self.body_mass
        out = np.empty_like(u)
        body = u < B
        out[body] = u[body] / B if B > 0 else 0.0
        out[~body] = self.T.inverse(np.minimum(1.0 - u[~body], self.T.t1))
        return out

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        rr = np.maximum(r, 1.0)
        return np.where(r >= 1.0, 1.0 - self.T(rr), self.body_mass * np.clip(r, 0.0, 1.0))

    def sf(self, r):
        r = np.asarray(r, dtype=float)
        rr = np.maximum(r, 1.0)
        return np.where(r >= 1.0, self.T(rr), 1.0 - self.body_mass * np.clip(r, 0.0, 1.0))

    def interval_prob(self, a, b):
        """P(a < R <= b) with a <= b elementwise allowed to be empty."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = np.where(a >= 1.0, self.sf(a) - self.sf(b), self.cdf(b) - self.cdf(a))
        return np.maximum(out, 0.0)

    def mean(self) -> float:
        return 0.5 * self.body_mass + self.T.t1 + tail_integral(self.ell, self.alpha)


@dataclass(frozen=True)
class MultiTailSpec:
    alpha: float
    sigma: SpectralMeasure
    ell: SlowlyVarying = field(default_factory=SlowlyVarying)
    require_nondegenerate: bool = True

    is_lattice = False

    def __post_init__(self):
        check_alpha(self.alpha)
        nd = nondegeneracy_check(self.sigma, self.alpha)
        if nd.degenerate and self.require_nondegenerate:
            raise ValueError(f"degenerate spectral measure: moment {nd.minimum:.3e} along {nd.witness}")
        object.__setattr__(self, "radial", RadialLaw(self.alpha, self.ell))

    @property
    def d(self) -> int:
        return self.sigma.d

    def mean(self) -> np.ndarray:
        if self.alpha < 1:
            return np.full(self.d, np.nan)
        return self.radial.mean() * (self.sigma.weight_array @ self.sigma.theta_array)

    def atom_index(self, u):
        cw = np.cumsum(self.sigma.weight_array)
        cw[-1] = 1.0
        return np.minimum(np.searchsorted(cw, u, side="right"), len(cw) - 1)

    def sample(self, rng, size):
        u1 = open_uniform(rng, size)
        u2 = open_uniform(rng, size)
        return sample_multivariate(self, u1, u2)


def sample_scalar(spec: ScalarTailSpec, u):
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie in (0, 1)")
    return spec.ppf(u)


def sample_multivariate(spec: MultiTailSpec, u1, u2):
    r = spec.radial.ppf(np.atleast_1d(u1))
    idx = spec.atom_index(np.atleast_1d(u2))
    return r[:, None] * spec.sigma.theta_array[idx]


@dataclass(frozen=True)
class LatticeSpec:
    """Integer-valued law on span*Z: P(X >= N span) = p N^-alpha, P(X <= -N span) = q N^-alpha."""

    alpha: float
    p: float
    q: float
    span: int = 1
    cutoff: int = 4096

    d = 1
    is_lattice = True

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.p < 0 or self.q < 0 or self.p + self.q <= 0 or self.p + self.q > 1 + 1e-12:
            raise ValueError("need p, q >= 0 with 0 < p + q <= 1")
        if int(self.span) < 1:
            raise ValueError("span must be a positive integer")
        k = np.arange(1, self.cutoff + 1, dtype=float)
        object.__setattr__(self, "pmf_table", k ** (-self.alpha) - (k + 1) ** (-self.alpha))

    @property
    def zero_mass(self) -> float:
        return max(0.0, 1.0 - self.p - self.q)

    def _mag_pmf(self, k):
        # P(floor(Y) = k) for Pareto Y, k >= 1
        k = np.asarray(k, dtype=float)
        return np.where(k >= 1, np.maximum(k, 1.0) ** (-self.alpha) - (k + 1.0) ** (-self.alpha), 0.0)

    def pmf(self, x):
        """P(X = x) for real x (zero off the lattice)."""
        x = np.asarray(x, dtype=float)
        k = x / self.span
        on = np.isclose(k, np.round(k), rtol=0, atol=1e-9)
        kk = np.abs(np.round(k))
        side = np.where(k > 0, self.p, self.q)
        out = np.where(kk == 0, self.zero_mass, side * self._mag_pmf(kk))
        out = np.where(on, out, 0.0)
        return out if out.ndim else float(out)

    atom = pmf

    def tail_count(self, N):
        """P(X >= N span) for integer N >= 1."""
        return self.p * np.asarray(N, dtype=float) ** (-self.alpha)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x / self.span + 1e-12)
        pos = 1.0 - self.p * np.maximum(k + 1.0, 1.0) ** (-self.alpha)
        neg = self.q * np.maximum(-k, 1.0) ** (-self.alpha)
        out = np.where(k >= 0, pos, neg)
        return out if out.ndim else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x / self.span + 1e-12)
        pos = self.p * np.maximum(k + 1.0, 1.0) ** (-self.alpha)
        neg = 1.0 - self.q * np.maximum(-k, 1.0) ** (-self.alpha)
        out = np.where(k >= 0, pos, neg)
        return out if out.ndim else float(out)

    def cdf_left(self, x):
        return self.cdf(x) - self.pmf(x)

    def interval_prob(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = np.where(a >= 0, self.sf(a) - self.sf(b), self.cdf(b) - self.cdf(a))
        return np.maximum(out, 0.0)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        left = u < self.q
        right = u >= self.q + self.zero_mass
        out[left] = -np.floor((u[left] / self.q) ** (-1.0 / self.alpha))
        out[right] = np.floor(((1.0 - u[right]) / self.p) ** (-1.0 / self.alpha))
        return self.span * out

    def sample(self, rng, size):
        return self.ppf(open_uniform(rng, size))

    def mean(self) -> float:
        if self.alpha < 1:
            return float("nan")
        return self.span * (self.p - self.q) * float(special.zeta(self.alpha))


def lattice_spec(alpha: float, p: float, q: float, span: int = 1) -> LatticeSpec:
    return LatticeSpec(alpha, p, q, span)


@dataclass(frozen=True)
class MixedLatticeSpec:
    """Lattice variable plus, with probability ``weight``, an independent uniform of one span."""

    base: LatticeSpec
    weight: float = 0.1

    d = 1
    is_lattice = False

    def __post_init__(self):
        if not (0.0 < self.weight < 1.0):
            raise ValueError("weight must lie in (0, 1)")

    @property
    def alpha(self) -> float:
        return self.base.alpha

    def _smooth_cdf(self, x):
        s = self.base.span
        x = np.asarray(x, dtype=float)
        star = s * np.floor((x + 0.5 * s) / s)
        frac = np.clip((x - star) / s + 0.5, 0.0, 1.0)
        return self.base.cdf(star - 0.5 * s) + self.base.pmf(star) * frac

    def cdf(self, x):
        w = self.weight
        return (1.0 - w) * self.base.cdf(x) + w * self._smooth_cdf(x)

    def sf(self, x):
        w = self.weight
        return (1.0 - w) * self.base.sf(x) + w * self._smooth_sf(x)

    def pmf(self, x):
        return (1.0 - self.weight) * self.base.pmf(x)

    atom = pmf

    def cdf_left(self, x):
        return self.cdf(x) - self.pmf(x)

    def _smooth_sf(self, x):
        s = self.base.span
        x = np.asarray(x, dtype=float)
        star = s * np.floor((x + 0.5 * s) / s)
        frac = np.clip((x - star) / s + 0.5, 0.0, 1.0)
        return self.base.sf(star) + self.base.pmf(star) * (1.0 - frac)

    def interval_prob(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        w = self.weight
        lat = self.base.interval_prob(a, b)
        sm = np.where(a >= 0, self._smooth_sf(a) - self._smooth_sf(b),
                      self._smooth_cdf(b) - self._smooth_cdf(a))
        return np.maximum((1.0 - w) * lat + w * sm, 0.0)

    def ppf(self, u, u2, u3):
        lat = self.base.ppf(u)
        jump = (u2 < self.weight) * (u3 - 0.5) * self.base.span
        return lat + jump

    def sample(self, rng, size):
        u = open_uniform(rng, size)
        u2 = open_uniform(rng, size)
        u3 = open_uniform(rng, size)
        return self.ppf(u, u2, u3)

    def mean(self) -> float:
        return self.base.mean()

"""Slowly varying functions, the alpha=2 correction, and norming sequences."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

E = math.e


def check_alpha(alpha: float) -> float:
    """Validate a stability index; alpha = 1 is excluded everywhere."""
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0,1) or (1,2], got {alpha}")
    if alpha == 1.0:
        raise ValueError("alpha = 1 is excluded (its centering needs a truncated mean)")
    return alpha


@dataclass(frozen=True)
class SlowlyVarying:
    """ell(x) = c * log(e + x)**beta."""

    c: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError("scale c must be positive and finite")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")

    @property
    def family(self) -> str:
        return "constant" if self.beta == 0 else "log-power"

    @property
    def is_constant(self) -> bool:
        return self.beta == 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.beta == 0:
            out = np.full(x.shape, self.c)
        else:
            out = self.c * np.log(E + x) ** self.beta
        return out if out.ndim else float(out)


def eval_ell(ell: SlowlyVarying, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("ell is evaluated on x >= 0")
    return ell(x)


class _TildeTable:
    """Cumulative integral of ell(u)/u on a geometric grid, filled lazily.

    Values between nodes are exact: the remaining piece is integrated from
    the nearest node below, so the result is monotone by construction.
    """

    def __init__(self, ell: SlowlyVarying, ratio: float = 2.0):
        self.ell = ell
        self.ratio = ratio
        self.nodes = [1.0]
        self.values = [0.0]
        self.lock = threading.Lock()

    def _piece(self, a, b):
        # log substitution keeps the integrand flat over wide ranges
        g = lambda t: self.ell(math.exp(t))
        val, err = integrate.quad(g, math.log(a), math.log(b), epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    def __call__(self, y: float) -> float:
        # integral from 1 to y, y >= 1
        with self.lock:
            while self.nodes[-1] < y:
                a = self.nodes[-1]
                b = a * self.ratio
                self.values.append(self.values[-1] + self._piece(a, b))
                self.nodes.append(b)
            k = int(np.searchsorted(self.nodes, y, side="right")) - 1
            a, v = self.nodes[k], self.values[k]
        return v + (self._piece(a, y) if y > a else 0.0)


def eval_ell_tilde(ell: SlowlyVarying, alpha: float, x, _table=None):
    """ell for alpha < 2, else 1 + int_1^{1+x} ell(u)/u du."""
    alpha = check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("ell_tilde is evaluated on x >= 0")
    if alpha < 2:
        return ell(x)
    if ell.is_constant:
        out = 1.0 + ell.c * np.log1p(x)
        return out if out.ndim else float(out)
    table = _table if _table is not None else _TildeTable(ell)
    out = np.array([1.0 + table(1.0 + xi) for xi in x.ravel()]).reshape(x.shape)
    return out if out.ndim else float(out)


@dataclass
class NormingSeq:
    """Norming constants a_n, b_n for a tail index alpha and slowly varying ell.

    ``mean`` is E[X] (scalar or vector); it only matters for alpha > 1.
    ``tilde_override`` replaces ell_tilde by a constant, useful for checks.
    """

    alpha: float
    ell: SlowlyVarying = field(default_factory=SlowlyVarying)
    mean: object = 0.0
    tilde_override: float | None = None
    a_max: float = 1e300

    def __post_init__(self):
        self.alpha = check_alpha(self.alpha)
        self._memo: dict[int, float] = {}
        self._lock = threading.Lock()
        self._table = _TildeTable(self.ell)

    def ell_tilde(self, x):
        if self.tilde_override is not None:
            x = np.asarray(x, dtype=float)
            out = np.full(x.shape, float(self.tilde_override))
            return out if out.ndim else float(out)
        return eval_ell_tilde(self.ell, self.alpha, x, _table=self._table)

    def _g(self, log_a: float) -> float:
        # log(a^alpha / ell_tilde(a)), monotone for supported families
        return self.alpha * log_a - math.log(self.ell_tilde(math.exp(log_a)))

    def a(self, n: int) -> float:
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        with self._lock:
            hit = self._memo.get(n)
        if hit is not None:
            return hit
        target = math.log(n)
        lo, hi = 0.0, 1.0
        while self._g(lo) > target:
            lo -= 8.0
            if lo < -700:
                raise ArithmeticError("no bracket for a_n below 1; check ell")
        hi = max(lo + 1.0, 1.0)
        while self._g(hi) < target:
            hi *= 2.0
            if hi > math.log(self.a_max):
                raise ArithmeticError("A_max exhausted while bracketing a_n; ell mis-specified")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self._g(mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, abs(hi)):
                break
        a = math.exp(0.5 * (lo + hi))
        resid = n * self.ell_tilde(a) / a**self.alpha - 1.0
        if abs(resid) > 1e-10:
            raise ArithmeticError(f"a_n residual {resid:.3e}; g may be non-monotone")
        with self._lock:
            self._memo[n] = a
        return a

    def b(self, n: int):
        mean = np.asarray(self.mean, dtype=float)
        if self.alpha < 1:
            return np.zeros_like(mean) if mean.ndim else 0.0
        out = n * mean
        return out if out.ndim else float(out)


def compute_a_n(norm: NormingSeq, n: int) -> float:
    return norm.a(n)


def compute_b_n(tail, n: int):
    """n E[X] for alpha > 1, zero for alpha < 1. ``tail`` needs alpha and mean()."""
    alpha = check_alpha(tail.alpha)
    m = np.asarray(tail.mean(), dtype=float)
    if alpha < 1:
        return np.zeros_like(m) if m.ndim else 0.0
    out = n * m
    return out if out.ndim else float(out)


def tail_integral(ell: SlowlyVarying, alpha: float) -> float:
    """int_1^inf ell(x) x^{-alpha} dx for alpha > 1."""
    if alpha <= 1:
        raise ValueError("tail integral diverges for alpha <= 1")
    if ell.is_constant:
        return ell.c / (alpha - 1.0)
    # x = e^t; log(e + e^t) evaluated without overflow
    g = lambda t: ell.c * np.logaddexp(1.0, t) ** ell.beta * math.exp((1.0 - alpha) * t)
    val, _ = integrate.quad(g, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    return val


def karamata_check(ell: SlowlyVarying, alpha: float, K: float) -> float:
    """Ratio int_0^K x^-alpha ell(x) dx / ((1-alpha)^-1 K^{1-alpha} ell(K)); tends to 1."""
    alpha = check_alpha(alpha)
    if alpha > 1:
        raise ValueError("integrand x^-alpha ell(x) is not integrable at infinity-scale for alpha >= 1")
    if K < 10:
        raise ValueError("K must be >= 10")
    if ell.is_constant:
        return 1.0
    # split [0,1] and log-substituted [1,K]
    head, _ = integrate.quad(lambda x: x**-alpha * ell(x), 0.0, 1.0, epsrel=1e-12, limit=200)
    body, _ = integrate.quad(
        lambda t: ell(math.exp(t)) * math.exp((1.0 - alpha) * t),
        0.0, math.log(K), epsrel=1e-12, limit=400,
    )
    return (head + body) / (K ** (1.0 - alpha) * ell(K) / (1.0 - alpha))


@dataclass(frozen=True)
class PotterReport:
    delta: float
    C: float
    worst_pair: tuple


def potter_check(ell: SlowlyVarying, delta: float, x_min=1.0, x_max=1e12, points=400) -> PotterReport:
    """Smallest C with ell(y)/ell(x) <= C max((y/x)^d, (x/y)^d) over a log grid."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = np.geomspace(x_min, x_max, points)
    L = np.log(ell(x))
    lx = np.log(x)
    # log ratio minus log of the Potter factor, over all pairs
    gap = (L[None, :] - L[:, None]) - delta * np.abs(lx[None, :] - lx[:, None])
    i, j = np.unravel_index(np.argmax(gap), gap.shape)
    return PotterReport(delta, float(np.exp(gap[i, j])), (float(x[i]), float(x[j])))

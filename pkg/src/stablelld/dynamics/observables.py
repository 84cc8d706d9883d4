"""Observables on [0, 1] and exact twisted integrals of power observables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..charfn import pareto_complement
from ..svf import check_alpha

SERIES_LIMIT = 8.0
ASYMPTOTIC_FROM = 50.0
_GL64 = np.polynomial.legendre.leggauss(64)


@dataclass
class Observable:
    """v(z) = z^(-1/alpha) - kappa (``power``) or a user function (``custom``).

    ``breaks`` lists points where a custom v jumps; the transfer assembly
    splits cells there. For the power kind, kappa is either given or left
    as None and filled in by the transfer model (centering for alpha > 1).
    """

    alpha: float
    kind: str = "power"
    kappa: float | None = 0.0
    func: object = field(default=None, repr=False)
    breaks: tuple = ()

    def __post_init__(self):
        if self.kind == "power":
            self.alpha = check_alpha(self.alpha)
        elif self.kind != "custom" or self.func is None:
            raise ValueError("custom observables need func")

    @classmethod
    def power(cls, alpha: float, centered: bool | None = None) -> "Observable":
        centered = alpha > 1 if centered is None else centered
        return cls(alpha, "power", None if centered else 0.0)

    @classmethod
    def indicator(cls, lo: float, hi: float, height: float, alpha: float = 2.0) -> "Observable":
        """height * 1_[lo, hi); alpha is only a nominal label."""
        f = lambda z: height * ((np.asarray(z) >= lo) & (np.asarray(z) < hi))
        return cls(alpha, "custom", 0.0, f, tuple(b for b in (lo, hi) if 0.0 < b < 1.0))

    @property
    def k(self) -> float:
        return 0.0 if self.kappa is None else self.kappa

    def raw(self, z):
        """Uncentered part: z^(-1/alpha) or func(z)."""
        z = np.asarray(z, dtype=float)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                return z ** (-1.0 / self.alpha)
        return np.asarray(self.func(z), dtype=float)

    def __call__(self, z):
        return self.raw(z) - self.k

    def raw_integral(self, z0, z1):
        """int_{z0}^{z1} raw(z) dz for the power kind (alpha > 1 when z0 = 0)."""
        p = 1.0 - 1.0 / self.alpha
        z0 = np.asarray(z0, dtype=float)
        z1 = np.asarray(z1, dtype=float)
        if abs(p) < 1e-14:
            return np.log(z1 / z0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (z1**p - z0**p) / p


def oscillatory_tail(x, beta: float):
    """E(x) = int_x^inf e^{iu} u^-beta du for x >= 8 and beta > 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=complex)
    far = x >= ASYMPTOTIC_FROM
    if np.any(far):
        out[far] = _asymptotic(x[far], beta)
    near = ~far
    if np.any(near):
        xn = x[near]
        t, w = _GL64
        half = 0.5 * (ASYMPTOTIC_FROM - xn)
        u = xn[:, None] + half[:, None] * (t + 1.0)
        body = (half[:, None] * w * np.exp(1j * u) * u**-beta).sum(axis=1)
        out[near] = body + _asymptotic(np.full(xn.shape, ASYMPTOTIC_FROM), beta)
    return out


def _asymptotic(x, beta: float, terms: int = 60):
    # i e^{ix} x^-beta sum_k (beta)_k (-i/x)^k, truncated at its smallest term
    acc = np.zeros(x.shape, dtype=complex)
    term = np.ones(x.shape, dtype=complex)
    best = np.full(x.shape, np.inf)
    done = np.zeros(x.shape, dtype=bool)
    for k in range(terms):
        mag = np.abs(term)
        done |= (mag > best) | (mag < 1e-18)
        if done.all():
            break
        acc = np.where(done, acc, acc + term)
        best = np.minimum(best, mag)
        term = term * (beta + k) * (-1j / x)
    return 1j * np.exp(1j * x) * x**-beta * acc


def tail_transform(T, s: float, alpha: float):
    """G(T) = int_T^inf e^{i s t} alpha t^(-alpha-1) dt; G(inf) = 0."""
    T = np.asarray(T, dtype=float)
    out = np.zeros(T.shape, dtype=complex)
    fin = np.isfinite(T)
    if s == 0.0:
        out[fin] = T[fin] ** -alpha
        return out
    Tf = T[fin]
    x = abs(s) * Tf
    res = np.empty(Tf.shape, dtype=complex)
    small = x <= SERIES_LIMIT
    if np.any(small):
        res[small] = Tf[small] ** -alpha * (1.0 - pareto_complement(s * Tf[small], alpha))
    big = ~small
    if np.any(big):
        e = oscillatory_tail(x[big], alpha + 1.0)
        e = e if s > 0 else np.conj(e)
        res[big] = alpha * abs(s) ** alpha * e
    out[fin] = res
    return out


def twisted_power_integral(obs: Observable, z0, z1, s: float):
    """int_{z0}^{z1} exp(i s v(z)) dz exactly, via t = z^(-1/alpha)."""
    a = obs.alpha
    with np.errstate(divide="ignore"):
        t0 = np.asarray(z0, dtype=float) ** (-1.0 / a)
        t1 = np.asarray(z1, dtype=float) ** (-1.0 / a)
    # z = t^-alpha, so int_{z0}^{z1} = G(t1) - G(t0)
    val = tail_transform(t1, s, a) - tail_transform(t0, s, a)
    return val * np.exp(-1j * s * obs.k)


def mean_of_power(alpha: float, density, panels: int = 200) -> float:
    """int z^(-1/alpha) density(z) dz for alpha > 1, graded toward 0."""
    if alpha <= 1:
        raise ValueError("the power observable is integrable only for alpha > 1")
    t, w = np.polynomial.legendre.leggauss(20)
    edges = np.concatenate([[0.0], np.geomspace(1e-16, 1.0, panels)])
    tot = 0.0
    for a_, b_ in zip(edges[:-1], edges[1:]):
        if a_ == 0.0:
            # near 0 the density is constant to leading order
            tot += float(density(np.array([b_ / 2]))[0]) * b_ ** (1 - 1 / alpha) / (1 - 1 / alpha)
            continue
        z = 0.5 * (a_ + b_) + 0.5 * (b_ - a_) * t
        tot += 0.5 * (b_ - a_) * float(np.dot(w, z ** (-1 / alpha) * density(z)))
    return math.fsum([tot])

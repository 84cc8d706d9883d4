"""Band-limited smoothing pair (gamma, r) used by the Fourier majorant.

Transform convention: f_hat(xi) = int f(x) exp(-i x xi) dx. The pair satisfies
gamma0 >= 1 on [-2, 2], gamma0_hat supported in [-eps, eps], and
1_[-1,1](u) <= int r0(xi) exp(i u xi) dxi.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, interpolate, optimize

CACHE_VERSION = 1
BUMP_NODES = 2**13 + 1  # self-convolution then has 2^14 + 1 nodes


class KernelError(RuntimeError):
    pass


def base_bump(xi, eps: float):
    """exp(-1/(1 - (2 xi/eps)^2)) on |xi| < eps/2, zero elsewhere."""
    xi = np.asarray(xi, dtype=float)
    u = 2.0 * xi / eps
    inside = np.abs(u) < 1.0
    uu = np.where(inside, u, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - uu * uu)), 0.0)


def inverse_transform(fhat_vals, xi, x):
    """(1/2pi) int fhat(xi) cos(x xi) dxi for an even fhat on a uniform grid (trapezoid)."""
    h = xi[1] - xi[0]
    w = np.full(xi.shape, h)
    w[0] = w[-1] = 0.5 * h
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.shape)
    for i in range(0, x.size, 512):
        xs = x.ravel()[i:i + 512]
        out.ravel()[i:i + 512] = np.cos(np.outer(xs, xi)) @ (w * fhat_vals)
    return out / (2.0 * np.pi)


@dataclass
class SmoothingKernel:
    eps: float
    a: float
    c: float
    xi: np.ndarray = field(repr=False)       # grid of gamma0_hat on [-a eps, a eps]
    gamma_hat: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)        # grid of gamma0 on [-L, L]
    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        self._spline = interpolate.CubicSpline(self.xi, self.gamma_hat, bc_type="clamped")
        self._half = float(self.xi[-1])

    def gamma_hat0(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < self._half
        return np.where(inside, self._spline(np.where(inside, s, 0.0)), 0.0)

    def r0(self, s):
        s = np.asarray(s, dtype=float)
        small = np.abs(s) < 1e-4
        ss = np.where(small, 1.0, s)
        sinc = np.where(small, 1.0 - s * s / 6.0, np.sin(ss) / ss)
        return sinc * self.gamma_hat0(s) / (2.0 * np.pi)

    def gamma0(self, y):
        """gamma0 = (c g(a y))^2 by direct quadrature of the bump."""
        xi = np.linspace(-self.eps / 2, self.eps / 2, BUMP_NODES)
        g = inverse_transform(base_bump(xi, self.eps), xi, self.a * np.asarray(y, dtype=float))
        return (self.c * g) ** 2

    @property
    def band(self) -> float:
        return self._half


def _cache_path(eps: float) -> Path | None:
    root = os.environ.get("LLD_CACHE_DIR")
    if not root:
        return None
    key = hashlib.sha256(f"{eps!r}:{BUMP_NODES}:{CACHE_VERSION}".encode()).hexdigest()[:16]
    return Path(root) / f"kernel_{key}.npz"


_MEMO: dict = {}


def build_kernel(eps: float = 0.25, L: float = 64.0, nx: int = 2**13 + 1) -> SmoothingKernel:
    if not (0.0 < eps <= math.pi / 4 + 1e-12):
        raise KernelError("eps must lie in (0, pi/4]")
    eps = float(eps)
    if eps in _MEMO:
        return _MEMO[eps]
    path = _cache_path(eps)
    if path is not None and path.exists():
        z = np.load(path)
        k = SmoothingKernel(eps, float(z["a"]), float(z["c"]), z["xi"], z["gamma_hat"], z["x"], z["gamma"])
        _MEMO[eps] = k
        return k

    # step 1-2: bump and its inverse transform
    xi = np.linspace(-eps / 2, eps / 2, BUMP_NODES)
    bump = base_bump(xi, eps)
    probe = np.linspace(0.0, 2.0, 2001)
    # step 3: dilation scan, g(a x) > 0 on [-2, 2]
    a = None
    for k in range(200):
        cand = 0.9**k
        if inverse_transform(bump, xi, cand * probe).min() > 0:
            a = cand
            break
    if a is None:
        raise KernelError("dilation step: no scale keeps g positive on [-2, 2]")
    # step 4: scale so c g(a x) >= 1 on [-2, 2]
    coarse = inverse_transform(bump, xi, a * probe)
    j = int(np.argmin(coarse))
    lo, hi = probe[max(j - 1, 0)], probe[min(j + 1, probe.size - 1)]
    res = optimize.minimize_scalar(lambda t: float(inverse_transform(bump, xi, a * t)[0]),
                                   bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    gmin = min(float(coarse[j]), float(res.fun))
    c = 1.0 / gmin * (1.0 + 1e-9)
    # step 5: square; transform is (c^2 / (2 pi a)) (bump * bump)(xi / a)
    h = xi[1] - xi[0]
    conv = np.convolve(bump, bump) * h
    grid = np.linspace(-eps, eps, conv.size)
    gamma_hat = c * c / (2.0 * np.pi * a) * conv
    xg = np.linspace(-L, L, nx)
    gam = (c * inverse_transform(bump, xi, a * xg)) ** 2
    k = SmoothingKernel(eps, a, c, a * grid, gamma_hat, xg, gam)
    verify_kernel(k)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, a=a, c=c, xi=k.xi, gamma_hat=gamma_hat, x=xg, gamma=gam)
    _MEMO[eps] = k
    return k


@dataclass(frozen=True)
class KernelCheck:
    min_on_2: float
    min_gamma: float
    parseval_err: float
    mass_err: float
    support_ok: bool
    r0_origin_err: float

    @property
    def ok(self) -> bool:
        return (self.min_on_2 >= 1.0 and self.min_gamma >= 0.0 and self.parseval_err <= 1e-6
                and self.support_ok and self.r0_origin_err <= 1e-12)


def check_kernel(k: SmoothingKernel, points: int = 10_000) -> KernelCheck:
    y = np.linspace(-2.0, 2.0, points)
    g2 = k.gamma0(y)
    h = k.xi[1] - k.xi[0]
    # trapezoid on the hat grid; the ends vanish to all orders
    parseval = abs(np.sum(k.gamma_hat) * h / (2 * np.pi) - k.gamma0(0.0)[0])
    # int gamma0 = gamma_hat(0): quadrature of the sampled gamma0 on [-L, L]
    mass = integrate.trapezoid(k.gamma, k.x)
    mass_err = abs(mass - float(k.gamma_hat0(0.0))) / float(k.gamma_hat0(0.0))
    edge = np.array([1.0001, 1.01, 1.5, 3.0]) * k.eps
    support_ok = bool(np.all(k.r0(edge) == 0) and np.all(k.r0(-edge) == 0) and k.band <= k.eps)
    r0err = abs(float(k.r0(0.0)) - float(k.gamma_hat0(0.0)) / (2 * np.pi))
    return KernelCheck(float(g2.min()), float(k.gamma.min()), float(parseval), float(mass_err),
                       support_ok, r0err)


def verify_kernel(k: SmoothingKernel):
    chk = check_kernel(k, points=2001)
    if chk.min_on_2 < 1.0:
        raise KernelError(f"scale step: gamma0 min on [-2,2] is {chk.min_on_2}")
    if chk.min_gamma < 0.0:
        raise KernelError("square step: gamma0 negative")
    if not chk.support_ok:
        raise KernelError("convolution step: support exceeds [-eps, eps]")
    if chk.parseval_err > 1e-6:
        raise KernelError(f"inverse transform step: Parseval error {chk.parseval_err}")


def eval_r(kernel: SmoothingKernel, s):
    """r(s) = prod_j r0(s_j); scalars and (..., d) arrays accepted."""
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        return float(kernel.r0(s))
    return np.prod(kernel.r0(s), axis=-1)


def smoothed_indicator(kernel: SmoothingKernel, u, panels: int = 64):
    """int r0(xi) exp(i u xi) dxi, which majorizes 1_[-1,1](u)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    b = kernel.band
    nodes, w = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(0.0, b, panels + 1)
    s = (0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * nodes).ravel()
    ws = (0.5 * np.diff(edges)[:, None] * w).ravel()
    return 2.0 * np.cos(np.outer(u, s)) @ (ws * kernel.r0(s))


def domination_check(kernel: SmoothingKernel, y=None) -> float:
    """min over y in [-1,1] of int_{-1}^{1} gamma0(y - z) dz; must be >= 2."""
    y = np.linspace(-1.0, 1.0, 201) if y is None else np.asarray(y, dtype=float)
    z, w = np.polynomial.legendre.leggauss(64)
    vals = np.array([np.dot(w, kernel.gamma0(yi - z)) for yi in y])
    return float(vals.min())

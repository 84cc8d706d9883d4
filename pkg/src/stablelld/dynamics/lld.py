"""Operator LLD bound and Birkhoff-sum sweeps.

The bound is sup_cells | int r0(s) exp(-isx) R(s)^n 1 ds | over |s| <= band.
R(-s) is the conjugate of R(s), so only s > 0 is assembled. Panels follow
the phase and modulus of lambda(s)^n (at most ``panel_change`` each), and on
every panel the 8-point interpolant of r0(s) R(s)^n 1 is integrated against
exp(-isx) exactly through Legendre moments

    int_{-1}^{1} P_k(t) exp(-i w t) dt = 2 (-i)^k j_k(w),

so the node count does not grow with |x|.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..heavytail import stream
from ..lld_verify import (CROSSOVER, LARGE, LLDReport, Envelope, Row, classify, regime_tag)
from ..mc import CHUNK, _chunks, _map, clopper_pearson
from ..smoothing import SmoothingKernel
from ..svf import NormingSeq, SlowlyVarying
from .transfer import TransferModel, leading_eig

PANEL_ORDER = 8
_GLP = np.polynomial.legendre.leggauss(PANEL_ORDER)
_PK = np.polynomial.legendre.legvander(_GLP[0], PANEL_ORDER - 1)  # P_k(t_q)


def filon_weights(omega) -> np.ndarray:
    """W[q](w) = int_{-1}^{1} ell_q(t) exp(-i w t) dt for the Lagrange basis on GL nodes."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    k = np.arange(PANEL_ORDER)
    jk = special.spherical_jn(k[None, :], np.abs(omega)[:, None])
    sgn = np.where(omega < 0, -1.0, 1.0)[:, None] ** k[None, :]
    mom = 2.0 * (-1j) ** k[None, :] * jk * sgn  # int P_k exp(-iwt)
    # Legendre coefficients of the interpolant: a_k = (2k+1)/2 sum_q w_q P_k(t_q) g_q
    coef = (2 * k[None, :] + 1) / 2.0 * _GLP[1][:, None] * _PK  # (q, k)
    return mom @ coef.T


@dataclass
class OperatorPanels:
    edges: np.ndarray
    nodes: np.ndarray  # (panels, 8)
    values: np.ndarray  # (panels, 8, m): r0(s) R(s)^n 1
    cut: float
    tail: float  # bound on the discarded |s| > cut part

    def bound(self, x) -> float:
        x = float(x)
        lo, hi = self.edges[:-1], self.edges[1:]
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        W = filon_weights(h * x)  # (panels, 8)
        phase = np.exp(-1j * c * x)[:, None] * h[:, None] * W
        vec = np.einsum("pq,pqm->m", phase, self.values)
        return float(np.abs(2.0 * vec.real).max()) + self.tail


def _lambda_n(model, s, n):
    lam = leading_eig(model, s, want_left=False).lam
    return n * np.log(complex(lam))


def operator_panels(model: TransferModel, kernel: SmoothingKernel, n: int, a_n: float,
                    log_floor: float = -20.0, panel_change: float = 3.0, grading: int = 8,
                    threads: int = 1) -> OperatorPanels:
    band = kernel.band
    if n == 0:
        edges = np.linspace(0.0, band, 9)
        return _fill(model, kernel, 0, edges, band, 0.0, threads)
    # dyadic breakpoints from 2^-grading / a_n, stopping once n log|lambda| < log_floor
    bps = [0.0]
    s = min(band, 2.0**-grading / a_n)
    logs = []
    cut = band
    while True:
        bps.append(s)
        L = _lambda_n(model, s, n)
        logs.append(L)
        if L.real < log_floor or s >= band:
            cut = s
            break
        s = min(2.0 * s, band)
    edges = [0.0, bps[1]]
    for i in range(1, len(bps) - 1):
        a_, b_ = bps[i], bps[i + 1]
        d = logs[i] - logs[i - 1]
        q = max(1, int(math.ceil(max(abs(d.real), abs(d.imag)) / panel_change)))
        edges.extend(np.linspace(a_, b_, q + 1)[1:])
    edges = np.asarray(edges)
    # |R(s)^n 1| <= 3 |lambda(s)|^n on the discarded range (checked by consistency_ratios)
    tail = 0.0 if cut >= band else 2.0 * 3.0 * float(kernel.r0(np.array([0.0]))[0]) * \
        math.exp(logs[-1].real) * (band - cut)
    return _fill(model, kernel, n, edges, cut, tail, threads)


def _fill(model, kernel, n, edges, cut, tail, threads):
    lo, hi = edges[:-1], edges[1:]
    nodes = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * _GLP[0]
    flat = nodes.ravel()

    def one(i):
        s = float(flat[i])
        x = model.pi.astype(complex)
        if n:
            P = model.matrix(s)
            for _ in range(n):
                x = P @ x
        return kernel.r0(np.array([s]))[0] * x / model.pi

    vals = np.array(_map(one, flat.size, threads)).reshape(nodes.shape + (model.m,))
    return OperatorPanels(edges, nodes, vals, cut, tail)


def operator_lld_bound(model: TransferModel, kernel: SmoothingKernel, n: int, x: float,
                       a_n: float | None = None, **kw) -> float:
    """Numerical sup-norm of int r(s) exp(-isx) R(s)^n 1 ds."""
    if n < 0:
        raise ValueError("n must be >= 0")
    a_n = a_n or max(1.0, float(n) ** (1.0 / model.obs.alpha))
    return operator_panels(model, kernel, n, a_n, **kw).bound(x)


def dynamic_norming(model: TransferModel) -> NormingSeq:
    """a_n for mu(v > t) ~ h(0) t^-alpha (power observable)."""
    return NormingSeq(model.obs.alpha, SlowlyVarying(c=model.tail_constant()))


def _orbit_chunk(model: TransferModel, rng, size: int, ladder, burn_in: int):
    """Birkhoff sums at each n in ``ladder`` for ``size`` invariant starts."""
    imap, obs = model.map, model.obs
    z = model.sample_invariant(rng.random(size), rng.random(size))
    one = 1.0
    flags = 0

    def step(z):
        nonlocal flags
        y = imap.step(z)
        bad = (y <= 0.0) | (y >= one)
        if bad.any():
            # partition endpoint hit: move the point up by one ulp
            flags += int(bad.sum())
            z = z.copy()
            z[bad] = np.nextafter(z[bad], one)
            y[bad] = imap.step(z[bad])
            y[bad] = np.clip(y[bad], np.nextafter(0.0, 1.0), np.nextafter(one, 0.0))
        return y

    for _ in range(burn_in):
        z = step(z)
    S = np.zeros(size)
    out = {}
    nmax = max(ladder)
    for k in range(1, nmax + 1):
        S += obs(z)
        z = step(z)
        if k in ladder:
            out[k] = S.copy()
    return out, flags


def birkhoff_hits(model: TransferModel, ladder, xs_by_n: dict, h: float = 1.0, N: int = 2**18,
                  seed: int = 0, threads: int = 1, burn_in: int = 1000):
    """Hit counts of v_n in [x - h, x + h] per n and x; substream-ordered, thread-count free."""
    if model.map.kind == "doubling":
        raise ValueError("binary floating point collapses doubling-map orbits to 0; "
                         "use the transfer operator for this map")
    ladder = sorted(set(int(n) for n in ladder))
    sizes = _chunks(N)

    def work(i):
        rng = stream(seed, i)
        sums, flags = _orbit_chunk(model, rng, sizes[i], ladder, burn_in)
        res = {}
        for n in ladder:
            xs = np.asarray(xs_by_n[n], dtype=float)
            S = np.sort(sums[n])
            res[n] = (np.searchsorted(S, xs + h, side="right") - np.searchsorted(S, xs - h, side="left"))
        return res, flags

    parts = _map(work, len(sizes), threads)
    hits = {n: np.sum([p[0][n] for p in parts], axis=0) for n in ladder}
    return hits, sum(p[1] for p in parts)


def default_dyn_grid(model: TransferModel, norm: NormingSeq, n: int, factors=None):
    a = norm.a(n)
    factors = factors or [0.0, 1 / 16, 1 / 4, 1 / 2, 1, 2, 4, 16, 64, 256]
    signs = [1.0] if model.obs.alpha < 1 else [1.0, -1.0]
    pts = []
    for sg in signs:
        for f in factors:
            if f == 0 and pts:
                continue
            pts.append(sg * f * a)
    return np.array(pts)


def birkhoff_lld_sweep(model: TransferModel, ns, kernel: SmoothingKernel, N: int = 2**18,
                       seed: int = 0, threads: int = 1, grid=None, norm: NormingSeq | None = None,
                       burn_in: int = 1000, log_floor: float = -20.0) -> LLDReport:
    """Monte Carlo over invariant initial points vs the operator bound, row by row."""
    norm = norm or dynamic_norming(model)
    env = Envelope(norm, 1)
    grid = grid or (lambda n: default_dyn_grid(model, norm, n))
    ns = sorted(int(n) for n in ns)
    xs_by_n = {n: np.asarray(grid(n), dtype=float) for n in ns}
    t0 = time.perf_counter()
    hits, flags = birkhoff_hits(model, ns, xs_by_n, 1.0, N, seed, threads, burn_in)
    rep = LLDReport(1, provenance={"a_n": {}, "perturbed_steps": flags,
                                   "mc_seconds": time.perf_counter() - t0})
    for n in ns:
        a = norm.a(n)
        rep.provenance["a_n"][n] = a
        panels = operator_panels(model, kernel, n, a, log_floor=log_floor, threads=threads)
        for x, k in zip(xs_by_n[n], hits[n]):
            lo, hi = clopper_pearson(int(k), N)
            p = int(k) / N
            bound = panels.bound(x)
            e = env(n, x)
            reg = regime_tag(env, n, x)
            st = classify(reg, p, lo, hi, bound)
            rep.rows.append(Row(n, (float(x),), reg, p, lo, hi, bound, e, p / e, bound / e, st))
    return rep


def pullback_probability(model: TransferModel, density, x: float, h: float = 1.0) -> float:
    """mu{v in [x-h, x+h]} for the power observable by quadrature of the density."""
    obs = model.obs
    a = obs.alpha
    lo_v, hi_v = x - h + obs.k, x + h + obs.k
    if hi_v <= 1.0:
        return 0.0
    z_hi = max(lo_v, 1.0) ** -a
    z_lo = hi_v ** -a
    t, w = np.polynomial.legendre.leggauss(40)
    z = 0.5 * (z_lo + z_hi) + 0.5 * (z_hi - z_lo) * t
    return float(0.5 * (z_hi - z_lo) * np.dot(w, density(z)))

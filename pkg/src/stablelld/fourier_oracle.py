"""Quadrature of I_{n,x} = int exp(-i s.x) r(s) Psi(s)^n ds, the Fourier majorant of P(S_n - b_n in Pi_1(x)).

Nodes are composite Gauss-Legendre panels per axis: geometric grading toward
0 at the natural scale 1/a_n, panel width capped at two wavelengths of the
largest |x|, and truncation where n log|Psi| drops below ``log_floor``.
Psi^n is formed as exp(n log Psi), which is exact for integer n and never
overflows since Re log Psi <= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charfn import CharFnModel, directions
from .smoothing import SmoothingKernel

GL_ORDER = 16
GRADING_DEPTH = 12


class QuadratureResolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class AxisRule:
    nodes: np.ndarray
    weights: np.ndarray
    cut: float


def axis_rule(scale: float, cut: float, xmax: float, min_nodes: int, refine: int = 0,
              order: int = GL_ORDER) -> AxisRule:
    """Symmetric composite GL rule on [-cut, cut]."""
    lo = min(scale, cut) * 2.0**-GRADING_DEPTH
    bps = [0.0]
    b = lo
    while b < cut:
        bps.append(b)
        b *= 2.0
    bps.append(cut)
    bps = np.asarray(bps)
    maxw = cut / 8.0
    if xmax > 0:
        maxw = min(maxw, 4.0 * math.pi / xmax)
    edges = [0.0]
    for a_, b_ in zip(bps[:-1], bps[1:]):
        k = max(1, int(math.ceil((b_ - a_) / maxw)))
        edges.extend(np.linspace(a_, b_, k + 1)[1:])
    edges = np.asarray(edges)
    for _ in range(refine):
        edges = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
    while 2 * order * (edges.size - 1) < min_nodes:
        edges = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
    x, w = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    pos = (mid[:, None] + half[:, None] * x).ravel()
    pw = (half[:, None] * w).ravel()
    nodes = np.concatenate([-pos[::-1], pos])
    weights = np.concatenate([pw[::-1], pw])
    return AxisRule(nodes, weights, cut)


def truncation_radius(model: CharFnModel, n: int, band: float, scale: float,
                      log_floor: float = -40.0, probes: int = 400, ndir: int = 64) -> float:
    """Radius beyond which n Re log Psi < log_floor along every probed direction."""
    r = np.geomspace(min(scale, band) * 1e-3, band, probes)
    dirs = directions(model.d, ndir)
    best = 0.0
    for u in dirs:
        s = r * u[0] if model.d == 1 else r[:, None] * u
        val = n * model.log_psi(s).real
        above = np.flatnonzero(val >= log_floor)
        if above.size:
            k = above[-1]
            best = max(best, r[min(k + 1, r.size - 1)])
    return float(min(band, max(best, r[0])))


@dataclass
class OracleGrid:
    """Shared integration data for one n; evaluate at many x."""

    d: int
    rules: list
    F: np.ndarray  # weights * r(s) * Psi(s)^n on the tensor grid

    def evaluate(self, x, imag_tol: float = 1e-6) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.d == 1:
            ph = self.rules[0].nodes * x[0]
            re = np.dot(self.F.real, np.cos(ph)) + np.dot(self.F.imag, np.sin(ph))
            im = np.dot(self.F.imag, np.cos(ph)) - np.dot(self.F.real, np.sin(ph))
        else:
            acc = self.F
            for j in range(self.d - 1, -1, -1):
                e = np.exp(-1j * self.rules[j].nodes * x[j])
                acc = acc @ e
            val = complex(acc)
            re, im = val.real, val.imag
        if abs(im) > imag_tol:
            raise QuadratureResolutionError(
                f"imaginary residue {im:.3e} at x={x}; double the nodes")
        return float(re)


def build_grid(model: CharFnModel, kernel: SmoothingKernel, n: int, xmax, a_n: float,
               log_floor: float = -40.0, refine: int = 0) -> OracleGrid:
    d = model.d
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), (d,))
    scale = 1.0 / a_n
    cut = truncation_radius(model, n, kernel.band, scale, log_floor)
    min_nodes = 2**10 if d == 1 else 2**8
    rules = [axis_rule(scale, cut, float(xmax[j]), min_nodes, refine) for j in range(d)]
    if d == 1:
        s = rules[0].nodes
        F = rules[0].weights * kernel.r0(s) * np.exp(n * model.log_psi(s))
    else:
        lp = model.log_psi_tensor([r.nodes for r in rules])
        F = np.exp(n * lp)
        for j, r in enumerate(rules):
            shape = [1] * d
            shape[j] = r.nodes.size
            F = F * (r.weights * kernel.r0(r.nodes)).reshape(shape)
    return OracleGrid(d, rules, F)


def fourier_bounds(model: CharFnModel, kernel: SmoothingKernel, n: int, xs, a_n: float,
                   log_floor: float = -40.0, refine: int = 0) -> np.ndarray:
    """I_{n,x} for each row of xs, sharing one node set."""
    xs = np.asarray(xs, dtype=float).reshape(-1, model.d)
    if n < 1:
        raise ValueError("n must be >= 1")
    xmax = np.abs(xs).max(axis=0) if xs.size else np.zeros(model.d)
    grid = build_grid(model, kernel, n, xmax, a_n, log_floor, refine)
    return np.array([grid.evaluate(x) for x in xs])


def fourier_bound(model: CharFnModel, kernel: SmoothingKernel, n: int, x, a_n: float | None = None,
                  log_floor: float = -40.0, refine: int = 0) -> float:
    if a_n is None:
        a_n = max(1.0, n ** (1.0 / model.alpha))
    return float(fourier_bounds(model, kernel, n, [x], a_n, log_floor, refine)[0])


def empirical_error(model: CharFnModel, kernel: SmoothingKernel, n: int, a_n: float) -> float:
    """Propagated sampling error of the oracle when Psi is an empirical average."""
    if model.mode != "empirical":
        return 0.0
    N = model.sample.shape[0]
    if N < 10**6:
        raise ValueError("empirical oracle needs a sample of at least 1e6")
    grid = build_grid(model, kernel, n, np.zeros(model.d), a_n)
    # |d(Psi^n)| <= n |Psi|^{n-1} |dPsi|, |dPsi| ~ 1/sqrt(N)
    return float(np.sum(np.abs(grid.F)) * n / math.sqrt(N))


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    margin: float


def bound_vs_mc(bound: float, ci_lo: float, rel_tol: float = 1e-9) -> BoundCheck:
    """P <= I_{n,x} must hold for the lower confidence limit."""
    margin = bound - ci_lo
    return BoundCheck(margin >= -rel_tol * max(abs(bound), 1e-300), margin)

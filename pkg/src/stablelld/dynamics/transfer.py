"""Ulam discretisation of the twisted transfer operator R(s) phi = R(e^{isv} phi).

Cells: [0, u] is split into 32 geometric cells (edges u 2^-31, ..., u/2)
and [u, 1] into m - 32 uniform cells of width u = 1/(m-31), so the
singularity of v at 0 is resolved. Matrices are in mass coordinates,

    P(s)[j, k] = |B_k|^-1 int_{z in B_k, f(z) in B_j} exp(i s v(z)) dz,

so P(0) is column stochastic and its fixed vector pi holds the cell masses
of the invariant density. Pieces (branch x source cell x target cell) are
integrated by phase spread: midpoint below 1e-3 rad, 3-point Gauss-Legendre
below 0.3 rad, 8-point up to 4 rad, and the exact power-law transform beyond. Gauss branches
b > K are lumped: exact total mass per target cell (digamma increments,
integrated as trigamma) spread over source cells in proportion to length,
with the twist integrated exactly over each source cell.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, special

from .. import __version__
from ..svf import eval_ell_tilde
from .maps import IntervalMap
from .observables import Observable, twisted_power_integral

GRADED = 32
GL_NODES = 8
MIDPOINT_PHASE = 1e-3
GL3_PHASE = 0.3
GL_PHASE = 4.0
_GL8 = np.polynomial.legendre.leggauss(GL_NODES)
_GL3 = np.polynomial.legendre.leggauss(3)


class ResolutionError(RuntimeError):
    pass


def cell_edges(m: int, graded: int = GRADED) -> np.ndarray:
    if m < 2 * graded or m & (m - 1):
        raise ValueError(f"m must be a power of two >= {2 * graded}")
    # [0, u] split geometrically into ``graded`` cells, then uniform cells of width u
    mu = m - graded + 1
    u = 1.0 / mu
    geo = u * 2.0 ** -np.arange(graded - 1, 0, -1)
    return np.concatenate([[0.0], geo, np.arange(1, mu + 1) / mu])


def _cell(edges, z):
    m = edges.size - 1
    return np.clip(np.searchsorted(edges, z, side="right") - 1, 0, m - 1)


@dataclass
class Pieces:
    j: np.ndarray
    k: np.ndarray
    mass: np.ndarray
    zlo: np.ndarray


def _finite_pieces(imap: IntervalMap, edges, breaks):
    js, ks, ms, zs = [], [], [], []
    for br in imap.branches:
        ilo, ihi = sorted(br.image)
        src = edges[(edges > br.lo) & (edges < br.hi)]
        brk = np.asarray([b for b in breaks if br.lo < b < br.hi], dtype=float)
        ys = np.concatenate([[ilo, ihi], edges[(edges > ilo) & (edges < ihi)],
                             br.forward(src), br.forward(brk)])
        ys = np.unique(np.clip(ys, ilo, ihi))
        y0, y1 = ys[:-1], ys[1:]
        ym = 0.5 * (y0 + y1)
        za, zb = br.inverse(y0), br.inverse(y1)
        js.append(_cell(edges, ym))
        ks.append(_cell(edges, br.inverse(ym)))
        ms.append(np.abs(br.mass(y0, y1)))
        zs.append(np.minimum(za, zb))
    return Pieces(*(np.concatenate(a) for a in (js, ks, ms, zs)))


def _gauss_pieces(edges, K: int, breaks):
    m = edges.size - 1
    # split points in y coming from source edges and observable jumps
    pts = np.concatenate([edges[1:-1], np.asarray(breaks, dtype=float)])
    inv = 1.0 / pts
    bb = np.floor(inv)
    yy = inv - bb
    ok = (bb <= K) & (yy > 0.0) & (yy < 1.0)
    bb, yy = bb[ok].astype(np.int64), yy[ok]
    jj = _cell(edges, yy)
    key = (bb - 1) * m + jj
    hit = np.zeros(K * m, dtype=bool)
    hit[key] = True
    base = np.flatnonzero(~hit)
    b = base // m + 1
    j = base % m
    y0, y1 = edges[j], edges[j + 1]
    # affected (b, j) cells: cut at every split point inside
    uk = np.unique(key)
    sb = np.concatenate([uk // m + 1, uk // m + 1, bb])
    sj = np.concatenate([uk % m, uk % m, jj])
    sy = np.concatenate([edges[uk % m], edges[uk % m + 1], yy])
    order = np.lexsort((sy, sj, sb))
    sb, sj, sy = sb[order], sj[order], sy[order]
    same = (sb[1:] == sb[:-1]) & (sj[1:] == sj[:-1]) & (sy[1:] > sy[:-1])
    b = np.concatenate([b, sb[:-1][same]])
    j = np.concatenate([j, sj[:-1][same]])
    y0 = np.concatenate([y0, sy[:-1][same]])
    y1 = np.concatenate([y1, sy[1:][same]])
    bf = b.astype(float)
    mass = (y1 - y0) / ((bf + y0) * (bf + y1))
    zlo = 1.0 / (bf + y1)
    k = _cell(edges, 1.0 / (bf + 0.5 * (y0 + y1)))
    return Pieces(j, k, mass, zlo)


def _lump(edges, K: int):
    """Target masses q_j of branches b > K and the source cells they occupy."""
    t, w = _GL8
    y0, y1 = edges[:-1], edges[1:]
    half = 0.5 * (y1 - y0)
    y = 0.5 * (y0 + y1)[:, None] + half[:, None] * t
    q = half * (special.polygamma(1, K + 1.0 + y) @ w)
    zK = 1.0 / (K + 1.0)
    lo = edges[:-1]
    hi = np.minimum(edges[1:], zK)
    cells = np.flatnonzero(hi > lo)
    return q, cells, lo[cells], hi[cells] - lo[cells]


def _node_values(obs: Observable, zlo, mass):
    """Per-piece spread of v, midpoint value and 3-point node values (uncentered)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        dv = obs.raw(zlo) - obs.raw(zlo + mass)
    vmid = obs.raw(zlo + 0.5 * mass)
    z3 = zlo[:, None] + 0.5 * mass[:, None] * (_GL3[0] + 1.0)
    return dv, vmid, obs.raw(z3)


@dataclass
class EigenData:
    lam: complex
    zeta: np.ndarray
    gap: float
    lam2: float
    right: np.ndarray
    left: np.ndarray
    iterations: int
    method: str


class TransferModel:
    """Discretised R(s) for one (map, observable, m).

    ``kappa`` of a centered power observable is fixed here as the mean of v
    under the discrete invariant measure, so the discrete derivative of
    lambda at 0 vanishes.
    """

    def __init__(self, imap: IntervalMap, obs: Observable, m: int = 256, K: int = 10**4):
        self.map = imap
        self.obs = obs
        self.m = m
        self.K = K
        self.edges = cell_edges(m)
        self.widths = np.diff(self.edges)
        if imap.countable:
            self.pieces = _gauss_pieces(self.edges, K, obs.breaks)
            self.lump = _lump(self.edges, K)
        else:
            self.pieces = _finite_pieces(imap, self.edges, obs.breaks)
            self.lump = None
        self._cache: dict = {}
        self._pi = None
        self._pre = None
        if obs.kind == "power" and obs.kappa is None:
            if obs.alpha <= 1:
                raise ValueError("centering needs alpha > 1")
            W = obs.raw_integral(self.edges[:-1], self.edges[1:])
            obs.kappa = float(math.fsum(self.pi * W / self.widths))

    # -- assembly --------------------------------------------------------
    def _twisted(self, zlo, mass, s: float, pre=None):
        """int over [zlo, zlo + mass] of exp(i s v)."""
        obs = self.obs
        if s == 0.0:
            return mass.astype(complex)
        out = np.empty(zlo.shape, dtype=complex)
        if obs.kind == "custom":
            t, w = _GL8
            z = zlo[:, None] + 0.5 * mass[:, None] * (t + 1.0)
            return 0.5 * mass * (np.exp(1j * s * obs(z)) @ w)
        zhi = zlo + mass
        if pre is None:
            pre = _node_values(obs, zlo, mass)
        dv, vmid, v3 = pre
        spread = abs(s) * dv
        A = spread < MIDPOINT_PHASE
        out[A] = mass[A] * np.exp(1j * s * (vmid[A] - obs.k))
        B = (~A) & (spread <= GL3_PHASE)
        if np.any(B):
            out[B] = 0.5 * mass[B] * (np.exp(1j * s * (v3[B] - obs.k)) @ _GL3[1])
        B8 = (~A) & (~B) & (spread <= GL_PHASE)
        if np.any(B8):
            t, w = _GL8
            z = zlo[B8][:, None] + 0.5 * mass[B8][:, None] * (t + 1.0)
            out[B8] = 0.5 * mass[B8] * (np.exp(1j * s * obs(z)) @ w)
        C = spread > GL_PHASE
        if np.any(C):
            out[C] = twisted_power_integral(obs, zlo[C], zhi[C], s)
        return out

    def _assemble(self, s: float) -> np.ndarray:
        m = self.m
        p = self.pieces
        if self._pre is None and self.obs.kind == "power":
            self._pre = _node_values(self.obs, p.zlo, p.mass)
        tw = self._twisted(p.zlo, p.mass, s, self._pre)
        idx = p.j * m + p.k
        M = (np.bincount(idx, tw.real, m * m) + 1j * np.bincount(idx, tw.imag, m * m)).reshape(m, m)
        if self.lump is not None:
            q, cells, lo, length = self.lump
            T = self._twisted(lo, length, s)
            M[:, cells] += np.outer(q / q.sum(), T)
        return M / self.widths[None, :]

    def _cache_path(self, s: float) -> Path | None:
        root = os.environ.get("LLD_CACHE_DIR")
        if not root:
            return None
        o = self.obs
        desc = f"{self.map.kind}:{self.map.beta!r}:{o.kind}:{o.alpha!r}:{o.kappa!r}:{o.breaks!r}:" \
               f"{self.m}:{self.K}:{float(s)!r}:{__version__}"
        if o.kind == "custom":
            return None
        return Path(root) / f"transfer_{hashlib.sha256(desc.encode()).hexdigest()[:20]}.npy"

    def matrix(self, s: float) -> np.ndarray:
        s = float(s)
        if s in self._cache:
            return self._cache[s]
        if s < 0:
            M = np.conj(self.matrix(-s))
        else:
            path = self._cache_path(s)
            if path is not None and path.exists():
                M = np.load(path)
            else:
                M = self._assemble(s)
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    np.save(path, M)
        if len(self._cache) > 8:
            self._cache.pop(next(iter(self._cache)))
        self._cache[s] = M
        return M

    def derivative0(self) -> np.ndarray:
        """dP/ds at s = 0 (needs an integrable observable)."""
        m, p, obs = self.m, self.pieces, self.obs
        if obs.kind == "power":
            if obs.alpha <= 1:
                raise ValueError("v is not integrable for alpha <= 1")
            vint = obs.raw_integral(p.zlo, p.zlo + p.mass) - obs.k * p.mass
        else:
            t, w = _GL8
            z = p.zlo[:, None] + 0.5 * p.mass[:, None] * (t + 1.0)
            vint = 0.5 * p.mass * (obs(z) @ w)
        M = np.bincount(p.j * m + p.k, vint, m * m).reshape(m, m)
        if self.lump is not None:
            q, cells, lo, length = self.lump
            V = obs.raw_integral(lo, lo + length) - obs.k * length
            M[:, cells] += np.outer(q / q.sum(), V)
        return 1j * M / self.widths[None, :]

    # -- invariant data ---------------------------------------------------
    @property
    def pi(self) -> np.ndarray:
        """Cell masses of the discrete invariant measure."""
        if self._pi is None:
            ed = leading_eig(self, 0.0, want_left=False)
            self._pi = ed.right.real.copy()
        return self._pi

    @property
    def density(self) -> np.ndarray:
        return self.pi / self.widths

    def tail_constant(self) -> float:
        """Density at 0, so that mu(v > t) ~ h(0) t^-alpha for the power observable."""
        return float(self.density[0])

    def sample_invariant(self, u1, u2) -> np.ndarray:
        """Inverse CDF of the piecewise-constant invariant density."""
        cdf = np.concatenate([[0.0], np.cumsum(self.pi)])
        cdf /= cdf[-1]
        k = np.clip(np.searchsorted(cdf, u1, side="right") - 1, 0, self.m - 1)
        return self.edges[k] + u2 * self.widths[k]


def assemble_transfer(model: TransferModel, s: float) -> np.ndarray:
    return model.matrix(s)


def column_sums(model: TransferModel) -> np.ndarray:
    return model.matrix(0.0).sum(axis=0).real


def _power(A, x, tol, maxiter):
    lam = 0.0
    for it in range(1, maxiter + 1):
        y = A @ x
        i = int(np.argmax(np.abs(x)))
        lam_new = y[i] / x[i]
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0, x, it, True
        y = y / nrm
        res = np.linalg.norm(A @ y - lam_new * y)
        x = y
        if res < tol * max(abs(lam_new), 1e-300):
            return lam_new, x, it, True
        lam = lam_new
    return lam, x, maxiter, False


def _subleading(A, lam, r, l, iters: int = 400, window: int = 8) -> float:
    """Modulus of the second eigenvalue from the deflated iteration."""
    lr = l @ r
    x = np.cos(np.arange(A.shape[0]) * 0.7 + 0.3).astype(complex)
    x = x - r * (l @ x) / lr
    norms = []
    for _ in range(iters):
        y = A @ x
        y = y - r * (l @ y) / lr
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        norms.append(nrm / np.linalg.norm(x))
        x = y / nrm
        if len(norms) > 2 * window:
            g1 = np.exp(np.mean(np.log(norms[-window:])))
            g0 = np.exp(np.mean(np.log(norms[-2 * window:-window])))
            if abs(g1 - g0) < 1e-10 * g1:
                return float(g1)
    return float(np.exp(np.mean(np.log(norms[-window:]))))


def leading_eig(model: TransferModel, s: float, tol: float = 1e-12, maxiter: int = 5000,
                want_left: bool = True) -> EigenData:
    """Leading eigenpair by power iteration; dense eigensolver if it stalls."""
    A = model.matrix(s)
    m = A.shape[0]
    x0 = model.widths.astype(complex)
    lam, r, it, ok = _power(A, x0, tol, maxiter)
    method = "power"
    l = np.ones(m, dtype=complex)
    if ok and want_left:
        lam_l, l, _, okl = _power(A.T, np.ones(m, dtype=complex), tol, maxiter)
        ok = okl
    if not ok:
        method = "dense"
        w, vl, vr = linalg.eig(A, left=True, right=True)
        i = int(np.argmax(np.abs(w)))
        lam, r, l = w[i], vr[:, i], np.conj(vl[:, i])
        it = maxiter
        if not np.isfinite(lam):
            raise ResolutionError(f"eigensolver failed at s={s}")
    r = r / r.sum()
    l = l / (l @ r)
    lam = complex((l @ (A @ r)) / (l @ r))
    lam2 = _subleading(A, lam, r, l) if want_left else float("nan")
    zeta = r / model.pi if model._pi is not None else r / r.real
    return EigenData(lam, zeta, lam2 / abs(lam) if abs(lam) > 0 else float("inf"), lam2, r, l, it, method)


@dataclass
class EigenCurve:
    s: np.ndarray
    lam: np.ndarray
    gap: np.ndarray
    c: float
    alpha_hat: float
    residual: float
    flagged: bool
    fit_mask: np.ndarray
    dlam0: complex | None = None
    deriv_ratio: np.ndarray | None = None

    def csv(self, comments=()) -> str:
        buf = io.StringIO()
        for cmt in comments:
            buf.write(f"# {cmt}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "re_lambda", "im_lambda", "abs_lambda", "gap", "fit_flag"])
        for s, lam, g, f in zip(self.s, self.lam, self.gap, self.fit_mask):
            w.writerow([repr(float(s)), repr(float(lam.real)), repr(float(lam.imag)),
                        repr(float(abs(lam))), repr(float(g)), int(bool(f))])
        return buf.getvalue()


def eigencurve(model: TransferModel, s_grid, ell_tilde=None, threads: int = 1,
               derivative: bool | None = None) -> EigenCurve:
    """-log|lambda(s)| ~ c s^alpha_hat ell_tilde(1/s), fitted on the decade nearest 0."""
    from ..mc import _map

    s = np.asarray(s_grid, dtype=float)
    if np.any(s == 0):
        raise ValueError("the eigencurve grid must exclude 0")
    eds = _map(lambda i: leading_eig(model, float(s[i])), s.size, threads)
    lam = np.array([e.lam for e in eds])
    gap = np.array([e.gap for e in eds])
    a = np.abs(s)
    y = -np.log(np.abs(lam))
    lt = np.ones_like(a) if ell_tilde is None else np.asarray(ell_tilde(1.0 / a), dtype=float)
    mask = a <= 10.0 * a.min()
    X = np.log(a[mask])
    Y = np.log(y[mask] / lt[mask])
    slope, icpt = np.polyfit(X, Y, 1)
    res = float(np.max(np.abs(Y - (slope * X + icpt)))) if X.size > 2 else 0.0
    alpha = model.obs.alpha
    do_deriv = alpha > 1 if derivative is None else derivative
    dlam0, ratio = None, None
    if do_deriv:
        ed0 = leading_eig(model, 0.0)
        D = model.derivative0()
        dlam0 = complex((ed0.left @ (D @ ed0.right)) / (ed0.left @ ed0.right))
        ratio = np.empty(s.size)
        for i, si in enumerate(s):
            h = 1e-3 * abs(si)
            d = (leading_eig(model, si + h, want_left=False).lam -
                 leading_eig(model, si - h, want_left=False).lam) / (2 * h)
            tl = 1.0 if ell_tilde is None else float(ell_tilde(1.0 / abs(si)))
            ratio[i] = abs(d) / (abs(si) ** (alpha - 1) * tl)
    return EigenCurve(s, lam, gap, float(math.exp(icpt)), float(slope), res, res > 0.1, mask,
                      dlam0, ratio)


@dataclass
class HypothesisReport:
    h: np.ndarray
    ratios: dict
    gap0: float
    lam0: complex
    advisory: str = "matrix-norm evidence on the discretisation only"

    @property
    def bounded(self) -> bool:
        return all(np.all(np.isfinite(v)) and v[-1] <= 2.0 * np.median(v) for v in self.ratios.values())


def operator_norm(model: TransferModel, A) -> float:
    """Upper proxy for the L-infinity to L1(mu) norm: sum_jk |A_jk| pi_k."""
    return float(np.sum(np.abs(A) * model.pi[None, :]))


def spectral_hypothesis_report(model: TransferModel, eps: float, ks=range(3, 13),
                               s_points: int = 5) -> HypothesisReport:
    """Finite-difference ratios of R(s) over a dyadic h ladder, plus the gap at 0."""
    alpha = model.obs.alpha
    hs = eps * 2.0 ** -np.array(list(ks), dtype=float)
    sgrid = np.linspace(0.0, eps / 2, s_points)
    first, second = [], []
    for h in hs:
        r1 = r2 = 0.0
        for s in sgrid:
            A0, A1, A2 = model.matrix(s), model.matrix(s + h), model.matrix(s + 2 * h)
            r1 = max(r1, operator_norm(model, A1 - A0))
            r2 = max(r2, operator_norm(model, A2 - 2 * A1 + A0))
        first.append(r1 / h ** min(alpha, 1.0))
        second.append(r2 / h ** alpha)
    ed = leading_eig(model, 0.0)
    ratios = {"first": np.array(first)}
    if alpha > 1:
        ratios["second"] = np.array(second)
    return HypothesisReport(hs, ratios, ed.gap, ed.lam)


def duality_defect(model: TransferModel, rng: np.random.Generator) -> float:
    """| int (R phi) psi dmu - int phi (psi o f) dmu | for random cell functions."""
    P = model.matrix(0.0).real
    pi = model.pi
    phi = rng.standard_normal(model.m)
    psi = rng.standard_normal(model.m)
    R_phi = (P @ (pi * phi)) / pi
    lhs = float(np.sum(R_phi * psi * pi))
    comp = P.T @ psi  # cell averages of psi o f
    rhs = float(np.sum(phi * comp * pi))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def powered_unit(model: TransferModel, s: float, n: int) -> np.ndarray:
    """R(s)^n 1 as cell values."""
    P = model.matrix(s)
    x = model.pi.astype(complex)
    for _ in range(n):
        x = P @ x
    return x / model.pi


def positivity_holds(model: TransferModel, rng: np.random.Generator, n: int = 20) -> bool:
    P = model.matrix(0.0).real
    x = rng.random(model.m)
    for _ in range(n):
        x = P @ x
        if np.any(x < -1e-15 * np.abs(x).max()):
            return False
    return True


def consistency_ratios(model: TransferModel, s_values, n: int) -> np.ndarray:
    """sup |R(s)^n 1| / |lambda(s)|^n."""
    out = []
    for s in s_values:
        lam = leading_eig(model, s, want_left=False).lam
        out.append(np.abs(powered_unit(model, s, n)).max() / abs(lam) ** n)
    return np.array(out)

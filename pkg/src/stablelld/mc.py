"""Monte Carlo for cube probabilities of centered sums.

Work is cut into fixed substreams of CHUNK samples, each with its own
counter-based generator. Threads only decide who computes which substream;
tallies are combined in substream order, so results do not depend on the
thread count.

Besides plain hit counting there is a conditional estimator that integrates
the largest summand out exactly:

    P(S_n in A) = n E[ P(X_n in A - S_{n-1}, |X_n| > M) + P(..., |X_n| = M)/(m+1) ],

with M the largest |X_i| among the first n-1 summands and m its multiplicity.
Its relative error stays bounded deep in the large-deviation range where
plain counting sees no hits.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .heavytail import MultiTailSpec, open_uniform, stream

CHUNK = 2**15
BLOCK_ELEMS = 2**21
Z99 = float(stats.norm.ppf(0.995))


@dataclass(frozen=True)
class CubeQuery:
    n: int
    x: tuple
    h: float = 1.0
    N: int = 10**5
    seed: int = 0

    def __post_init__(self):
        if self.N < 10**4:
            raise ValueError("sample budget N must be at least 1e4")
        if self.h <= 0:
            raise ValueError("half-width h must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "x", tuple(np.atleast_1d(np.asarray(self.x, dtype=float))))


@dataclass
class MCEstimate:
    p_hat: float
    ci_lo: float
    ci_hi: float
    hits: int
    N: int
    wall_time: float = 0.0
    method: str = "plain"
    tallies: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.p_hat = float(min(max(self.p_hat, 0.0), 1.0))
        self.ci_lo = float(min(max(self.ci_lo, 0.0), self.p_hat))
        self.ci_hi = float(min(max(self.ci_hi, self.p_hat), 1.0))


def clopper_pearson(k: int, N: int, level: float = 0.99):
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, N - k + 1))
    hi = 1.0 if k == N else float(stats.beta.ppf(1 - a / 2, k + 1, N - k))
    return lo, hi


def _chunks(N: int):
    sizes = [CHUNK] * (N // CHUNK)
    if N % CHUNK:
        sizes.append(N % CHUNK)
    return sizes


def _map(fn, count: int, threads: int):
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(count)))


def _draw_blocks(spec, rng, rows: int, size: int):
    """Yield blocks of shape (b, size[, d]) until ``rows`` summands are drawn."""
    d = getattr(spec, "d", 1)
    per = max(1, BLOCK_ELEMS // max(size * d, 1))
    done = 0
    while done < rows:
        b = min(per, rows - done)
        x = spec.sample(rng, b * size)
        yield x.reshape((b, size) if d == 1 else (b, size, d))
        done += b


def _partial_state(spec, rng, rows: int, size: int):
    """Sum, largest magnitude and its multiplicity over ``rows`` summands."""
    d = getattr(spec, "d", 1)
    S = np.zeros(size if d == 1 else (size, d))
    M = np.zeros(size)
    m = np.zeros(size, dtype=np.int64)
    for blk in _draw_blocks(spec, rng, rows, size):
        S += blk.sum(axis=0)
        mag = np.abs(blk) if d == 1 else np.linalg.norm(blk, axis=-1)
        bmax = mag.max(axis=0)
        bcnt = (mag == bmax).sum(axis=0)
        newM = np.maximum(M, bmax)
        m = np.where(M == newM, m, 0) + np.where(bmax == newM, bcnt, 0)
        M = newM
    return S, M, m


def _cube_bounds(xs, h, b):
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return xs + b - h, xs + b + h


def _cond_scalar(spec, n, S, M, m, lo, hi):
    """Conditional weights, shape (Q, C), for scalar laws."""
    a = lo[:, None] - S[None, :]
    b = hi[:, None] - S[None, :]
    Mb = M[None, :]
    ip = spec.interval_prob
    upper = ip(np.maximum(a, Mb), b)
    lower = ip(a, np.minimum(b, -Mb))
    val = upper + lower
    if spec.is_lattice or hasattr(spec, "base"):
        at_pos = spec.atom(Mb) * ((a < Mb) & (Mb <= b))
        at_neg = spec.atom(-Mb) * ((a < -Mb) & (-Mb <= b)) * (Mb > 0)
        # -M lies in the lower interval but is not a strict exceedance
        val = val - at_neg + (at_pos + at_neg) / (m[None, :] + 1.0)
    return n * np.maximum(val, 0.0)


def _cond_multi(spec: MultiTailSpec, n, S, M, lo, hi):
    """Conditional weights for the radial-times-atom law; R is continuous, no ties."""
    th = spec.sigma.theta_array
    w = spec.sigma.weight_array
    Q, C = lo.shape[0], S.shape[0]
    out = np.zeros((Q, C))
    for i in range(th.shape[0]):
        rlo = np.broadcast_to(M[None, :], (Q, C)).copy()
        rhi = np.full((Q, C), np.inf)
        for j in range(th.shape[1]):
            a = lo[:, j][:, None] - S[None, :, j]
            b = hi[:, j][:, None] - S[None, :, j]
            t = th[i, j]
            if t == 0.0:
                inside = (a < 0.0) & (0.0 <= b)
                rhi = np.where(inside, rhi, -np.inf)
            elif t > 0:
                rlo = np.maximum(rlo, a / t)
                rhi = np.minimum(rhi, b / t)
            else:
                rlo = np.maximum(rlo, b / t)
                rhi = np.minimum(rhi, a / t)
        ok = rhi > rlo
        p = np.where(ok, spec.radial.interval_prob(np.where(ok, rlo, 0.0), np.where(ok, rhi, 0.0)), 0.0)
        out += w[i] * p
    return n * out


def _stats_from(tallies, N, method):
    if method == "plain":
        hits = int(sum(t[0] for t in tallies))
        p = hits / N
        lo, hi = clopper_pearson(hits, N)
        return p, lo, hi, hits
    s1 = math.fsum(t[0] for t in tallies)
    s2 = math.fsum(t[1] for t in tallies)
    hits = int(sum(t[2] for t in tallies))
    mean = s1 / N
    var = max(s2 / N - mean * mean, 0.0) * N / max(N - 1, 1)
    half = Z99 * math.sqrt(var / N)
    return mean, mean - half, mean + half, hits


def estimate_iid_many(spec, norm, n: int, xs, h: float = 1.0, N: int = 10**5, seed: int = 0,
                      threads: int = 1, method: str = "conditional") -> list:
    """Estimates for all centers ``xs`` at horizon n from one shared sample."""
    if method not in ("plain", "conditional"):
        raise ValueError("method must be 'plain' or 'conditional'")
    if N < 10**4:
        raise ValueError("sample budget N must be at least 1e4")
    d = getattr(spec, "d", 1)
    xs = np.asarray(xs, dtype=float).reshape(-1, d)
    lo, hi = _cube_bounds(xs, h, norm.b(n))
    sizes = _chunks(N)
    t0 = time.perf_counter()

    def work(k):
        rng = stream(seed, k)
        size = sizes[k]
        if method == "plain":
            S = np.zeros(size if d == 1 else (size, d))
            for blk in _draw_blocks(spec, rng, n, size):
                S += blk.sum(axis=0)
            if d == 1:
                hit = (S[None, :] > lo[:, 0][:, None]) & (S[None, :] <= hi[:, 0][:, None])
            else:
                hit = np.all((S[None] > lo[:, None, :]) & (S[None] <= hi[:, None, :]), axis=-1)
            return [(int(c),) for c in hit.sum(axis=1)]
        S, M, m = _partial_state(spec, rng, n - 1, size) if n > 1 else (
            np.zeros(size if d == 1 else (size, d)), np.zeros(size), np.zeros(size, dtype=np.int64))
        if d == 1:
            Y = _cond_scalar(spec, n, S, M, m, lo[:, 0], hi[:, 0])
        else:
            Y = _cond_multi(spec, n, S, M, lo, hi)
        return [(math.fsum(y), math.fsum(y * y), int(np.count_nonzero(y))) for y in Y]

    per_chunk = _map(work, len(sizes), threads)
    wall = time.perf_counter() - t0
    out = []
    for q in range(xs.shape[0]):
        tallies = [pc[q] for pc in per_chunk]
        p, l, u, hits = _stats_from(tallies, N, method)
        out.append(MCEstimate(p, l, u, hits, N, wall, method, tallies))
    return out


def estimate_iid(spec, norm, q: CubeQuery, threads: int = 1, method: str = "plain") -> MCEstimate:
    return estimate_iid_many(spec, norm, q.n, [q.x], q.h, q.N, q.seed, threads, method)[0]


def estimate_lattice(spec, norm, n: int, points, budget: int = 10**5, seed: int = 0,
                     threads: int = 1, method: str = "plain") -> list:
    """P(S_n - floor(b_n) = N) for each integer point N."""
    if not spec.is_lattice:
        raise ValueError("estimate_lattice needs a lattice law")
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    shift = math.floor(norm.b(n)) if norm.alpha > 1 else 0
    target = pts + shift
    sizes = _chunks(budget)
    t0 = time.perf_counter()

    def work(k):
        rng = stream(seed, k)
        size = sizes[k]
        if method == "plain":
            S = np.zeros(size)
            for blk in _draw_blocks(spec, rng, n, size):
                S += blk.sum(axis=0)
            return [(int(c),) for c in (S[None, :] == target[:, None]).sum(axis=1)]
        if n > 1:
            S, M, m = _partial_state(spec, rng, n - 1, size)
        else:
            S, M, m = np.zeros(size), np.zeros(size), np.zeros(size, dtype=np.int64)
        t = target[:, None] - S[None, :]
        at = spec.atom(t)
        mag = np.abs(t)
        Mb = M[None, :]
        Y = n * (at * (mag > Mb) + at * (mag == Mb) / (m[None, :] + 1.0))
        return [(math.fsum(y), math.fsum(y * y), int(np.count_nonzero(y))) for y in Y]

    per_chunk = _map(work, len(sizes), threads)
    wall = time.perf_counter() - t0
    out = []
    for qi in range(pts.size):
        tallies = [pc[qi] for pc in per_chunk]
        p, l, u, hits = _stats_from(tallies, budget, method)
        out.append(MCEstimate(p, l, u, hits, budget, wall, method, tallies))
    return out


def big_jump_weight(spec, n: int, t: float, side: int = 1) -> float:
    """P(some X_i beyond t on the given side) = 1 - (1 - P(X > t))^n."""
    pi = float(spec.sf(t)) if side > 0 else float(spec.cdf(-t))
    return -math.expm1(n * math.log1p(-pi))


def _side_conditional(spec, u, t, side, above: bool):
    """Inverse-CDF draws of X conditioned on side*X > t (above) or side*X <= t."""
    if side > 0:
        if above:
            return spec.T.inverse(u * spec.T(t)) if t >= 1 else spec.ppf(1.0 - u * spec.sf(t))
        return spec.ppf(u * spec.cdf(t))
    if above:
        return -spec.T.inverse(u * spec.T(t)) if t >= 1 else spec.ppf(u * spec.cdf(-t))
    return spec.ppf(spec.cdf(-t) + u * (1.0 - spec.cdf(-t)))


def tail_stratified_estimate(spec, norm, q: CubeQuery, threads: int = 1) -> MCEstimate:
    """Two strata: a summand beyond |x|/2 on the side of x, or none. d = 1, |x| > 4 a_n."""
    if getattr(spec, "d", 1) != 1:
        raise ValueError("stratified estimator is one-dimensional")
    x = q.x[0]
    a_n = norm.a(q.n)
    if abs(x) <= 4 * a_n:
        raise ValueError("stratified estimator needs |x| > 4 a_n")
    side = 1 if x > 0 else -1
    t = abs(x) / 2.0
    n = q.n
    wB = big_jump_weight(spec, n, t, side)
    if not (1e-300 < wB < 1.0 - 1e-12) or getattr(spec, "is_lattice", False) or not hasattr(spec, "T"):
        return estimate_iid(spec, norm, q, threads, "plain")
    piside = float(spec.sf(t)) if side > 0 else float(spec.cdf(-t))
    b = norm.b(n)
    lo, hi = x + b - q.h, x + b + q.h
    t0 = time.perf_counter()

    def stratum(N, which, salt):
        sizes = _chunks(N)

        def work(k):
            rng = stream(q.seed, 4 * k + salt)
            size = sizes[k]
            S = np.zeros(size)
            if which == "B":
                # first index beyond t: truncated geometric on 1..n
                u = open_uniform(rng, size)
                J = 1 + np.floor(np.log1p(-u * wB) / math.log1p(-piside))
                J = np.clip(J, 1, n)
            done = 0
            per = max(1, BLOCK_ELEMS // size)
            while done < n:
                rows = min(per, n - done)
                U = open_uniform(rng, (rows, size))
                idx = np.arange(done + 1, done + rows + 1)[:, None]
                if which == "C":
                    X = _side_conditional(spec, U, t, side, above=False)
                else:
                    X = np.empty_like(U)
                    before = idx < J[None, :]
                    at = idx == J[None, :]
                    after = ~(before | at)
                    X[before] = _side_conditional(spec, U[before], t, side, above=False)
                    X[at] = _side_conditional(spec, U[at], t, side, above=True)
                    X[after] = spec.ppf(U[after])
                S += X.sum(axis=0)
                done += rows
            return int(np.count_nonzero((S > lo) & (S <= hi)))

        return _map(work, len(sizes), threads)

    # pilot with equal split, then Neyman allocation of the rest (>= 10% each)
    pilot = max(q.N // 20, 1)
    hB = stratum(pilot, "B", 0)
    hC = stratum(pilot, "C", 1)
    sB = math.sqrt((sum(hB) + 0.5) / (pilot + 1) * (1 - (sum(hB) + 0.5) / (pilot + 1)))
    sC = math.sqrt((sum(hC) + 0.5) / (pilot + 1) * (1 - (sum(hC) + 0.5) / (pilot + 1)))
    rest = q.N - 2 * pilot
    fB = min(max(wB * sB / (wB * sB + (1 - wB) * sC), 0.1), 0.9)
    mB = int(round(fB * rest))
    mC = rest - mB
    hB = hB + (stratum(mB, "B", 2) if mB else [])
    hC = hC + (stratum(mC, "C", 3) if mC else [])
    NB, NC = pilot + mB, pilot + mC
    kB, kC = sum(hB), sum(hC)
    pB, pC = kB / NB, kC / NC
    p = wB * pB + (1.0 - wB) * pC
    # stratum-wise delta method
    sd = math.sqrt(wB * wB * pB * (1 - pB) / NB + (1 - wB) ** 2 * pC * (1 - pC) / NC)
    lo_ci = p - Z99 * sd
    hi_ci = p + Z99 * sd
    if kB == 0:
        hi_ci = max(hi_ci, wB * clopper_pearson(0, NB)[1])
    tallies = [(h,) for h in hB] + [(h,) for h in hC]
    return MCEstimate(p, lo_ci, hi_ci, kB + kC, q.N, time.perf_counter() - t0, "stratified", tallies)


def tallies_csv(estimates, labels) -> str:
    """Per-substream raw tallies, one line per (label, substream)."""
    lines = ["label,method,substream,tally"]
    for lab, est in zip(labels, estimates):
        for k, t in enumerate(est.tallies):
            lines.append(f"{lab},{est.method},{k},{' '.join(repr(v) for v in t)}")
    return "\n".join(lines) + "\n"

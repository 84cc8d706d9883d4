"""Envelope (n/a_n^d) ell_tilde(|x|)/(1+|x|^alpha), regimes, sweeps and the bounded-ratio verdict."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .charfn import CharFnModel
from .fourier_oracle import fourier_bounds
from .heavytail import MultiTailSpec, nondegeneracy_check
from .mc import estimate_iid_many, estimate_lattice
from .smoothing import SmoothingKernel
from .svf import NormingSeq

LOCAL, CROSSOVER, LARGE = "local", "crossover", "large-deviation"
PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
SLOPE_TOL = 0.1
MC_SLACK = 1.5


@dataclass
class Envelope:
    norm: NormingSeq
    d: int = 1

    def __call__(self, n: int, x) -> float:
        r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
        a = self.norm.a(n)
        return n / a**self.d * float(self.norm.ell_tilde(r)) / (1.0 + r**self.norm.alpha)


def envelope_eval(env: Envelope, n: int, x) -> float:
    return env(n, x)


def regime_tag(env: Envelope, n: int, x) -> str:
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    a = env.norm.a(n)
    if r <= a / 4:
        return LOCAL
    if r <= 4 * a:
        return CROSSOVER
    return LARGE


@dataclass
class Row:
    n: int
    x: tuple
    regime: str
    p_hat: float
    ci_lo: float
    ci_hi: float
    fourier_bound: float
    envelope: float
    ratio_mc: float
    ratio_oracle: float
    status: str


@dataclass
class LLDReport:
    d: int
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def pass_rows(self):
        return [r for r in self.rows if r.status == PASS]

    @property
    def C_hat(self) -> float:
        pr = self.pass_rows()
        return max((r.ratio_oracle for r in pr), default=float("nan"))

    def max_ratio_by_n(self) -> dict:
        out = {}
        for r in self.pass_rows():
            out[r.n] = max(out.get(r.n, -math.inf), r.ratio_oracle)
        return dict(sorted(out.items()))

    @property
    def slope(self) -> float:
        m = self.max_ratio_by_n()
        if len(m) < 2:
            return float("nan")
        ln = np.log(np.array(list(m.keys()), dtype=float))
        lr = np.log(np.array(list(m.values())))
        return float(np.polyfit(ln, lr, 1)[0])

    def max_by_regime(self) -> dict:
        out = {}
        for r in self.pass_rows():
            cur = out.get(r.regime, (0.0, 0.0))
            out[r.regime] = (max(cur[0], r.ratio_oracle), max(cur[1], r.ratio_mc))
        return out

    @property
    def failed(self):
        return [r for r in self.rows if r.status == FAIL]

    @property
    def inconclusive(self):
        return [r for r in self.rows if r.status == INCONCLUSIVE]

    def mc_bounded(self) -> bool:
        C = self.C_hat
        return all(r.ci_hi / r.envelope <= MC_SLACK * C for r in self.pass_rows())

    def sharpness_fraction(self, lo: float = 0.5, hi: float = 2.0, floor: float = 0.01):
        """Share of rows with |x|/a_n in [lo, hi] whose ratio_mc reaches floor * C_hat."""
        band = [r for r in self.pass_rows() if lo <= r_over_a(self, r) <= hi]
        if not band:
            return float("nan"), 0
        C = self.C_hat
        good = sum(bool(r.ratio_mc >= floor * C) for r in band)
        return float(good / len(band)), len(band)

    @property
    def verdict(self) -> str:
        if self.failed:
            return FAIL
        if len(self.max_ratio_by_n()) < 3:
            return INCONCLUSIVE
        if abs(self.slope) > SLOPE_TOL or not self.mc_bounded():
            return FAIL
        return PASS

    def summary(self) -> str:
        lines = [f"verdict: {self.verdict}", f"rows: {len(self.rows)}",
                 f"C_hat: {float(self.C_hat)!r}", f"slope: {float(self.slope)!r}"]
        for n, v in self.max_ratio_by_n().items():
            lines.append(f"max ratio_oracle n={n}: {float(v)!r}")
        for reg, (ro, rm) in sorted(self.max_by_regime().items()):
            lines.append(f"regime {reg}: max ratio_oracle {float(ro)!r}, max ratio_mc {float(rm)!r}")
        frac, cnt = self.sharpness_fraction()
        lines.append(f"crossover sharpness: {frac!r} of {cnt} rows")
        lines.append(f"failed rows: {len(self.failed)}; inconclusive rows: {len(self.inconclusive)}")
        for r in self.inconclusive:
            lines.append(f"  inconclusive n={r.n} x={r.x}")
        return "\n".join(lines) + "\n"


def r_over_a(report: LLDReport, row: Row) -> float:
    a = report.provenance.get("a_n", {}).get(row.n)
    return float(np.linalg.norm(row.x)) / a if a else float("nan")


def classify(regime: str, p_hat: float, ci_lo: float, ci_hi: float, bound: float) -> str:
    # a zero lower limit can never contradict the majorant, even if quadrature noise makes it slightly negative
    if ci_lo > 0 and ci_lo > max(bound, 0.0) * (1.0 + 1e-9):
        return FAIL
    if regime == LARGE and (ci_hi - ci_lo) > p_hat:
        return INCONCLUSIVE
    return PASS


def default_x_grid(spec, norm: NormingSeq, n: int, factors=None, directions=None):
    """Centers a_n * f * u for f in ``factors`` and unit vectors u in ``directions``."""
    a = norm.a(n)
    d = getattr(spec, "d", 1)
    if factors is None:
        factors = [0.0, 1 / 16, 1 / 4, 1 / 2, 1, 2, 4, 16, 64, 256, 1000] if d == 1 else \
            [0.0, 1 / 4, 1 / 2, 1, 2, 4, 8, 16]
    if directions is None:
        directions = grid_directions(spec)
    pts = []
    for u in directions:
        for f in factors:
            if f == 0 and pts and not np.any(pts[0]):
                continue
            pts.append(a * f * np.asarray(u, dtype=float))
    return np.array(pts).reshape(-1, d)


def grid_directions(spec):
    d = getattr(spec, "d", 1)
    if d == 1:
        base = getattr(spec, "base", spec)
        dirs = []
        if getattr(base, "p", 1.0) > 0:
            dirs.append([1.0])
        if getattr(base, "q", 0.0) > 0:
            dirs.append([-1.0])
        return dirs
    th = spec.sigma.theta_array
    u1 = th[0]
    dirs = [u1]
    if th.shape[0] > 1:
        b = th[0] + th[1]
        if np.linalg.norm(b) < 1e-12:
            b = th[0] + th[2] if th.shape[0] > 2 else np.roll(th[0], 1)
        dirs.append(b / np.linalg.norm(b))
    w = nondegeneracy_check(spec.sigma, spec.alpha).witness
    if all(abs(abs(np.dot(w, v)) - 1) > 1e-6 for v in dirs):
        dirs.append(w)
    return dirs


def sweep(spec, env: Envelope, ns, kernel: SmoothingKernel, N: int = 2**16, seed: int = 0,
          threads: int = 1, model: CharFnModel | None = None, grid=None, method="conditional",
          lattice: bool = False, log_floor: float = -40.0, keep_estimates: bool = False) -> LLDReport:
    """Fill every row with MC and the Fourier majorant; ``grid(n)`` returns the centers.

    With ``keep_estimates`` the raw MCEstimate objects land in
    ``provenance["estimates"]`` as (label, estimate) pairs.
    """
    norm = env.norm
    if isinstance(spec, MultiTailSpec):
        nd = nondegeneracy_check(spec.sigma, spec.alpha)
        if nd.degenerate:
            raise ValueError("decay prerequisite fails: degenerate spectral measure")
    model = model or CharFnModel(spec)
    grid = grid or (lambda n: default_x_grid(spec, norm, n))
    rep = LLDReport(env.d, provenance={"a_n": {}})
    kept = rep.provenance.setdefault("estimates", []) if keep_estimates else None
    for k, n in enumerate(ns):
        a = norm.a(n)
        rep.provenance["a_n"][n] = a
        xs = np.asarray(grid(n), dtype=float).reshape(-1, env.d)
        if lattice:
            xs = np.round(xs)
            ests = estimate_lattice(spec, norm, n, xs[:, 0], N, seed + k, threads, method)
        else:
            ests = estimate_iid_many(spec, norm, n, xs, 1.0, N, seed + k, threads, method)
        bounds = fourier_bounds(model, kernel, n, xs, a, log_floor=log_floor)
        for x, est, I in zip(xs, ests, bounds):
            e = env(n, x)
            reg = regime_tag(env, n, x)
            st = classify(reg, est.p_hat, est.ci_lo, est.ci_hi, I)
            if kept is not None:
                kept.append((f"n={n} x={' '.join(repr(float(v)) for v in x)}", est))
            rep.rows.append(Row(n, tuple(float(v) for v in x), reg, est.p_hat, est.ci_lo, est.ci_hi,
                                float(I), e, est.p_hat / e, float(I) / e, st))
    return rep


def columns(d: int):
    return (["n"] + [f"x_{j + 1}" for j in range(d)] +
            ["regime", "p_hat", "ci_lo", "ci_hi", "fourier_bound", "envelope",
             "ratio_mc", "ratio_oracle", "status"])


def report_csv(report: LLDReport, header_comments=()) -> str:
    buf = io.StringIO()
    for c in header_comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns(report.d))
    for r in report.rows:
        nums = (*r.x, r.p_hat, r.ci_lo, r.ci_hi, r.fourier_bound, r.envelope, r.ratio_mc,
                r.ratio_oracle)
        f = [repr(float(v)) for v in nums]
        w.writerow([int(r.n), *f[:report.d], r.regime, *f[report.d:], r.status])
    return buf.getvalue()


def emit_report(report: LLDReport, path, config_hash: str = "", extra=()) -> None:
    comments = [f"config_sha256={config_hash}", f"version={__version__}", *extra]
    comments += [f"a_n[{n}]={a!r}" for n, a in sorted(report.provenance.get("a_n", {}).items())]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_csv(report, comments))
    summary = str(path).rsplit(".", 1)[0] + "_summary.txt"
    with open(summary, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.summary())


def read_report(path) -> LLDReport:
    with open(path, encoding="utf-8") as fh:
        text = fh.readlines()
    lines = [ln for ln in text if not ln.startswith("#")]
    a_n = {}
    for ln in text:
        if ln.startswith("# a_n["):
            key, val = ln[6:].strip().split("]=")
            a_n[int(key)] = float(val)
    rd = csv.reader(lines)
    head = next(rd)
    d = sum(h.startswith("x_") for h in head)
    rep = LLDReport(d, provenance={"a_n": a_n})
    for rec in rd:
        n = int(rec[0])
        x = tuple(float(v) for v in rec[1:1 + d])
        vals = rec[1 + d:]
        f = [float(v) for v in vals[1:8]]
        rep.rows.append(Row(n, x, vals[0], *f, vals[8]))
    return rep

"""Command-line front door: one JSON config per experiment, tidy CSV out.

Exit codes: 0 PASS, 1 FAIL, 2 INCONCLUSIVE, 3 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .charfn import CharFnModel, StableTarget, fit_decay_constant, modulus_report, select_eps
from .heavytail import (LatticeSpec, MixedLatticeSpec, MultiTailSpec, ScalarTailSpec,
                        SpectralMeasure, stream)
from .lld_verify import FAIL, INCONCLUSIVE, PASS, Envelope, LLDReport, emit_report, read_report, sweep
from .mc import tallies_csv
from .smoothing import build_kernel, check_kernel
from .svf import NormingSeq, SlowlyVarying, check_alpha

EXIT = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}
CONFIG_ERROR = 3
SUBCOMMANDS = ("sample", "norming", "kernel-check", "cf-diagnostics", "sweep", "lattice-sweep",
               "eigencurve", "dyn-sweep", "report")

_ELL = {"type": "object", "additionalProperties": False,
        "properties": {"c": {"type": "number", "exclusiveMinimum": 0}, "beta": {"type": "number"}}}
_ALPHA = {"type": "number", "exclusiveMinimum": 0, "maximum": 2}


def _kind(name, props, required):
    props = {"kind": {"const": name}, "alpha": _ALPHA, **props}
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": ["kind", "alpha", *required]}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["spec"],
    "properties": {
        "name": {"type": "string"},
        "spec": {"oneOf": [
            _kind("scalar", {"p": {"type": "number", "minimum": 0}, "q": {"type": "number", "minimum": 0},
                             "ell": _ELL}, ["p", "q"]),
            _kind("multivariate", {"atoms": {"type": "array", "minItems": 1,
                                             "items": {"type": "array", "items": {"type": "number"}}},
                                   "weights": {"type": "array", "items": {"type": "number"}},
                                   "ell": _ELL}, ["atoms", "weights"]),
            _kind("lattice", {"p": {"type": "number", "minimum": 0}, "q": {"type": "number", "minimum": 0},
                              "span": {"type": "integer", "minimum": 1}}, ["p", "q"]),
            _kind("mixed", {"p": {"type": "number", "minimum": 0}, "q": {"type": "number", "minimum": 0},
                            "span": {"type": "integer", "minimum": 1},
                            "weight": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                  ["p", "q"]),
            _kind("dynamics", {"map": {"enum": ["gauss", "afu", "doubling"]},
                               "centered": {"type": "boolean"},
                               "m": {"type": "integer", "minimum": 40},
                               "K": {"type": "integer", "minimum": 10}}, ["map"]),
        ]},
        "eps": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": math.pi / 4},
        "grid": {"type": "object", "additionalProperties": False, "properties": {
            "n": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            "factors": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "s_min": {"type": "number", "exclusiveMinimum": 0},
            "s_max": {"type": "number", "exclusiveMinimum": 0},
            "s_points": {"type": "integer", "minimum": 4},
        }},
        "budget": {"type": "object", "additionalProperties": False, "properties": {
            "N": {"type": "integer", "minimum": 10000},
            "method": {"enum": ["conditional", "plain"]},
            "log_floor": {"type": "number", "maximum": 0},
            "burn_in": {"type": "integer", "minimum": 0},
        }},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"dir": {"type": "string"}}},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    raw: dict
    path: str = "<memory>"

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, str(path))

    @classmethod
    def from_dict(cls, raw: dict, path: str = "<memory>") -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            # oneOf failures hide the useful message; an alpha of 1 is the common one
            alpha = raw.get("spec", {}).get("alpha") if isinstance(raw.get("spec"), dict) else None
            if alpha == 1:
                raise ConfigError(_alpha_one()) from None
            raise ConfigError(f"{path}: {where}: {exc.message}") from None
        try:
            check_alpha(raw["spec"]["alpha"])
        except ValueError:
            raise ConfigError(_alpha_one()) from None
        return cls(copy.deepcopy(raw), path)

    # accessors with defaults
    @property
    def spec_block(self) -> dict:
        return self.raw["spec"]

    @property
    def kind(self) -> str:
        return self.spec_block["kind"]

    @property
    def alpha(self) -> float:
        return float(self.spec_block["alpha"])

    def grid(self, key, default):
        return self.raw.get("grid", {}).get(key, default)

    def budget(self, key, default):
        return self.raw.get("budget", {}).get(key, default)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _alpha_one() -> str:
    return ("alpha = 1 is excluded from the theory: the Cauchy-type case needs a "
            "logarithmic centering that the local large deviation bound does not cover; "
            "use alpha in (0, 1) or (1, 2]")


def bundled_configs() -> dict:
    """name -> path of the JSON configs shipped with the package."""
    root = resources.files("stablelld") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def build_spec(cfg: ExperimentConfig):
    sb = cfg.spec_block
    ell = SlowlyVarying(**sb.get("ell", {}))
    try:
        if cfg.kind == "scalar":
            return ScalarTailSpec(cfg.alpha, sb["p"], sb["q"], ell)
        if cfg.kind == "multivariate":
            atoms = np.asarray(sb["atoms"], dtype=float)
            atoms = atoms / np.linalg.norm(atoms, axis=1, keepdims=True)
            return MultiTailSpec(cfg.alpha, SpectralMeasure(atoms, sb["weights"]), ell)
        if cfg.kind == "lattice":
            return LatticeSpec(cfg.alpha, sb["p"], sb["q"], sb.get("span", 1))
        if cfg.kind == "mixed":
            return MixedLatticeSpec(LatticeSpec(cfg.alpha, sb["p"], sb["q"], sb.get("span", 1)),
                                    sb.get("weight", 0.1))
    except ValueError as exc:
        raise ConfigError(f"spec rejected: {exc}") from None
    raise ConfigError(f"spec kind {cfg.kind!r} is not an i.i.d. law")


def build_norming(spec) -> NormingSeq:
    mean = spec.mean() if spec.alpha > 1 else 0.0
    return NormingSeq(spec.alpha, getattr(spec, "ell", SlowlyVarying()), mean)


def build_transfer(cfg: ExperimentConfig):
    from .dynamics import Observable, TransferModel, make_map
    sb = cfg.spec_block
    obs = Observable.power(cfg.alpha, sb.get("centered"))
    return TransferModel(make_map(sb["map"]), obs, m=sb.get("m", 64), K=sb.get("K", 10**4))


def resolve_eps(cfg: ExperimentConfig, spec=None) -> float:
    if cfg.raw.get("eps") is not None:
        return float(cfg.raw["eps"])
    if spec is None:
        return math.pi / 4
    norm = build_norming(spec)
    return select_eps(CharFnModel(spec), spec.alpha, norm.ell_tilde)


class Run:
    """Flags plus the loaded config; each subcommand returns a verdict string."""

    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int, budget_scale: float,
                 dump_tallies: bool):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.budget_scale = budget_scale
        self.dump_tallies = dump_tallies

    @property
    def N(self) -> int:
        return max(10**4, int(round(self.cfg.budget("N", 2**16) * self.budget_scale)))

    def comments(self, *extra):
        return [f"config_sha256={self.cfg.sha256()}", f"version={__version__}", *extra]

    def write_csv(self, name: str, header, rows, extra=()) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        for c in self.comments(*extra):
            buf.write(f"# {c}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        path = self.out / name
        path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
        return path

    def iid_spec(self):
        if self.cfg.kind == "dynamics":
            raise ConfigError("this subcommand needs an i.i.d. spec, not a dynamics block")
        return build_spec(self.cfg)

    def dyn_model(self):
        if self.cfg.kind != "dynamics":
            raise ConfigError("this subcommand needs a dynamics spec block")
        try:
            return build_transfer(self.cfg)
        except ValueError as exc:
            raise ConfigError(f"dynamics block rejected: {exc}") from None

    # subcommands
    def sample(self) -> str:
        N = self.N
        if self.cfg.kind == "dynamics":
            model = self.dyn_model()
            rng = stream(self.cfg.seed, 0)
            z = model.sample_invariant(rng.random(N), rng.random(N))
            self.write_csv("samples.csv", ["z", "v"], zip(z, model.obs(z)))
            return PASS
        spec = self.iid_spec()
        x = np.asarray(spec.sample(stream(self.cfg.seed, 0), N), dtype=float).reshape(N, -1)
        self.write_csv("samples.csv", [f"x_{j + 1}" for j in range(x.shape[1])], x.tolist())
        return PASS

    def norming(self) -> str:
        ns = self.cfg.grid("n", [2**k for k in range(0, 13)])
        if self.cfg.kind == "dynamics":
            from .dynamics.lld import dynamic_norming
            norm = dynamic_norming(self.dyn_model())
        else:
            norm = build_norming(self.iid_spec())
        d = np.size(norm.b(1))
        rows = []
        for n in ns:
            b = np.atleast_1d(norm.b(n))
            rows.append([int(n), float(norm.a(n)), *[float(v) for v in b]])
        head = ["n", "a_n"] + (["b_n"] if d == 1 else [f"b_n_{j + 1}" for j in range(d)])
        self.write_csv("norming.csv", head, rows)
        return PASS

    def kernel_check(self) -> str:
        eps = resolve_eps(self.cfg, None if self.cfg.kind == "dynamics" else self.iid_spec())
        k = build_kernel(eps)
        chk = check_kernel(k)
        rows = [[name, float(getattr(chk, name))] for name in chk.__dataclass_fields__
                if isinstance(getattr(chk, name), (int, float, np.floating)) and
                not isinstance(getattr(chk, name), bool)]
        rows.append(["ok", int(chk.ok)])
        self.write_csv("kernel_check.csv", ["quantity", "value"], rows, [f"eps={eps!r}"])
        return PASS if chk.ok else FAIL

    def cf_diagnostics(self) -> str:
        spec = self.iid_spec()
        norm = build_norming(spec)
        eps = resolve_eps(self.cfg, spec)
        model = CharFnModel(spec)
        rep = fit_decay_constant(model, spec.alpha, norm.ell_tilde, eps)
        rows = [["eps", eps], ["c_min", rep.c_min], ["c_max", rep.c_max], ["c_limit", rep.c_limit]]
        if not spec.is_lattice and not isinstance(spec, MixedLatticeSpec):
            try:
                target = StableTarget.from_spec(spec)
                rows.append(["k_u_quadrature", float(np.min(target.k_u(rep.witness)))])
            except (ValueError, TypeError):
                pass
        stable = True
        for mr in modulus_report(model, spec.alpha, 3 * eps):
            rows.append([f"modulus_{mr.part}_max_ratio", float(np.max(mr.max_ratio))])
            stable &= mr.stable
        rows.append(["decay_ok", int(rep.ok)])
        rows.append(["modulus_stable", int(stable)])
        self.write_csv("cf_diagnostics.csv", ["quantity", "value"], rows)
        return PASS if rep.ok and stable else FAIL

    def _emit(self, rep: LLDReport, name: str, eps: float) -> str:
        self.out.mkdir(parents=True, exist_ok=True)
        emit_report(rep, self.out / f"{name}.csv", self.cfg.sha256(), [f"eps={eps!r}"])
        return rep.verdict

    def _grid(self, norm, d):
        factors = self.cfg.grid("factors", None)
        if factors is None:
            return None
        from .lld_verify import default_x_grid
        return lambda n: default_x_grid(self._spec, norm, n, factors)

    def sweep(self, lattice_mode: bool = False) -> str:
        spec = self._spec = self.iid_spec()
        if lattice_mode and not (spec.is_lattice or isinstance(spec, MixedLatticeSpec)):
            raise ConfigError("lattice-sweep needs a lattice or mixed spec")
        if not lattice_mode and spec.is_lattice:
            raise ConfigError("pure lattice specs go through lattice-sweep")
        norm = build_norming(spec)
        eps = resolve_eps(self.cfg, spec)
        ns = self.cfg.grid("n", [2**k for k in range(4, 13, 2)])
        rep = sweep(spec, Envelope(norm, spec.d), ns, build_kernel(eps), N=self.N, seed=self.cfg.seed,
                    threads=self.threads, grid=self._grid(norm, spec.d),
                    method=self.cfg.budget("method", "conditional"),
                    lattice=spec.is_lattice, log_floor=self.cfg.budget("log_floor", -40.0),
                    keep_estimates=self.dump_tallies)
        name = "lattice_sweep" if lattice_mode else "sweep"
        if self.dump_tallies:
            labels, ests = zip(*rep.provenance["estimates"])
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / f"{name}_tallies.csv").write_text(tallies_csv(ests, labels), encoding="utf-8",
                                                          newline="\n")
        return self._emit(rep, name, eps)

    def lattice_sweep(self) -> str:
        return self.sweep(lattice_mode=True)

    def eigencurve(self) -> str:
        from .dynamics import eigencurve
        model = self.dyn_model()
        s = np.geomspace(self.cfg.grid("s_min", 1e-4), self.cfg.grid("s_max", 1e-1),
                         self.cfg.grid("s_points", 16))
        curve = eigencurve(model, s, threads=self.threads)
        self.out.mkdir(parents=True, exist_ok=True)
        extra = [f"alpha_hat={curve.alpha_hat!r}", f"c={curve.c!r}", f"residual={curve.residual!r}"]
        if curve.dlam0 is not None:
            extra.append(f"dlambda0_abs={abs(curve.dlam0)!r}")
        (self.out / "eigencurve.csv").write_text(curve.csv(self.comments(*extra)), encoding="utf-8",
                                                 newline="\n")
        ok = abs(curve.alpha_hat - model.obs.alpha) <= 0.1 * model.obs.alpha and not curve.flagged
        if curve.dlam0 is not None and model.obs.alpha > 1:
            ok &= abs(curve.dlam0) < 1e-6
        return PASS if ok else FAIL

    def dyn_sweep(self) -> str:
        from .dynamics.lld import birkhoff_lld_sweep, default_dyn_grid, dynamic_norming
        model = self.dyn_model()
        eps = resolve_eps(self.cfg)
        norm = dynamic_norming(model)
        factors = self.cfg.grid("factors", None)
        grid = None if factors is None else (lambda n: default_dyn_grid(model, norm, n, factors))
        ns = self.cfg.grid("n", [32, 64, 128, 256, 512])
        try:
            rep = birkhoff_lld_sweep(model, ns, build_kernel(eps), N=self.N, seed=self.cfg.seed,
                                     threads=self.threads, grid=grid, norm=norm,
                                     burn_in=self.cfg.budget("burn_in", 1000),
                                     log_floor=self.cfg.budget("log_floor", -20.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.dump_tallies:
            self.write_csv("dyn_sweep_tallies.csv", ["n", "x", "hits", "N"],
                           [[r.n, r.x[0], int(round(r.p_hat * self.N)), self.N] for r in rep.rows])
        return self._emit(rep, "dyn_sweep", eps)

    def report(self) -> str:
        paths = sorted(p for p in self.out.glob("*sweep.csv"))
        if not paths:
            print(f"no sweep reports under {self.out}", file=sys.stderr)
            return INCONCLUSIVE
        rows, verdicts = [], []
        for p in paths:
            rep = read_report(p)
            v = rep.verdict
            verdicts.append(v)
            frac, cnt = rep.sharpness_fraction()
            rows.append([p.name, v, float(rep.C_hat), float(rep.slope), len(rep.rows), len(rep.failed),
                         len(rep.inconclusive), float(frac)])
        self.write_csv("report.csv", ["file", "verdict", "C_hat", "slope", "rows", "failed",
                                      "inconclusive", "sharpness"], rows)
        for r in rows:
            print(f"{r[0]}: {r[1]} (C_hat={r[2]:.4g}, slope={r[3]:+.4f})")
        if FAIL in verdicts:
            return FAIL
        return INCONCLUSIVE if INCONCLUSIVE in verdicts else PASS


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stablelld", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "report",
                       help="JSON experiment file, or the name of a bundled config")
        p.add_argument("--out", help="output directory (default: config output.dir or ./out)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--budget-scale", type=float, default=1.0)
        p.add_argument("--dump-tallies", action="store_true")
    return ap


def _config_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists() or p.suffix == ".json":
        return p
    bundled = bundled_configs()
    if arg in bundled:
        return bundled[arg]
    raise ConfigError(f"no config file {arg!r} and no bundled config of that name "
                      f"(bundled: {', '.join(sorted(bundled))})")


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.config is None:
            cfg = ExperimentConfig.from_dict({"spec": {"kind": "scalar", "alpha": 0.5, "p": 1, "q": 0}})
        else:
            cfg = ExperimentConfig.load(_config_path(args.config))
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.raw["seed"] = args.seed
        if args.budget_scale <= 0 or args.threads < 1:
            raise ConfigError("--budget-scale must be positive and --threads at least 1")
        if args.budget_scale != 1.0:
            cfg.raw.setdefault("budget", {})["budget_scale"] = args.budget_scale
        out = Path(args.out or cfg.raw.get("output", {}).get("dir", "out"))
        runner = Run(cfg, out, args.threads, args.budget_scale, args.dump_tallies)
        verdict = getattr(runner, args.command.replace("-", "_"))()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    print(f"{args.command}: {verdict}")
    return EXIT[verdict]


def main() -> None:
    sys.exit(run())

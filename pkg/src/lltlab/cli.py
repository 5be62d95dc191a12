"""``llt-lab``: run experiments from strict JSON configs.

Every run writes its artifacts plus ``manifest.json`` (resolved config and
sha256 of each artifact) into the output directory.  Exit codes: 0 success,
2 invalid config, 3 numerical non-convergence, 4 failed ``--assert``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import _backend, charfn, kernel, llt, mixing, stable
from ._quad import ConvergenceError

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_ASSERT = 0, 2, 3, 4
SCHEMA_VERSION = 1


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- model and functional specs ---------------------------------------------------


class TwoStateSpec(Strict):
    kind: Literal["two_state"]
    stay: float = Field(0.6, ge=0, le=1)


class IidSpec(Strict):
    kind: Literal["iid"]
    probs: list[float] = Field(min_length=1)


class FiniteSpec(Strict):
    kind: Literal["finite"]
    initial: list[float] = Field(min_length=1)
    kernels: list[list[list[float]]] = Field(min_length=1)


class GibbsSpec(Strict):
    kind: Literal["gibbs"]
    truncation: int = Field(ge=2)
    pi: Optional[list[float]] = None
    eps: Optional[list[float]] = None
    initial: Literal["pi", "stationary"] = "pi"


class LazySpec(Strict):
    kind: Literal["lazy_uniform"]
    stay: float = Field(ge=0, le=1)


class Example1Spec(Strict):
    kind: Literal["example1"]


class GaussSpec(Strict):
    kind: Literal["gauss"]
    burn_in: int = Field(0, ge=0)


class TailSpec(Strict):
    p: float = Field(gt=0, lt=2)
    x0: float = Field(1.0, gt=0)
    c_plus: float = Field(0.5, ge=0, le=1)
    c_minus: float = Field(0.5, ge=0, le=1)
    ell: Literal["constant", "log"] = "constant"
    kappa: float = Field(1.0, gt=0)
    gamma: float = 1.0

    def build(self) -> stable.TailModel:
        return stable.TailModel(**self.model_dump())


class IidTailSpec(Strict):
    kind: Literal["iid_tail"]
    tail: TailSpec


ModelSpec = Annotated[Union[TwoStateSpec, IidSpec, FiniteSpec, GibbsSpec, LazySpec, Example1Spec, GaussSpec,
                            IidTailSpec], Field(discriminator="kind")]


class LatticeSpec(Strict):
    span: float = Field(gt=0)
    offset: float = 0.0


class ValuesFunctional(Strict):
    kind: Literal["values"]
    values: list[list[float]] = Field(min_length=1)
    lattice: Optional[LatticeSpec] = None


class FormulaFunctional(Strict):
    kind: Literal["formula"]
    formula: Literal["identity", "tail", "bin", "digit", "indicator"]
    shift: float = 0.0
    p: Optional[float] = None
    x0: Optional[float] = None
    bins: Optional[int] = None
    state: Optional[int] = None
    lattice: Optional[LatticeSpec] = None


FunctionalSpec = Annotated[Union[ValuesFunctional, FormulaFunctional], Field(discriminator="kind")]


def build_model(spec) -> kernel.ChainModel:
    k = spec.kind
    if k == "two_state":
        return kernel.build_two_state(spec.stay)
    if k == "iid":
        return kernel.build_iid(spec.probs)
    if k == "finite":
        return kernel.build_finite(spec.initial, spec.kernels)
    if k == "gibbs":
        pi, eps = kernel.example3_parameters(spec.truncation)
        pi = pi if spec.pi is None else spec.pi
        eps = eps if spec.eps is None else spec.eps
        return kernel.build_gibbs_chain(pi, eps, spec.truncation, initial=spec.initial)
    if k == "lazy_uniform":
        return kernel.build_lazy_uniform(spec.stay)
    if k == "example1":
        return kernel.build_example1()
    if k == "gauss":
        return kernel.build_gauss_chain(spec.burn_in)
    return kernel.build_iid_tail(spec.tail.build())


def build_functional(spec) -> kernel.Functional:
    lat = kernel.Lattice(spec.lattice.span, spec.lattice.offset) if spec.lattice else None
    if spec.kind == "values":
        return kernel.Functional.per_step(spec.values, lattice=lat)
    params = {k: v for k, v in spec.model_dump().items()
              if k not in ("kind", "formula", "lattice") and v is not None and not (k == "shift" and v == 0.0)}
    return kernel.Functional.named(spec.formula, lattice=lat, **params)


class Grid(Strict):
    start: float
    stop: float
    points: int = Field(ge=1)

    def array(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


class LawSpec(Strict):
    p: float = Field(gt=0, le=2)
    scale: float = Field(gt=0)
    beta: float = Field(0.0, ge=-1, le=1)

    def build(self) -> stable.StableLaw:
        return stable.StableLaw(self.p, self.scale, self.beta)


class Base(Strict):
    schema_version: Literal[1] = 1
    seed: int = Field(0, ge=0, lt=2**64)
    out: Optional[str] = None
    threads: int = Field(1, ge=1)
    note: Optional[str] = None


class SimulateConfig(Base):
    kind: Literal["simulate"]
    model: ModelSpec
    functional: FunctionalSpec
    n: int = Field(ge=1)
    replicas: int = Field(ge=1)


class MixingConfig(Base):
    kind: Literal["mixing"]
    model: ModelSpec
    functional: Optional[FunctionalSpec] = None
    lags: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5], min_length=1)
    variance_ns: list[int] = Field(default_factory=lambda: [10, 100, 1000])

    @field_validator("lags", "variance_ns")
    @classmethod
    def _positive(cls, v):
        if any(x < 1 for x in v):
            raise ValueError("entries must be >= 1")
        return v


class TailIntegralSpec(Strict):
    n: int = Field(ge=1)
    b_n: float = Field(gt=0)
    t_low: float = Field(ge=0)
    upper: float = Field(gt=0)
    lattice_span: Optional[float] = Field(None, gt=0)


class D2Spec(Strict):
    ns: list[int] = Field(min_length=1)
    delta: float = Field(gt=0)
    d: float = Field(gt=0)
    b_scale: float = Field(1.0, gt=0)


class CharfnConfig(Base):
    kind: Literal["charfn-bound"]
    model: ModelSpec
    functional: FunctionalSpec
    ns: list[int] = Field(min_length=1)
    u_grid: Grid = Grid(start=-math.pi, stop=math.pi, points=200)
    lemma_grid: Grid = Grid(start=-math.pi, stop=math.pi, points=100)
    tail_integrals: list[TailIntegralSpec] = Field(default_factory=list)
    d2: Optional[D2Spec] = None


class DensityConfig(Base):
    kind: Literal["stable-density"]
    law: LawSpec
    x_grid: Grid = Grid(start=-5, stop=5, points=201)
    mass_reach: float = Field(200.0, gt=0)
    mass_tol: float = Field(1e-6, gt=0)


class NormalizerSpec(Strict):
    method: Literal["c_sqrt_n", "variance", "mean_abs", "tail_solve"]
    c: Union[float, Literal["long_run"], None] = None


class ShiftSpec(Strict):
    reach: float = Field(10.0, gt=0)
    points: int = Field(41, ge=1)
    values: Optional[list[float]] = None


class ConvolutionSpec(Strict):
    ns: list[int] = Field(min_length=1)
    replicas: int = Field(ge=1000)


class LLTConfig(Base):
    kind: Literal["llt"]
    model: ModelSpec
    functional: FunctionalSpec
    ns: list[int] = Field(min_length=1)
    replicas: int = Field(ge=1000)
    normalizer: NormalizerSpec
    law: Optional[LawSpec] = None
    fit_scale: bool = False
    interval: tuple[float, float] = (-0.5, 0.5)
    shifts: ShiftSpec = ShiftSpec()
    lattice: Optional[LatticeSpec] = None
    tolerance: float = Field(0.10, gt=0)
    convolution_check: Optional[ConvolutionSpec] = None


class DJConfig(Base):
    kind: Literal["dj-check"]
    model: ModelSpec
    functional: FunctionalSpec
    tail: TailSpec
    xs: list[float] = Field(default_factory=lambda: [1.0], min_length=1)
    ks: list[int] = Field(default_factory=lambda: [2], min_length=1)
    ns: list[int] = Field(min_length=1)
    replicas: int = Field(ge=1)
    min_events: int = Field(20, ge=1)
    expect_decay: bool = True


class ProbeNormalizer(Strict):
    method: Literal["exact_variance", "c_sqrt_n"] = "exact_variance"
    c: float = Field(1.0, gt=0)


class AProbeSpec(Strict):
    n: int = Field(ge=1)
    delta: float = Field(gt=0)
    points: int = Field(64, ge=3)
    exponent_range: tuple[float, float] = (1.8, 2.2)


class BProbeSpec(Strict):
    u: float
    eps: float = Field(gt=0)
    ns: list[int] = Field(min_length=1)
    require_from: int = Field(1, ge=1)


class ConditionsConfig(Base):
    kind: Literal["conditions"]
    model: ModelSpec
    functional: FunctionalSpec
    normalizer: ProbeNormalizer = ProbeNormalizer()
    a_probe: Optional[AProbeSpec] = None
    b_probe: Optional[BProbeSpec] = None


ExperimentConfig = Annotated[Union[SimulateConfig, MixingConfig, CharfnConfig, DensityConfig, LLTConfig, DJConfig,
                                   ConditionsConfig], Field(discriminator="kind")]


class _Envelope(Strict):
    config: ExperimentConfig


def parse_config(data: dict[str, Any]):
    return _Envelope(config=data).config


def format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"][1:] if not str(p).startswith(("function-", "tagged-union")))
        lines.append(f"{loc or '<root>'}: {e['msg']}")
    return "\n".join(lines)


# -- runners ---------------------------------------------------------------------


class Run:
    """Collects artifacts and checks for one experiment."""

    def __init__(self, out: Path):
        self.out = out
        self.artifacts: list[str] = []
        self.checks: dict[str, bool] = {}
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def json(self, name: str, obj: Any) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(_plain(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_simulate(cfg: SimulateConfig, run: Run) -> None:
    model, f = build_model(cfg.model), build_functional(cfg.functional)
    batch = kernel.simulate_partial_sums(model, f, cfg.n, cfg.replicas, cfg.seed, threads=cfg.threads)
    batch.to_csv(run.path("trajectories.csv"))
    s = batch.sums
    run.json("summary.json", {"n": cfg.n, "replicas": cfg.replicas, "mean": float(s.mean()),
                              "variance": float(s.var(ddof=1)) if s.size > 1 else 0.0,
                              "model_digest": batch.model_digest, "sums_digest": batch.digest()})
    run.checks["finite_sums"] = bool(np.all(np.isfinite(s)))


def run_mixing(cfg: MixingConfig, run: Run) -> None:
    model = build_model(cfg.model)
    report = mixing.mixing_inequality_report(model, cfg.lags)
    report.to_csv(run.path("mixing.csv"))
    report.to_json(run.path("mixing.json"))
    run.checks["inequalities"] = report.passed
    if cfg.functional is not None and cfg.variance_ns:
        vr = mixing.variance_ratio_check(model, build_functional(cfg.functional), cfg.variance_ns)
        run.json("variance.json", vr)
        run.checks["variance_sandwich"] = vr["pass"]


def run_charfn(cfg: CharfnConfig, run: Run) -> None:
    model, f = build_model(cfg.model), build_functional(cfg.functional)
    u = cfg.u_grid.array()
    summary: dict[str, Any] = {"factorization": [], "tail_integrals": []}
    for n in cfg.ns:
        res = charfn.verify_factorization(model, f, n, u)
        summary["factorization"].append(res)
        charfn.exact_curve(model, f, n, u).to_csv(run.path(f"charfn_n{n}.csv"))
    run.checks["factorization"] = all(r["pass"] for r in summary["factorization"])
    lemmas = charfn.lemma_sweep(model, f, cfg.lemma_grid.array())
    summary["lemmas"] = lemmas
    run.checks["lemmas"] = lemmas["pass"]
    for ti in cfg.tail_integrals:
        val = charfn.charfn_tail_integral(model, f, ti.n, ti.b_n, ti.t_low, ti.upper, lattice_span=ti.lattice_span)
        summary["tail_integrals"].append({**ti.model_dump(), "value": val})
    if cfg.d2 is not None:
        vals = [charfn.d2_quantity(model, f, n, cfg.d2.b_scale * math.sqrt(n), cfg.d2.delta, cfg.d2.d)
                for n in cfg.d2.ns]
        summary["d2"] = {"ns": cfg.d2.ns, "values": vals}
        run.checks["d2_decreasing"] = bool(np.all(np.diff(vals) < 0))
    run.json("charfn.json", summary)


def run_density(cfg: DensityConfig, run: Run) -> None:
    law = cfg.law.build()
    stable.density_table(law, cfg.x_grid.array()).to_csv(run.path("density.csv"))
    mass = stable.density_mass(law, reach=cfg.mass_reach)
    run.json("density.json", {"law": law.to_config(), "mass": mass})
    run.checks["mass"] = abs(mass["mass"] - 1.0) <= cfg.mass_tol
    run.checks["nonnegative"] = mass["min_density"] >= -1e-9


def _llt_normalizer(cfg: LLTConfig, model, f):
    spec = cfg.normalizer
    if spec.method == "c_sqrt_n":
        c = spec.c
        if c is None:
            raise ValueError("normalizer.c is required for c_sqrt_n")
        if c == "long_run":
            c = math.sqrt(kernel.long_run_variance(model, f))
        return stable.c_sqrt_n_normalizer(c, cfg.ns)
    if spec.method == "tail_solve":
        if model.kind != kernel.IID_TAIL:
            raise ValueError("tail_solve needs an iid_tail model")
        return stable.tail_normalizers(model.params["tail"], cfg.ns)
    return spec.method


def run_llt(cfg: LLTConfig, run: Run) -> None:
    model, f = build_model(cfg.model), build_functional(cfg.functional)
    lat = kernel.Lattice(cfg.lattice.span, cfg.lattice.offset) if cfg.lattice else None
    shifts = cfg.shifts.values
    if shifts is None:
        shifts = llt.shift_grid(cfg.shifts.reach, cfg.shifts.points, lattice=lat)
    law = cfg.law.build() if cfg.law else llt.GAUSSIAN
    exp = llt.LLTExperiment(model, f, cfg.ns, cfg.replicas, _llt_normalizer(cfg, model, f), law=law,
                            interval=cfg.interval, shifts=shifts, lattice=lat, seed=cfg.seed,
                            threads=cfg.threads, tolerance=cfg.tolerance, fit_scale=cfg.fit_scale,
                            tail=model.params.get("tail"))
    report = llt.lattice_discrepancy(exp) if lat else llt.nonlattice_discrepancy(exp)
    report.to_json(run.path("llt.json"))
    report.to_csv(run.path("llt.csv"))
    run.checks["sup_discrepancy"] = report.passed
    if cfg.convolution_check:
        cc = llt.convolution_cross_check(model, f, cfg.convolution_check.ns, cfg.convolution_check.replicas,
                                         cfg.seed, interval=cfg.interval, shifts=[0.0], threads=cfg.threads)
        run.json("convolution.json", cc)
        run.checks["convolution"] = cc["pass"]


def run_dj(cfg: DJConfig, run: Run) -> None:
    model, f = build_model(cfg.model), build_functional(cfg.functional)
    sched = stable.tail_normalizers(cfg.tail.build(), cfg.ns)
    res = llt.dj_clustering_check(model, f, cfg.xs, cfg.ks, sched, cfg.replicas, cfg.seed,
                                  threads=cfg.threads, min_events=cfg.min_events)
    run.json("dj.json", res)
    with open(run.path("dj.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["x", "k", "n", "B_n", "events", "hits", "estimate", "wilson_low", "wilson_high", "insufficient"]
        w.writerow(cols)
        for r in res["rows"]:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    run.checks["decay_matches_expectation"] = res["decaying"] == cfg.expect_decay


def _probe_normalizers(cfg: ConditionsConfig, model, f, ns) -> list[float]:
    if cfg.normalizer.method == "c_sqrt_n":
        return [cfg.normalizer.c * math.sqrt(n) for n in ns]
    sigma2, _ = mixing.exact_variances(model, f, max(ns))
    return [math.sqrt(sigma2[n - 1]) for n in ns]


def run_conditions(cfg: ConditionsConfig, run: Run) -> None:
    model, f = build_model(cfg.model), build_functional(cfg.functional)
    out: dict[str, Any] = {}
    if cfg.a_probe:
        ap = cfg.a_probe
        (b,) = _probe_normalizers(cfg, model, f, [ap.n])
        res = llt.condition_A_probe(model, f, ap.n, b, ap.delta, points=ap.points)
        out["a_probe"] = res
        lo, hi = ap.exponent_range
        run.checks["a_exponent"] = bool(res["verifiable"] and lo <= res["exponent"] <= hi)
    if cfg.b_probe:
        bp = cfg.b_probe
        bs = _probe_normalizers(cfg, model, f, bp.ns)
        res = llt.condition_B_probe(model, f, bp.u, bp.eps, bp.ns, bs)
        out["b_probe"] = res
        run.checks["b_exceeds_one"] = all(m > 1.0 for n, m in zip(bp.ns, res["min_values"]) if n >= bp.require_from)
    run.json("conditions.json", out)


RUNNERS = {"simulate": run_simulate, "mixing": run_mixing, "charfn-bound": run_charfn,
           "stable-density": run_density, "llt": run_llt, "dj-check": run_dj, "conditions": run_conditions}


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def execute(command: str, config_path: str, out: str | None = None, seed: int | None = None,
            threads: int | None = None, check: bool = False, stream=None) -> int:
    """Run one experiment; returns the exit code."""
    stream = sys.stderr if stream is None else stream
    try:
        raw = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=stream)
        return EXIT_INVALID
    if not isinstance(raw, dict):
        print("error: config must be a JSON object", file=stream)
        return EXIT_INVALID
    raw.setdefault("kind", command)
    if seed is not None:
        raw["seed"] = seed
    if threads is not None:
        raw["threads"] = threads
    try:
        cfg = parse_config(raw)
    except ValidationError as exc:
        print("error: invalid config\n" + format_validation(exc), file=stream)
        return EXIT_INVALID
    if cfg.kind != command:
        print(f"error: config kind {cfg.kind!r} does not match command {command!r}", file=stream)
        return EXIT_INVALID
    target = Path(out or cfg.out or Path("runs") / command)
    run = Run(target)
    try:
        RUNNERS[command](cfg, run)
    except ConvergenceError as exc:
        print(f"error: no convergence: {exc}", file=stream)
        return EXIT_NONCONVERGENCE
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_INVALID
    passed = all(run.checks.values())
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "backend": _backend.NAME,
        "artifacts": {name: sha256_file(target / name) for name in sorted(set(run.artifacts))},
        "checks": run.checks,
        "pass": passed,
    }
    with open(target / "manifest.json", "w") as fh:
        json.dump(_plain(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    status = "pass" if passed else "FAIL"
    print(f"{command}: {status} ({', '.join(f'{k}={v}' for k, v in run.checks.items())}) -> {target}", file=stream)
    if check and not passed:
        return EXIT_ASSERT
    return EXIT_OK


def report(directory: str, stream=None) -> int:
    """Summarize every ``manifest.json`` under ``directory``."""
    stream = sys.stdout if stream is None else stream
    root = Path(directory)
    paths = sorted(root.rglob("manifest.json")) if root.is_dir() else []
    rows, broken = [], []
    for p in paths:
        try:
            m = json.loads(p.read_text())
            rows.append({"run": str(p.parent.relative_to(root)) or ".", "command": m["command"],
                         "pass": bool(m["pass"]), "checks": m.get("checks", {})})
        except (OSError, ValueError, KeyError) as exc:
            broken.append({"path": str(p), "error": str(exc)})
    if not rows:
        print(f"error: no readable manifests under {directory}", file=sys.stderr)
        for b in broken:
            print(f"  unreadable: {b['path']}: {b['error']}", file=sys.stderr)
        return EXIT_INVALID
    ok = sum(r["pass"] for r in rows)
    summary = {"total": len(rows), "passed": ok, "runs": rows, "unreadable": broken}
    with open(root / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    width = max(len(r["run"]) for r in rows)
    for r in rows:
        print(f"{r['run']:<{width}}  {r['command']:<14}  {'pass' if r['pass'] else 'FAIL'}", file=stream)
    for b in broken:
        print(f"{b['path']}: unreadable ({b['error']})", file=stream)
    print(f"{ok}/{len(rows)} pass", file=stream)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="llt-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--assert", dest="check", action="store_true")
    p = sub.add_parser("report")
    p.add_argument("directory")
    args = parser.parse_args(argv)
    if args.command == "report":
        return report(args.directory)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_INVALID
    return execute(args.command, args.config, args.out, args.seed, args.threads, args.check)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

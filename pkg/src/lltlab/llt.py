"""Monte Carlo checks of local limit statements and their side conditions.

A local limit theorem says ``B_n P(c - u <= S_n <= d - u)`` approaches the
measure of ``[c, d]`` times ``h_L(u / B_n)``, uniformly in the shift ``u``.
Lebesgue measure is replaced by ``h`` times the lattice point count when the
summands live on a lattice of span ``h``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .charfn import effective_a, marginal_moduli_sq
from .kernel import ChainModel, Functional, Lattice, TrajectoryBatch, simulate_partial_sums
from .stable import (NormalizerSchedule, StableLaw, TailModel, fit_stable_scale, mean_abs_normalizer,
                     stable_density, variance_normalizer)

GAUSSIAN_METHODS = ("variance", "c_sqrt_n", "mean_abs")
STABLE_METHODS = ("tail_solve",)
MIN_REPLICAS = 1000
WILSON_Z = 1.959963984540054
GAUSSIAN = StableLaw(2.0, 1.0 / math.sqrt(2.0))


def shift_grid(reach: float = 10.0, points: int = 41, lattice: Lattice | None = None,
               offset: float = 0.0) -> np.ndarray:
    """Equally spaced shifts over ``|u| <= reach``; snapped to the lattice if given."""
    u = np.linspace(-reach, reach, points)
    if lattice is not None:
        u = offset + lattice.span * np.round((u - offset) / lattice.span)
        u = np.unique(u)
    return u


def interval_prob(batch: TrajectoryBatch, c: float, d: float, u: float) -> tuple[float, float]:
    """Fraction of replicas with ``c - u <= S_n <= d - u`` and its binomial stderr."""
    s = batch.sums
    if s.size == 0:
        raise ValueError("empty batch")
    hits = np.count_nonzero((s >= c - u) & (s <= d - u))
    p = hits / s.size
    return p, math.sqrt(p * (1.0 - p) / s.size)


def lattice_count(c: float, d: float, u: float, span: float, offset: float = 0.0) -> int:
    """``#{k : c - u <= offset + k span <= d - u}`` in exact rational arithmetic."""
    h = Fraction(span)
    lo = (Fraction(c) - Fraction(u) - Fraction(offset)) / h
    hi = (Fraction(d) - Fraction(u) - Fraction(offset)) / h
    return max(0, math.floor(hi) - math.ceil(lo) + 1)


def convolution_pmf(values: Sequence[int], probs: Sequence[float], n: int) -> tuple[int, np.ndarray]:
    """Exact law of a sum of ``n`` i.i.d. integer steps: ``(min value, pmf)``."""
    values = np.asarray(values, dtype=np.int64)
    lo, hi = int(values.min()), int(values.max())
    step = np.zeros(hi - lo + 1)
    np.add.at(step, values - lo, np.asarray(probs, dtype=np.float64))
    pmf = np.array([1.0])
    for _ in range(n):
        pmf = np.convolve(pmf, step)
    return n * lo, pmf


@dataclass
class LLTExperiment:
    """One local-limit study: model, normalizers, limit law and shift grid.

    ``normalizer`` is a ready :class:`NormalizerSchedule` or one of
    ``"variance"`` / ``"mean_abs"``, estimated from each simulated batch.
    With ``fit_scale`` the scale of ``law`` is refitted at each ``n`` from the
    empirical characteristic function of ``S_n / B_n``.
    """

    model: ChainModel
    functional: Functional
    ns: list[int]
    replicas: int
    normalizer: NormalizerSchedule | str
    law: StableLaw = GAUSSIAN
    interval: tuple[float, float] = (-0.5, 0.5)
    shifts: np.ndarray | None = None
    lattice: Lattice | None = None
    seed: int = 0
    threads: int = 1
    tolerance: float = 0.10
    fit_scale: bool = False
    tail: TailModel | None = None

    def __post_init__(self):
        c, d = self.interval
        if self.lattice is None and not c < d:
            raise ValueError("interval needs c < d")
        if self.lattice is not None and not c <= d:
            raise ValueError("interval needs c <= d")
        if self.replicas < MIN_REPLICAS:
            raise ValueError(f"need at least {MIN_REPLICAS} replicas")
        if not self.ns:
            raise ValueError("empty n schedule")
        if self.shifts is None:
            self.shifts = shift_grid(lattice=self.lattice)
        self.shifts = np.asarray(self.shifts, dtype=np.float64)
        if self.shifts.size == 0:
            raise ValueError("empty shift grid")
        if self.lattice is not None and not Lattice(self.lattice.span).contains(self.shifts):
            raise ValueError("lattice experiments need shifts on the lattice")
        method = self.normalizer if isinstance(self.normalizer, str) else self.normalizer.method
        allowed = GAUSSIAN_METHODS if self.law.p == 2.0 else STABLE_METHODS
        if method not in allowed:
            raise ValueError(f"normalizer {method!r} not allowed for p = {self.law.p:g}; use {allowed}")
        if self.law.p < 1.0:
            raise ValueError("no centering is prescribed for p < 1; such experiments are not supported")
        if self.law.p == 1.0 and (self.tail is None or not self.tail.symmetric):
            raise ValueError("p = 1 experiments need a symmetric tail model")

    def normalizer_for(self, n: int, batch: TrajectoryBatch) -> float:
        if self.normalizer == "variance":
            return variance_normalizer([batch])[n]
        if self.normalizer == "mean_abs":
            return mean_abs_normalizer([batch])[n]
        return self.normalizer[n]


@dataclass
class LLTReport:
    rows: list[dict[str, Any]]
    lattice: bool
    tolerance: float
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return {"lattice": self.lattice, "tolerance": self.tolerance, "rows": self.rows,
                "pass": self.passed, **self.info}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "B_n", "sup_discrepancy", "stderr_max", "pass"])
            for r in self.rows:
                w.writerow([r["n"], repr(r["B_n"]), repr(r["sup_discrepancy"]), repr(r["stderr_max"]),
                            str(r["pass"]).lower()])


def _discrepancy(exp: LLTExperiment, lattice: bool) -> LLTReport:
    if lattice and exp.lattice is None:
        raise ValueError("lattice discrepancy needs lattice metadata")
    c, d = exp.interval
    rows = []
    for n in exp.ns:
        batch = simulate_partial_sums(exp.model, exp.functional, n, exp.replicas, exp.seed, threads=exp.threads)
        b_n = exp.normalizer_for(n, batch)
        law = exp.law
        fit = None
        if exp.fit_scale:
            fit = fit_stable_scale(batch.sums, b_n, law.p)
            law = StableLaw(law.p, fit["scale"], law.beta)
        dens = stable_density(law, exp.shifts / b_n)
        worst, worst_u, se_max = -1.0, None, 0.0
        # S_n sits on n * offset + span * Z
        s_offset = n * exp.lattice.offset if lattice else 0.0
        for u, h in zip(exp.shifts.tolist(), dens.tolist()):
            p, se = interval_prob(batch, c, d, u)
            if lattice:
                span = exp.lattice.span
                weight = span * lattice_count(c, d, u, span, s_offset)
            else:
                weight = d - c
            gap = abs(b_n * p - weight * h)
            se_max = max(se_max, b_n * se)
            if gap > worst:
                worst, worst_u = gap, u
        row = {"n": n, "B_n": b_n, "sup_discrepancy": worst, "argmax_u": worst_u, "stderr_max": se_max,
               "pass": worst < exp.tolerance, "scale": law.scale, "digest": batch.digest()}
        if fit is not None:
            row["fit"] = fit
        rows.append(row)
    return LLTReport(rows, lattice, exp.tolerance,
                     {"interval": [c, d], "shifts": exp.shifts.tolist(), "replicas": exp.replicas,
                      "seed": exp.seed, "law": exp.law.to_config()})


def nonlattice_discrepancy(exp: LLTExperiment) -> LLTReport:
    """Sup over shifts of ``|B_n P(c-u <= S_n <= d-u) - (d-c) h_L(u/B_n)|``."""
    return _discrepancy(exp, lattice=False)


def lattice_discrepancy(exp: LLTExperiment) -> LLTReport:
    """As above with the weight ``h #{k : c-u <= kh <= d-u}``."""
    return _discrepancy(exp, lattice=True)


# -- condition probes ------------------------------------------------------------


def _deficit_sum(model: ChainModel, f: Functional, n: int, t) -> np.ndarray:
    return (1.0 - marginal_moduli_sq(model, f, n, t)).sum(axis=1)


def condition_A_probe(model: ChainModel, f: Functional, n: int, b_n: float, delta: float,
                      points: int = 64) -> dict[str, Any]:
    """``G(u) = (a^4/16) sum_k (1 - |f_k(u / B_n)|^2)`` on ``1 <= u <= delta B_n``.

    Also returns the ``a^2/16`` variant and a log-log least-squares fit
    ``G(u) ~ C u^q``; a fitted ``q > 0`` with ``C > 0`` makes ``exp(-G)``
    integrable.  A curve that vanishes identically is reported unverifiable.
    """
    a = effective_a(model)
    top = delta * b_n
    if top <= 1.0:
        raise ValueError("need delta * B_n > 1")
    u = np.geomspace(1.0, top, points)
    deficit = _deficit_sum(model, f, n, u / b_n)
    curve = (a**4 / 16.0) * deficit
    out = {"u": u, "curve": curve, "curve_a2": (a**2 / 16.0) * deficit, "a": a, "n": n, "B_n": b_n}
    if np.all(curve <= 0):
        out.update(verifiable=False, exponent=float("nan"), coefficient=0.0)
        return out
    keep = curve > 0
    q, logc = np.polyfit(np.log(u[keep]), np.log(curve[keep]), 1)
    out.update(verifiable=bool(q > 0), exponent=float(q), coefficient=float(math.exp(logc)),
               min_ratio_to_fit=float((curve[keep] / (math.exp(logc) * u[keep] ** q)).min()))
    return out


def condition_B_probe(model: ChainModel, f: Functional, u: float, eps: float, ns: Sequence[int],
                      b_ns: Sequence[float], points: int = 41) -> dict[str, Any]:
    """``min_{|t-u| <= eps} (a^4 / (16 ln B_n)) sum_k (1 - |f_k(t)|^2)`` per ``n``."""
    a = effective_a(model)
    t = np.linspace(u - eps, u + eps, points)
    mins = []
    for n, b in zip(ns, b_ns):
        if b <= 1.0:
            raise ValueError("B_n must exceed 1")
        mins.append(float((a**4 / (16.0 * math.log(b)) * _deficit_sum(model, f, n, t)).min()))
    return {"ns": list(ns), "B_n": list(b_ns), "min_values": mins, "exceeds_one": [m > 1.0 for m in mins],
            "nondecreasing": bool(np.all(np.diff(mins) >= 0)), "a": a}


# -- anti-clustering ---------------------------------------------------------------


def wilson_interval(hits: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = hits / trials
    den = 1.0 + z * z / trials
    mid = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    # the limits touch 0 and 1 exactly at the extremes; rounding must not move them
    lo = 0.0 if hits == 0 else max(0.0, mid - half)
    hi = 1.0 if hits == trials else min(1.0, mid + half)
    return lo, hi


def dj_clustering_check(model: ChainModel, f: Functional, xs: Sequence[float], ks: Sequence[int],
                        normalizers: NormalizerSchedule, replicas: int, seed: int, *, threads: int = 1,
                        min_events: int = 20, vanish: float = 0.1) -> dict[str, Any]:
    """Estimate ``P(|X_k| > x B_n | |X_1| > x B_n)`` over ``n`` in the schedule.

    One batch of paths of length ``max(ks)`` serves every ``(x, k, n)``.
    A series counts as decaying when the estimates never increase along ``n``
    and the last Wilson upper limit is below ``vanish``.  Too few
    conditioning events give a NaN estimate and a flag, not an error.
    """
    ks = sorted(set(int(k) for k in ks))
    if ks[0] < 2:
        raise ValueError("lags k must be >= 2")
    batch = simulate_partial_sums(model, f, ks[-1], replicas, seed, threads=threads, keep_steps=[1, *ks])
    first = np.abs(batch.increments[1])
    rows, series = [], []
    for x in xs:
        for k in ks:
            later = np.abs(batch.increments[k])
            ests, uppers = [], []
            for n, b in zip(normalizers.ns.tolist(), normalizers.values.tolist()):
                level = x * b
                cond = first > level
                trials = int(np.count_nonzero(cond))
                hits = int(np.count_nonzero(cond & (later > level)))
                enough = trials >= min_events
                est = hits / trials if enough else float("nan")
                lo, hi = wilson_interval(hits, trials)
                rows.append({"x": x, "k": k, "n": n, "B_n": b, "events": trials, "hits": hits,
                             "estimate": est, "wilson_low": lo, "wilson_high": hi, "insufficient": not enough})
                ests.append(est)
                uppers.append(hi)
            finite = [e for e in ests if not math.isnan(e)]
            monotone = all(b <= a for a, b in zip(finite, finite[1:]))
            series.append({"x": x, "k": k, "estimates": ests, "monotone": monotone,
                           "decaying": bool(monotone and uppers[-1] < vanish and len(finite) == len(ests))})
    return {"rows": rows, "series": series, "decaying": all(s["decaying"] for s in series),
            "replicas": replicas, "seed": seed}


def convolution_cross_check(model: ChainModel, f: Functional, ns: Sequence[int], replicas: int, seed: int,
                            interval: tuple[float, float] = (0.0, 0.0), shifts: Sequence[float] = (0.0,),
                            threads: int = 1) -> dict[str, Any]:
    """Compare ``interval_prob`` with the exact convolution law of i.i.d. integer steps.

    Returns the largest ``|estimate - exact| / stderr`` over ``n`` and shifts
    (the stderr uses the exact probability, so it is positive unless the
    probability is 0 or 1, where the estimate must match exactly).
    """
    model._need_finite()
    rows = model.kernels[0].rows
    if not model.homogeneous or np.abs(rows - model.initial[None, :]).max() > 0:
        raise ValueError("convolution oracle needs i.i.d. steps")
    g = f.g(1)
    if not np.array_equal(g, np.round(g)):
        raise ValueError("convolution oracle needs integer values")
    c, d = interval
    worst, out = 0.0, []
    for n in ns:
        lo, pmf = convolution_pmf(g.astype(np.int64), model.initial, n)
        support = lo + np.arange(pmf.size)
        batch = simulate_partial_sums(model, f, n, replicas, seed, threads=threads)
        for u in shifts:
            exact = float(pmf[(support >= c - u) & (support <= d - u)].sum())
            est, _ = interval_prob(batch, c, d, u)
            se = math.sqrt(exact * (1.0 - exact) / replicas)
            z = abs(est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)
            worst = max(worst, z)
            out.append({"n": n, "u": u, "exact": exact, "estimate": est, "z": z})
    return {"rows": out, "max_z": worst, "pass": worst <= 3.0}

"""Markov chain models, functionals and seeded partial-sum simulation.

Finite chains carry exact transition matrices and marginals.  Continuous
models (the lazy uniform resampler of Example 1, the Gauss continued-fraction
chain, i.i.d. heavy-tailed draws) can only be sampled.

Step indexing follows the usual convention: ``xi_1`` has law ``initial``,
kernel ``Q_k`` moves ``xi_{k-1}`` to ``xi_k`` for ``k >= 2`` and
``X_k = g_k(xi_k)``.  Where an operator needs ``Q_1`` (the transfer-operator
checks), a virtual ``xi_0`` independent of ``xi_1`` is used: ``Q_1(x, .) =
P_1`` and ``P_0 = P_1``.  This never changes the lower psi-mixing constant.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np

from . import _backend
from .stable import TailModel, tail_transform

ROW_TOL = 1e-12
CHUNK = 2048
DEFAULT_SWEEP = 64

FINITE = "finite"
LAZY_UNIFORM = "lazy_uniform"
GAUSS = "gauss"
IID_TAIL = "iid_tail"


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    """Row-stochastic matrix ``rows[x, y] = Q(x, {y})``."""

    rows: np.ndarray
    step_index: int | None = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1] or rows.shape[0] == 0:
            raise ValueError(f"kernel must be a non-empty square matrix, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)) or rows.min() < 0.0:
            raise ValueError("kernel entries must be finite and non-negative")
        err = np.abs(rows.sum(axis=1) - 1.0).max()
        if err > ROW_TOL:
            raise ValueError(f"kernel rows must sum to 1 (max error {err:.3g})")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def size(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class Lattice:
    """Values lie in ``{offset + m * span}``."""

    span: float
    offset: float = 0.0

    def __post_init__(self):
        if not self.span > 0:
            raise ValueError("lattice span must be positive")

    def contains(self, values: np.ndarray, tol: float = 1e-12) -> bool:
        q = (np.asarray(values, dtype=np.float64) - self.offset) / self.span
        return bool(np.all(np.abs(q - np.round(q)) <= tol))


@dataclass(eq=False)
class ChainModel:
    """A Markov chain: finite with exact kernels, or continuous and sample-only."""

    kind: str
    config: dict[str, Any]
    initial: np.ndarray | None = None
    kernels: tuple[FiniteKernel, ...] = ()
    labels: tuple = ()
    params: dict[str, Any] = field(default_factory=dict)
    truncation_mass: float = 0.0

    def __post_init__(self):
        if self.kind == FINITE:
            init = np.array(self.initial, dtype=np.float64)
            if init.ndim != 1 or init.min() < 0 or abs(init.sum() - 1.0) > ROW_TOL:
                raise ValueError("initial law must be a probability vector")
            if not self.kernels:
                raise ValueError("finite model needs at least one kernel")
            sizes = {k.size for k in self.kernels}
            if sizes != {init.size}:
                raise ValueError(f"kernel sizes {sorted(sizes)} do not match initial law of size {init.size}")
            init.setflags(write=False)
            self.initial = init
            if not self.labels:
                self.labels = tuple(range(1, init.size + 1))
        elif self.kind not in (LAZY_UNIFORM, GAUSS, IID_TAIL):
            raise ValueError(f"unknown model kind {self.kind!r}")

    # -- structure --------------------------------------------------------
    @property
    def is_finite(self) -> bool:
        return self.kind == FINITE

    @property
    def n_states(self) -> int:
        self._need_finite()
        return self.initial.size

    @property
    def homogeneous(self) -> bool:
        return self.kind != FINITE or len(self.kernels) == 1

    @property
    def horizon(self) -> int | None:
        """Last step with a defined kernel (None for homogeneous chains)."""
        if self.kind == FINITE and len(self.kernels) > 1:
            return len(self.kernels) + 1
        return None

    def _need_finite(self):
        if self.kind != FINITE:
            raise TypeError(f"operation needs a finite model, got {self.kind!r}")

    def kernel(self, k: int) -> np.ndarray:
        """Transition matrix into step ``k`` (``k = 1`` is the virtual independent step)."""
        self._need_finite()
        if k == 1:
            return np.tile(self.initial, (self.n_states, 1))
        if k < 1:
            raise ValueError(f"step must be >= 1, got {k}")
        if self.homogeneous:
            return self.kernels[0].rows
        if k > self.horizon:
            raise ValueError(f"step {k} beyond the model horizon {self.horizon}")
        return self.kernels[k - 2].rows

    def marginals(self, n: int) -> np.ndarray:
        """Rows ``P_1 .. P_n``."""
        self._need_finite()
        if n < 1:
            raise ValueError("n must be >= 1")
        cache = self.__dict__.setdefault("_marg", [self.initial])
        if self.horizon is not None and n > self.horizon:
            raise ValueError(f"step {n} beyond the model horizon {self.horizon}")
        while len(cache) < n:
            k = len(cache) + 1
            if self.homogeneous and self.is_stationary:
                cache.append(self.initial)
            else:
                cache.append(cache[-1] @ self.kernel(k))
        return np.array(cache[:n])

    def marginal(self, k: int) -> np.ndarray:
        if k == 0:
            return self.initial
        return self.marginals(k)[k - 1]

    @cached_property
    def stationary_law(self) -> np.ndarray:
        """Left Perron vector of the (homogeneous) kernel."""
        self._need_finite()
        if not self.homogeneous:
            raise TypeError("stationary law needs a homogeneous chain")
        q = self.kernels[0].rows
        size = q.shape[0]
        # solve pi (Q - I) = 0 with sum(pi) = 1 by least squares
        a = np.vstack([(q - np.eye(size)).T, np.ones(size)])
        b = np.zeros(size + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(a, b, rcond=None)[0]
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    @cached_property
    def is_stationary(self) -> bool:
        if self.kind != FINITE:
            return self.kind in (LAZY_UNIFORM, GAUSS, IID_TAIL)
        if not self.homogeneous:
            return False
        return bool(np.abs(self.initial @ self.kernels[0].rows - self.initial).max() <= ROW_TOL)

    @property
    def stationarity_defect(self) -> float:
        self._need_finite()
        return float(np.abs(self.initial @ self.kernel(2) - self.initial).max())

    def sweep_steps(self) -> range:
        """Steps ``k >= 2`` over which infima over the chain are taken."""
        if self.horizon is not None:
            return range(2, self.horizon + 1)
        if self.is_stationary:
            return range(2, 3)
        return range(2, DEFAULT_SWEEP + 1)

    @cached_property
    def lower_psi_floor(self) -> float:
        """Largest ``a`` with ``Q_k(x, A) >= a P_k(A)``.

        Finite chains: the minimum over swept steps of ``Q_k(x, y) / P_k(y)``
        over ``P_{k-1}(x) > 0`` and ``P_k(y) > 0``.  Continuous chains report
        the known constant.
        """
        if self.kind == LAZY_UNIFORM:
            return 1.0 - self.params["stay"]
        if self.kind == GAUSS:
            return 0.2
        if self.kind == IID_TAIL:
            return 1.0
        steps = self.sweep_steps()
        marg = self.marginals(steps[-1])
        a = 1.0
        for k in steps:
            prev, cur = marg[k - 2], marg[k - 1]
            rows = self.kernel(k)[prev > 0][:, cur > 0]
            a = min(a, float((rows / cur[cur > 0]).min()))
        return a

    def to_config(self) -> dict[str, Any]:
        return dict(self.config)


@dataclass(frozen=True, eq=False)
class Functional:
    """Per-step maps ``g_k`` turning states into summands.

    Finite models use value vectors (one for a homogeneous functional, or one
    per step).  Continuous models use a named formula; ``shift`` is subtracted
    from every formula.
    """

    values: tuple[np.ndarray, ...] = ()
    formula: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    lattice: Lattice | None = None

    FORMULAS = {
        LAZY_UNIFORM: ("identity", "tail", "bin"),
        GAUSS: ("digit", "indicator"),
        IID_TAIL: ("identity",),
    }

    def __post_init__(self):
        if bool(self.values) == (self.formula is not None):
            raise ValueError("give either value vectors or a formula")
        if self.values:
            vals = []
            for v in self.values:
                v = np.array(v, dtype=np.float64)
                if v.ndim != 1 or not np.all(np.isfinite(v)):
                    raise ValueError("functional values must be finite 1-d vectors")
                if self.lattice is not None and not self.lattice.contains(v):
                    raise ValueError("functional values are off the declared lattice")
                v.setflags(write=False)
                vals.append(v)
            object.__setattr__(self, "values", tuple(vals))

    @classmethod
    def from_values(cls, values, lattice: Lattice | None = None) -> "Functional":
        return cls(values=(np.asarray(values, dtype=np.float64),), lattice=lattice)

    @classmethod
    def per_step(cls, values: Sequence, lattice: Lattice | None = None) -> "Functional":
        return cls(values=tuple(np.asarray(v, dtype=np.float64) for v in values), lattice=lattice)

    @classmethod
    def named(cls, formula: str, lattice: Lattice | None = None, **params) -> "Functional":
        return cls(formula=formula, params=params, lattice=lattice)

    def g(self, k: int) -> np.ndarray:
        """Value vector of step ``k`` (finite functionals)."""
        if not self.values:
            raise TypeError("named functionals have no value vector")
        if len(self.values) == 1:
            return self.values[0]
        if not 1 <= k <= len(self.values):
            raise ValueError(f"functional defined for steps 1..{len(self.values)}, asked {k}")
        return self.values[k - 1]

    def check(self, model: ChainModel, n: int | None = None) -> None:
        if model.is_finite:
            if not self.values:
                raise ValueError("finite models need a value-vector functional")
            bad = {v.size for v in self.values} - {model.n_states}
            if bad:
                raise ValueError(f"functional has {sorted(bad)} entries, model has {model.n_states} states")
            if n is not None and len(self.values) > 1 and n > len(self.values):
                raise ValueError(f"functional covers {len(self.values)} steps, need {n}")
        else:
            allowed = self.FORMULAS[model.kind]
            if self.formula not in allowed:
                raise ValueError(f"model {model.kind!r} supports formulas {allowed}, got {self.formula!r}")
            if self.formula == "tail":
                TailModel(p=self.params["p"], x0=self.params.get("x0", 1.0))

    def centered(self, model: ChainModel, n: int) -> list[np.ndarray]:
        """``g_k - E g_k(xi_k)`` for ``k = 1..n`` (finite)."""
        marg = model.marginals(n)
        return [self.g(k) - marg[k - 1] @ self.g(k) for k in range(1, n + 1)]

    def apply(self, model: ChainModel, paths: np.ndarray) -> np.ndarray:
        """Map a ``(replicas, n)`` state array to summands."""
        if model.is_finite:
            if len(self.values) == 1:
                return self.values[0][paths]
            table = np.stack(self.values[: paths.shape[1]])
            return table[np.arange(paths.shape[1])[None, :], paths]
        shift = float(self.params.get("shift", 0.0))
        f = self.formula
        if f in ("identity", "digit"):
            x = paths.astype(np.float64)
        elif f == "indicator":
            x = (paths == self.params["state"]).astype(np.float64)
        elif f == "bin":
            x = np.floor(paths * self.params["bins"])
        elif f == "tail":
            tail = TailModel(p=self.params["p"], x0=self.params.get("x0", 1.0))
            # symmetric quantile of a uniform state: lower half negative
            below = paths < 0.5
            u_mag = np.where(below, 2.0 * paths, 2.0 * (1.0 - paths))
            x = np.where(below, -1.0, 1.0) * tail.magnitude(u_mag)
        else:  # pragma: no cover - guarded by check()
            raise ValueError(f)
        return x - shift if shift else x

    def to_config(self) -> dict[str, Any]:
        cfg: dict[str, Any]
        if self.values:
            cfg = {"kind": "values", "values": [v.tolist() for v in self.values]}
        else:
            cfg = {"kind": self.formula, **self.params}
        if self.lattice is not None:
            cfg["lattice"] = {"span": self.lattice.span, "offset": self.lattice.offset}
        return cfg


@dataclass(eq=False)
class TrajectoryBatch:
    """``replicas`` independent realizations of ``S_n``."""

    n: int
    replicas: int
    sums: np.ndarray
    master_seed: int
    model_digest: str
    increments: dict[int, np.ndarray] = field(default_factory=dict)
    backend: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("replica,s_n\n")
            for r, s in enumerate(self.sums.tolist()):
                fh.write(f"{r},{s!r}\n")

    def digest(self) -> str:
        return hashlib.sha256(self.sums.tobytes()).hexdigest()


# -- builders ------------------------------------------------------------


def build_finite(initial, kernels, labels=None) -> ChainModel:
    """Generic finite chain; ``kernels`` is one matrix or a list (steps 2, 3, ...)."""
    mats = np.asarray(kernels, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None]
    ks = tuple(FiniteKernel(m, step_index=None if len(mats) == 1 else i + 2) for i, m in enumerate(mats))
    cfg = {"kind": "finite", "initial": np.asarray(initial, dtype=float).tolist(), "kernels": mats.tolist()}
    if labels is not None:
        cfg["labels"] = list(labels)
    return ChainModel(FINITE, cfg, initial=np.asarray(initial, dtype=float), kernels=ks,
                      labels=tuple(labels) if labels is not None else ())


def build_two_state(stay: float = 0.6) -> ChainModel:
    """Symmetric two-state chain started from its stationary law (1/2, 1/2)."""
    q = [[stay, 1.0 - stay], [1.0 - stay, stay]]
    m = build_finite([0.5, 0.5], q, labels=(-1, 1))
    m.config = {"kind": "two_state", "stay": stay}
    return m


def build_iid(probs) -> ChainModel:
    """Independent steps: every row of the kernel equals ``probs``."""
    probs = np.asarray(probs, dtype=np.float64)
    m = build_finite(probs, np.tile(probs, (probs.size, 1)))
    m.config = {"kind": "iid", "probs": probs.tolist()}
    return m


def build_lazy_uniform(stay: float) -> ChainModel:
    """Stay put with probability ``stay``, else redraw uniformly on [0, 1]."""
    if not 0.0 <= stay <= 1.0:
        raise ValueError("stay probability must lie in [0, 1]")
    return ChainModel(LAZY_UNIFORM, {"kind": "lazy_uniform", "stay": stay}, params={"stay": float(stay)})


def build_example1() -> ChainModel:
    m = build_lazy_uniform(0.5)
    m.config = {"kind": "example1"}
    return m


def example3_parameters(truncation: int) -> tuple[np.ndarray, np.ndarray]:
    """``pi_j = 2^-j`` and ``eps_i = 2^-(2+i)`` for ``j, i = 1..truncation``."""
    j = np.arange(1, truncation + 1, dtype=np.float64)
    return 2.0**-j, 2.0 ** -(2.0 + j)


def build_gibbs_chain(pi, eps, truncation: int, initial: str = "pi") -> ChainModel:
    """``p(i, j) = pi_j + (delta_ij - delta_{i+1,j}) eps_i`` truncated to ``{1..N}``.

    Mass of ``pi`` beyond ``N`` (or missing from a short vector) is folded into
    state ``N``; the perturbation of row ``N`` that would leave the range folds
    back into ``N``, so row ``N`` equals the folded ``pi``.  ``initial`` is
    ``"pi"`` (the canonical construction) or ``"stationary"``.
    """
    n = int(truncation)
    if n < 2:
        raise ValueError("truncation must be at least 2")
    pi = np.asarray(pi, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if pi.size < n or eps.size < n - 1:
        raise ValueError("pi needs N entries and eps at least N - 1")
    if pi.min() <= 0 or pi.sum() > 1.0 + ROW_TOL:
        raise ValueError("pi must be positive with total mass <= 1")
    upper = np.minimum(1.0 - pi[: n - 1], pi[1:n])
    if eps[: n - 1].min() < 0 or np.any(eps[: n - 1] > upper + ROW_TOL):
        raise ValueError("need 0 <= eps_i <= min(1 - pi_i, pi_{i+1})")
    folded = pi[:n].copy()
    tail_mass = max(0.0, 1.0 - folded.sum())
    folded[-1] += tail_mass
    rows = np.tile(folded, (n, 1))
    for i in range(n - 1):
        rows[i, i] += eps[i]
        rows[i, i + 1] -= eps[i]
    if rows.min() < 0:
        raise ValueError("kernel has negative entries")
    rows /= rows.sum(axis=1, keepdims=True)
    cfg = {"kind": "gibbs", "pi": pi[:n].tolist(), "eps": eps[: n - 1].tolist(),
           "truncation": n, "initial": initial}
    model = ChainModel(FINITE, cfg, initial=folded, kernels=(FiniteKernel(rows),),
                       labels=tuple(range(1, n + 1)), truncation_mass=tail_mass)
    if initial == "stationary":
        model = ChainModel(FINITE, cfg, initial=model.stationary_law, kernels=model.kernels,
                           labels=model.labels, truncation_mass=tail_mass)
    elif initial != "pi":
        raise ValueError("initial must be 'pi' or 'stationary'")
    return model


def build_gauss_chain(burn_in: int = 0) -> ChainModel:
    """Continued-fraction digits of a Gauss-distributed point."""
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    return ChainModel(GAUSS, {"kind": "gauss", "burn_in": int(burn_in)}, params={"burn_in": int(burn_in)})


def build_iid_tail(tail: TailModel) -> ChainModel:
    """I.i.d. two-sided Pareto-type increments (recentered when ``p > 1``)."""
    return ChainModel(IID_TAIL, {"kind": "iid_tail", **tail.to_config()}, params={"tail": tail})


# -- simulation ------------------------------------------------------------


def model_digest(model: ChainModel, f: Functional, n: int) -> str:
    blob = json.dumps({"model": model.to_config(), "functional": f.to_config(), "n": n},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _path_generator(model: ChainModel, n: int, seed: int, kern) -> Callable[[int, int], np.ndarray]:
    if model.kind == FINITE:
        cum_init = np.minimum(np.cumsum(model.initial), 1.0)
        cum_init[-1] = 1.0
        steps = range(2, n + 1)
        if model.homogeneous:
            mats = [model.kernels[0].rows]
            index = np.zeros(n, dtype=np.int32)
        else:
            mats = [model.kernel(k) for k in steps]
            index = np.concatenate([[0], np.arange(len(mats))]).astype(np.int32)
        cum = np.minimum(np.cumsum(np.array(mats), axis=2), 1.0)
        cum[:, :, -1] = 1.0
        cum = np.ascontiguousarray(cum)
        return lambda first, count: kern.finite_paths(seed, first, count, n, cum_init, cum, index)
    if model.kind == LAZY_UNIFORM:
        stay = model.params["stay"]
        return lambda first, count: kern.lazy_paths(seed, first, count, n, stay)
    if model.kind == GAUSS:
        burn = model.params["burn_in"]
        return lambda first, count: kern.gauss_digits(seed, first, count, n, burn)
    tail = model.params["tail"]

    def tail_paths(first, count):
        return tail_transform(tail, kern.unit_block(seed, first, count, n))

    return tail_paths


def simulate_paths(model: ChainModel, n: int, replicas: int, seed: int, *, first: int = 0,
                   backend: str | None = None) -> np.ndarray:
    """Raw state paths ``(replicas, n)`` for replicas ``first ..``."""
    kern = _backend.get(backend)
    return _path_generator(model, n, seed, kern)(first, replicas)


def simulate_partial_sums(model: ChainModel, f: Functional, n: int, replicas: int, seed: int, *,
                          threads: int = 1, keep_steps: Sequence[int] | None = None,
                          backend: str | None = None) -> TrajectoryBatch:
    """Simulate ``replicas`` copies of ``S_n = X_1 + ... + X_n``.

    Replica ``r`` draws only from the stream keyed by ``(seed, r)``; replicas
    are processed in fixed chunks, so ``threads`` never changes the result.
    ``keep_steps`` (1-based) retains those increment columns.
    """
    if n < 1 or replicas < 1:
        raise ValueError("need n >= 1 and replicas >= 1")
    f.check(model, n)
    if model.horizon is not None and n > model.horizon:
        raise ValueError(f"n = {n} exceeds the model horizon {model.horizon}")
    kern = _backend.get(backend)
    gen = _path_generator(model, n, seed, kern)
    keep = sorted(set(keep_steps or ()))
    if keep and (keep[0] < 1 or keep[-1] > n):
        raise ValueError("keep_steps must lie in 1..n")
    sums = np.empty(replicas, dtype=np.float64)
    kept = {k: np.empty(replicas, dtype=np.float64) for k in keep}

    def work(first: int) -> None:
        count = min(CHUNK, replicas - first)
        x = f.apply(model, gen(first, count))
        sums[first : first + count] = x.sum(axis=1)
        for k in keep:
            kept[k][first : first + count] = x[:, k - 1]

    starts = range(0, replicas, CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return TrajectoryBatch(n=n, replicas=replicas, sums=sums, master_seed=int(seed),
                           model_digest=model_digest(model, f, n), increments=kept,
                           backend=kern.__name__.rsplit(".", 1)[-1].lstrip("_"))


# -- exact linear algebra -----------------------------------------------------


def k_step_kernel(model: ChainModel, m: int, k: int) -> FiniteKernel:
    """``Q_{m+1} ... Q_{m+k}``: law of ``xi_{m+k}`` given ``xi_m``."""
    model._need_finite()
    if m < 1 or k < 1:
        raise ValueError("need m >= 1 and k >= 1")
    prod = model.kernel(m + 1)
    for j in range(m + 2, m + k + 1):
        prod = prod @ model.kernel(j)
    # renormalize accumulated rounding; rows remain stochastic within 1e-10
    return FiniteKernel(prod / prod.sum(axis=1, keepdims=True))


def long_run_variance(model: ChainModel, f: Functional, tol: float = 1e-12, max_lag: int = 100_000) -> float:
    """``c^2 = Var X_0 + 2 sum_k Cov(X_0, X_k)`` for a stationary chain.

    Finite homogeneous chains are evaluated under their stationary law with
    matrix powers until the covariance increment drops below ``tol``.  The lazy
    uniform resampler has ``Cov(X_0, X_k) = stay^k Var X_0`` exactly.
    """
    if model.lower_psi_floor <= 0.0:
        raise ValueError("lower psi floor is 0: no guaranteed decay of covariances")
    if model.kind == LAZY_UNIFORM:
        f.check(model)
        s = model.params["stay"]
        return _uniform_formula_variance(f) * (1.0 + s) / (1.0 - s)
    model._need_finite()
    if not model.homogeneous:
        raise TypeError("long-run variance needs a homogeneous chain")
    f.check(model)
    if len(f.values) != 1:
        raise TypeError("long-run variance needs a homogeneous functional")
    pi = model.initial if model.is_stationary else model.stationary_law
    q = model.kernels[0].rows
    g = f.values[0] - pi @ f.values[0]
    weighted = pi * g
    total = float(weighted @ g)
    v = g
    for _ in range(max_lag):
        v = q @ v
        cov = float(weighted @ v)
        total += 2.0 * cov
        if abs(cov) < tol:
            return total
    raise ArithmeticError("covariance series did not converge")


def _uniform_formula_variance(f: Functional) -> float:
    if f.formula == "identity":
        return 1.0 / 12.0
    if f.formula == "bin":
        b = int(f.params["bins"])
        return (b * b - 1) / 12.0
    raise ValueError(f"no finite variance available for formula {f.formula!r}")


def empirical_lag_ratios(model: ChainModel, categories: int, replicas: int, seed: int, *,
                         path_length: int = 16, lag: int = 1, min_count: int = 1,
                         backend: str | None = None) -> dict[str, Any]:
    """Estimate ``P(A n B) / (P(A) P(B))`` over one-step cylinder events.

    Events are ``{xi_m = d}`` for Gauss digits ``d = 1..categories`` or
    ``{xi_m in bin d}`` (equal-width bins) for the lazy uniform chain.  Pairs
    ``(xi_m, xi_{m+lag})`` are pooled over ``m``, which is valid because both
    chains are stationary.
    """
    if model.kind not in (GAUSS, LAZY_UNIFORM):
        raise TypeError("cylinder diagnostic covers the Gauss and lazy uniform chains")
    if path_length <= lag:
        raise ValueError("path_length must exceed lag")
    paths = simulate_paths(model, path_length, replicas, seed, backend=backend)
    if model.kind == GAUSS:
        cats = np.where(paths <= categories, paths - 1, categories)
    else:
        cats = np.minimum((paths * categories).astype(np.int64), categories - 1)
    width = categories + (1 if model.kind == GAUSS else 0)
    a = cats[:, :-lag].ravel()
    b = cats[:, lag:].ravel()
    joint = np.bincount(a * width + b, minlength=width * width).reshape(width, width)[:categories, :categories]
    marg_a = np.bincount(a, minlength=width)[:categories]
    marg_b = np.bincount(b, minlength=width)[:categories]
    total = a.size
    ratio = joint * total / np.outer(marg_a, marg_b).astype(np.float64)
    usable = joint >= min_count
    return {
        "min_ratio": float(ratio[usable].min()),
        "max_ratio": float(ratio[usable].max()),
        "ratios": ratio,
        "counts": joint,
        "pairs": total,
    }


def batch_means_variance(batch_sums: np.ndarray, n: int) -> float:
    """Var(S_n) / n from independent replicas."""
    return float(np.var(batch_sums, ddof=1) / n)


def exact_gauss_cylinder(a: int, b: int) -> float:
    """Gauss measure of ``{x_1 = a, x_2 = b}``."""
    lo, hi = sorted((1.0 / (a + 1.0 / b), 1.0 / (a + 1.0 / (b + 1))))
    return math.log2((1.0 + hi) / (1.0 + lo))

"""Exact dependence coefficients of finite Markov chains.

For a pair law ``J(x, y) = P(xi_m = x, xi_{m+k} = y)`` with marginals ``r``
and ``c`` every event ratio ``P(A n B) / (P(A) P(B))`` is a convex
combination of atom ratios ``J(x, y) / (r(x) c(y))``, so the lower and upper
psi coefficients are atom extrema.  The phi coefficient is attained by a
single conditioning atom and the set of columns with positive deviation.
The maximal correlation is the top singular value of the standardized
deviation matrix.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .kernel import ChainModel, Functional, k_step_kernel

MASS_TOL = 1e-12
JACOBI_TOL = 1e-12
BRUTE_MAX = 12


@dataclass(frozen=True, eq=False)
class JointLaw:
    """Pair law restricted to positive-mass rows and columns."""

    matrix: np.ndarray

    def __post_init__(self):
        j = np.array(self.matrix, dtype=np.float64)
        if j.ndim != 2 or j.min() < 0:
            raise ValueError("joint law must be a non-negative matrix")
        if abs(j.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"joint law mass {j.sum()!r} is not 1")
        rows = j.sum(axis=1) > 0
        cols = j.sum(axis=0) > 0
        j = j[rows][:, cols]
        if j.size == 0:
            raise ValueError("joint law has no positive-mass atoms")
        object.__setattr__(self, "matrix", j)

    @property
    def r(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def c(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def ratios(self) -> np.ndarray:
        return self.matrix / np.outer(self.r, self.c)


def joint_law(model: ChainModel, m: int, k: int, marginal: np.ndarray | None = None) -> JointLaw:
    """``J = diag(P_m) Q_{m+1} ... Q_{m+k}``."""
    model._need_finite()
    p_m = model.marginal(m) if marginal is None else marginal
    return JointLaw(p_m[:, None] * k_step_kernel(model, m, k).rows)


def psi_prime(j: JointLaw) -> float:
    return float(j.ratios().min())


def psi_star(j: JointLaw) -> float:
    return float(j.ratios().max())


def phi(j: JointLaw) -> float:
    cond = j.matrix / j.r[:, None]
    return float(np.clip(cond - j.c[None, :], 0.0, None).sum(axis=1).max())


def psi(j: JointLaw) -> float:
    return max(psi_star(j) - 1.0, 1.0 - psi_prime(j))


def _tournament(cols: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Round-robin schedule: each round pairs every column at most once."""
    n = cols + cols % 2
    ring = list(range(n))
    rounds = []
    for _ in range(n - 1):
        ps = np.array(ring[: n // 2])
        qs = np.array(ring[n // 2 :][::-1])
        keep = (ps < cols) & (qs < cols)
        rounds.append((np.minimum(ps, qs)[keep], np.maximum(ps, qs)[keep]))
        ring = [ring[0]] + [ring[-1]] + ring[1:-1]
    return rounds


def jacobi_singular_values(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> np.ndarray:
    """Singular values by one-sided (Hestenes) Jacobi rotations, descending.

    Disjoint column pairs of a round-robin schedule are rotated together.
    """
    u = np.array(a, dtype=np.float64)
    if u.shape[0] < u.shape[1]:
        u = u.T.copy()
    cols = u.shape[1]
    rounds = _tournament(cols)
    for _ in range(max_sweeps):
        rotated = False
        for ps, qs in rounds:
            up, uq = u[:, ps], u[:, qs]
            alpha = (up * up).sum(axis=0)
            beta = (uq * uq).sum(axis=0)
            gamma = (up * uq).sum(axis=0)
            act = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not act.any():
                continue
            rotated = True
            g = np.where(act, gamma, 1.0)
            with np.errstate(over="ignore"):
                zeta = (beta - alpha) / (2.0 * g)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t = np.where(act, t, 0.0)
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            u[:, ps] = cs * up - sn * uq
            u[:, qs] = sn * up + cs * uq
        if not rotated:
            break
    return np.sort(np.sqrt((u * u).sum(axis=0)))[::-1]


def rho_max_correlation(j: JointLaw) -> float:
    """Top singular value of ``(J - r c^T) / sqrt(r c^T)``."""
    outer = np.outer(j.r, j.c)
    dev = (j.matrix - outer) / np.sqrt(outer)
    return float(min(1.0, jacobi_singular_values(dev)[0]))


def _subsets(size: int) -> np.ndarray:
    masks = np.arange(1, 2**size)
    return ((masks[:, None] >> np.arange(size)[None, :]) & 1).astype(np.float64)


def brute_force_extrema(j: JointLaw, block: int = 512) -> tuple[float, float, float]:
    """``(inf ratio, sup ratio, sup phi)`` over all event pairs of positive mass."""
    s1, s2 = j.matrix.shape
    if max(s1, s2) > BRUTE_MAX:
        raise ValueError(f"enumeration limited to {BRUTE_MAX} atoms per side, got {s1}x{s2}")
    a_sets, b_sets = _subsets(s1), _subsets(s2)
    pa, pb = a_sets @ j.r, b_sets @ j.c
    jb = j.matrix @ b_sets.T
    lo, hi, ph = np.inf, -np.inf, -np.inf
    for s in range(0, a_sets.shape[0], block):
        both = a_sets[s : s + block] @ jb
        ratio = both / np.outer(pa[s : s + block], pb)
        lo = min(lo, ratio.min())
        hi = max(hi, ratio.max())
        ph = max(ph, ((both - np.outer(pa[s : s + block], pb)) / pa[s : s + block, None]).max())
    return float(lo), float(hi), float(max(ph, 0.0))


# -- lag sweeps -----------------------------------------------------------------


def start_steps(model: ChainModel, k: int, extra: int = 0) -> range:
    """Starting steps ``m`` over which lag-``k`` coefficients are optimized."""
    if model.horizon is not None:
        return range(1, model.horizon - k + 1)
    if model.is_stationary:
        return range(1, 2)
    # once the marginal stops moving, later starts repeat earlier coefficients
    limit = len(model.sweep_steps()) + extra
    marg = model.marginals(limit + 1)
    moving = np.abs(np.diff(marg, axis=0)).max(axis=1) > 1e-15
    settled = int(np.flatnonzero(moving)[-1]) + 2 if moving.any() else 1
    return range(1, min(limit, settled) + 1)


@dataclass
class MixingReport:
    lags: list[int]
    psi_prime: list[float]
    psi_star: list[float]
    psi: list[float]
    phi: list[float]
    rho: list[float]
    a: float
    start_range: list[tuple[int, int]]
    checks: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-12

    @property
    def bound(self) -> list[float]:
        return [(1.0 - self.a) ** k for k in self.lags]

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {"lags": self.lags, "psi_prime": self.psi_prime, "psi_star": self.psi_star,
                "psi": self.psi, "phi": self.phi, "rho": self.rho, "a": self.a,
                "bound_1_minus_a_pow_k": self.bound, "start_range": self.start_range,
                "max_violation": self.checks, "pass": self.passed}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "psi_prime", "psi_star", "psi", "phi", "rho", "bound_1_minus_a_pow_k"])
            for row in zip(self.lags, self.psi_prime, self.psi_star, self.psi, self.phi, self.rho, self.bound):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def mixing_inequality_report(model: ChainModel, lags: Iterable[int], tol: float = 1e-12) -> MixingReport:
    """Lag coefficients (extrema over start steps) and every inequality check.

    ``checks`` holds the largest signed violation of each inequality; all
    must be ``<= tol``.
    """
    lags = sorted(set(int(k) for k in lags))
    if not lags or lags[0] < 1:
        raise ValueError("lags must be positive integers")
    longest = lags[-1]
    cols: dict[str, list[float]] = {k: [] for k in ("pp", "ps", "phi", "rho", "psi")}
    ranges = []
    # every lag needs the starts m + j reached by shorter lags for the product rule
    for k in range(1, longest + 1):
        starts = start_steps(model, k, extra=longest)
        if len(starts) == 0:
            raise ValueError(f"lag {k} exceeds the model horizon")
        laws = [joint_law(model, m, k) for m in starts]
        pp = min(psi_prime(j) for j in laws)
        ps = max(psi_star(j) for j in laws)
        cols["pp"].append(pp)
        cols["ps"].append(ps)
        cols["phi"].append(max(phi(j) for j in laws))
        cols["rho"].append(max(rho_max_correlation(j) for j in laws))
        cols["psi"].append(max(ps - 1.0, 1.0 - pp))
        ranges.append((starts[0], starts[-1]))
    a = model.lower_psi_floor
    pp = np.array(cols["pp"])
    dep = 1.0 - pp
    checks = {
        "rho_le_1_minus_psi_prime": float(np.max(np.array(cols["rho"]) - dep)),
        "phi_le_1_minus_psi_prime": float(np.max(np.array(cols["phi"]) - dep)),
        "psi_identity": float(np.max(np.abs(np.array(cols["psi"]) - np.maximum(np.array(cols["ps"]) - 1.0, dep)))),
        "phi_le_geometric": float(np.max(np.array(cols["phi"]) - (1.0 - a) ** np.arange(1, longest + 1))),
        "rho_le_geometric": float(np.max(np.array(cols["rho"]) - (1.0 - a) ** np.arange(1, longest + 1))),
    }
    prod = -np.inf
    for k in range(1, longest + 1):
        for m in range(1, longest + 1 - k):
            prod = max(prod, dep[k + m - 1] - dep[k - 1] * dep[m - 1])
    checks["product_rule"] = float(prod) if np.isfinite(prod) else 0.0
    idx = [k - 1 for k in lags]
    return MixingReport(lags=lags, psi_prime=[cols["pp"][i] for i in idx], psi_star=[cols["ps"][i] for i in idx],
                        psi=[cols["psi"][i] for i in idx], phi=[cols["phi"][i] for i in idx],
                        rho=[cols["rho"][i] for i in idx], a=a, start_range=[ranges[i] for i in idx],
                        checks=checks, tol=tol)


# -- variance sandwich -------------------------------------------------------------


def exact_variances(model: ChainModel, f: Functional, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """``sigma_n^2 = Var S_n`` and ``tau_n^2 = sum_j Var X_j`` for ``n = 1..n_max``.

    Uses ``sum_{i<j} Cov(X_i, X_j) = a_j . g_j`` with the row vector
    ``a_{j+1} = (a_j + P_j * g_j) Q_{j+1}`` (centered ``g_j``).
    """
    f.check(model, n_max)
    marg = model.marginals(n_max)
    acc = np.zeros(model.n_states)
    var = np.empty(n_max)
    cross = np.empty(n_max)
    for j in range(1, n_max + 1):
        p = marg[j - 1]
        g = f.g(j) - p @ f.g(j)
        var[j - 1] = p @ (g * g)
        cross[j - 1] = acc @ g
        if j < n_max:
            acc = (acc + p * g) @ model.kernel(j + 1)
    return np.cumsum(var) + 2.0 * np.cumsum(cross), np.cumsum(var)


def variance_ratio_check(model: ChainModel, f: Functional, ns: Sequence[int]) -> dict[str, Any]:
    """Check ``a/(2-a) <= sigma_n^2 / tau_n^2 <= (2-a)/a`` at each ``n``."""
    a = model.lower_psi_floor
    if a <= 0:
        raise ValueError("lower psi floor is 0")
    ns = sorted(set(int(n) for n in ns))
    sigma2, tau2 = exact_variances(model, f, ns[-1])
    lo, hi = a / (2.0 - a), (2.0 - a) / a
    rows = []
    for n in ns:
        s, t = float(sigma2[n - 1]), float(tau2[n - 1])
        ratio = s / t if t > 0 else float("nan")
        rows.append({"n": n, "sigma2": s, "tau2": t, "ratio": ratio,
                     "inside": bool(t > 0 and lo - 1e-12 <= ratio <= hi + 1e-12)})
    return {"a": a, "lower": lo, "upper": hi, "rows": rows, "pass": all(r["inside"] for r in rows)}

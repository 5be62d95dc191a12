"""Characteristic functions of partial sums through transfer matrices.

The step matrix ``T_k(u)[x, y] = Q_k(x, y) exp(i u g_k(y))`` turns products
into ``E exp(i u S_n)``.  On top of that this module evaluates the
factorization bound ``exp(-(a^4/16) sum_j (1 - |f_j(u)|^2))``, the two
transfer-operator estimates it rests on, and tail integrals of ``|E e^{itS_n}|``
that control local limit behaviour.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ._quad import simpson_pieces
from .kernel import ChainModel, Functional

INDEPENDENT_A = 1.0 - 1e-9
VIOLATION_TOL = 1e-10


def effective_a(model: ChainModel) -> float:
    """Lower psi floor, with exactly independent steps mapped to ``1 - 1e-9``.

    Independence satisfies the strict condition for every ``a < 1`` only.
    """
    a = model.lower_psi_floor
    if a <= 0:
        raise ValueError("lower psi floor is 0: bounds are vacuous")
    return min(a, INDEPENDENT_A)


def _grid(u) -> np.ndarray:
    return np.atleast_1d(np.asarray(u, dtype=np.float64))


def transfer_step(model: ChainModel, f: Functional, k: int, u: float) -> np.ndarray:
    """``Q_k(x, y) exp(i u g_k(y))`` (``k = 1``: the virtual independent step)."""
    return model.kernel(k) * np.exp(1j * u * f.g(k))[None, :]


def marginal_charfn(model: ChainModel, f: Functional, k: int, u) -> np.ndarray:
    """``f_k(u) = sum_y P_k(y) exp(i u g_k(y))`` over a grid of ``u``."""
    model._need_finite()
    f.check(model)
    u = _grid(u)
    return np.exp(1j * np.outer(u, f.g(k))) @ model.marginal(k)


def marginal_moduli_sq(model: ChainModel, f: Functional, n: int, u) -> np.ndarray:
    """``|f_j(u)|^2`` as a ``(len(u), n)`` array."""
    marg = model.marginals(n)
    u = _grid(u)
    out = np.empty((u.size, n))
    for j in range(1, n + 1):
        fj = np.exp(1j * np.outer(u, f.g(j))) @ marg[j - 1]
        out[:, j - 1] = fj.real**2 + fj.imag**2
    return np.minimum(out, 1.0)


def sum_charfn_exact(model: ChainModel, f: Functional, n: int, u) -> np.ndarray:
    """``E exp(i u S_n)`` by the forward transfer recursion.

    ``v_1 = P_1 e^{i u g_1}``, ``v_k = (v_{k-1} Q_k) e^{i u g_k}``; the value
    is ``sum_y v_n(y)``.
    """
    model._need_finite()
    f.check(model, n)
    if n < 1:
        raise ValueError("n must be >= 1")
    u = _grid(u)
    v = model.initial[None, :] * np.exp(1j * np.outer(u, f.g(1)))
    for k in range(2, n + 1):
        v = (v @ model.kernel(k)) * np.exp(1j * np.outer(u, f.g(k)))
    out = v.sum(axis=1)
    out[u == 0] = 1.0
    return out


def nagaev_bound(model: ChainModel, f: Functional, n: int, u, power: int = 4,
                 a: float | None = None) -> np.ndarray:
    """``exp(-(a^power / 16) sum_{j<=n} (1 - |f_j(u)|^2))``.

    ``power = 4`` is the constant the factorization argument delivers;
    ``power = 2`` is the weaker-looking variant sometimes quoted for the
    regularity condition.
    """
    a = effective_a(model) if a is None else a
    deficit = (1.0 - marginal_moduli_sq(model, f, n, u)).sum(axis=1)
    return np.exp(-(a**power / 16.0) * deficit)


def verify_factorization(model: ChainModel, f: Functional, n: int, u_grid) -> dict[str, Any]:
    """Largest ``|E e^{iuS_n}| - bound`` over the grid (must be <= 1e-10)."""
    u = _grid(u_grid)
    mod = np.abs(sum_charfn_exact(model, f, n, u))
    b4 = nagaev_bound(model, f, n, u, power=4)
    b2 = nagaev_bound(model, f, n, u, power=2)
    worst = float((mod - b4).max())
    return {"n": n, "a": effective_a(model), "max_violation": worst,
            "max_violation_a2": float((mod - b2).max()), "points": int(u.size),
            "pass": worst <= VIOLATION_TOL}


def _value_classes(g: np.ndarray) -> tuple[np.ndarray, int]:
    vals, inv = np.unique(g, return_inverse=True)
    return inv, vals.size


def lemma_estimate2_check(model: ChainModel, f: Functional, k: int, u_grid) -> dict[str, Any]:
    """Check ``|E(e^{iuX_k} | xi_{k-1})|^2 <= 1 - psi'^2 (1 - |E e^{iuX_k}|^2)``.

    Evaluated at every state of positive mass.  Two coefficients are used:
    ``psi'`` between the state sigma-fields of steps ``k - 1`` and ``k``, and
    the (larger) one between ``sigma(xi_{k-1})`` and ``sigma(X_k)``, obtained by
    merging states with equal ``g_k`` value.  The second gives the sharper
    bound and is the one asserted; both violations are reported.
    """
    model._need_finite()
    f.check(model)
    if k < 1:
        raise ValueError("k must be >= 1")
    u = _grid(u_grid)
    prev, cur = model.marginal(k - 1) if k > 1 else model.initial, model.marginal(k)
    q = model.kernel(k)
    live = prev > 0
    cls, size = _value_classes(f.g(k))
    merged_q = np.zeros((q.shape[0], size))
    np.add.at(merged_q.T, cls, q.T)
    merged_p = np.bincount(cls, weights=cur, minlength=size)

    def psi_of(rows, col):
        keep = col > 0
        return float((rows[live][:, keep] / col[keep]).min())

    psi_state = psi_of(q, cur)
    psi_value = psi_of(merged_q, merged_p)
    phase = np.exp(1j * np.outer(u, f.g(k)))
    cond = phase @ q[live].T
    lhs = cond.real**2 + cond.imag**2
    fk = phase @ cur
    deficit = 1.0 - (fk.real**2 + fk.imag**2)
    v_value = lhs - (1.0 - psi_value**2 * deficit)[:, None]
    v_state = lhs - (1.0 - psi_state**2 * deficit)[:, None]
    worst = float(v_value.max())
    return {"k": k, "psi_prime_value": psi_value, "psi_prime_state": psi_state,
            "max_violation": worst, "max_violation_state": float(v_state.max()),
            "pass": worst <= VIOLATION_TOL}


def composed_transfer_norm(model: ChainModel, f: Functional, k: int, u: float) -> float:
    """Norm of ``T_{k-1} T_k`` from ``L1(P_k)`` to ``L1(P_{k-2})``.

    Equals ``max_z sum_x P_{k-2}(x) |M(x, z)| / P_k(z)`` with ``M`` the
    composed matrix; states with ``P_k(z) = 0`` carry no L1 mass.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    outer = model.marginal(k - 2) if k > 2 else model.initial
    m = transfer_step(model, f, k - 1, u) @ model.kernel(k)
    target = model.marginal(k)
    keep = target > 0
    return float((outer @ np.abs(m[:, keep]) / target[keep]).max())


def lemma_estimate3_check(model: ChainModel, f: Functional, k: int, u_grid) -> dict[str, Any]:
    """Check ``||T_{k-1} T_k|| <= 1 - (a^4/8)(1 - |f_{k-1}(u)|^2)`` on a grid."""
    model._need_finite()
    f.check(model)
    u = _grid(u_grid)
    a = effective_a(model)
    norms = np.array([composed_transfer_norm(model, f, k, ui) for ui in u.tolist()])
    fk = marginal_charfn(model, f, k - 1, u)
    bound = 1.0 - (a**4 / 8.0) * (1.0 - np.minimum(fk.real**2 + fk.imag**2, 1.0))
    worst = float((norms - bound).max())
    return {"k": k, "a": a, "max_violation": worst, "max_norm": float(norms.max()),
            "pass": worst <= VIOLATION_TOL}


def lemma_sweep(model: ChainModel, f: Functional, u_grid, steps: Sequence[int] | None = None) -> dict[str, Any]:
    """Both estimates over a range of steps (default: the model's sweep)."""
    if steps is None:
        # one step past the sweep so stationary chains also compose two real kernels
        steps = range(2, model.sweep_steps()[-1] + 2)
        if model.horizon is not None:
            steps = range(2, model.horizon + 1)
    steps = list(steps)
    two = [lemma_estimate2_check(model, f, k, u_grid) for k in steps]
    three = [lemma_estimate3_check(model, f, k, u_grid) for k in steps]
    return {"steps": steps,
            "estimate2_max_violation": max(r["max_violation"] for r in two),
            "estimate2_state_max_violation": max(r["max_violation_state"] for r in two),
            "estimate3_max_violation": max(r["max_violation"] for r in three),
            "pass": all(r["pass"] for r in two + three)}


# -- tail integrals -------------------------------------------------------------------


def charfn_tail_integral(model: ChainModel, f: Functional, n: int, b_n: float, t_low: float,
                         upper: float, *, lattice_span: float | None = None, rtol: float = 1e-6,
                         atol: float = 1e-14) -> float:
    """``int_{t_low < |t| <= upper B_n} |E exp(i t S_n / B_n)| dt``.

    ``upper`` is ``D`` (non-lattice) or ``pi / h`` (lattice).  The modulus is
    even in ``t``, so twice the positive half is returned.  With
    ``lattice_span`` the range is split at multiples of the half period
    ``pi B_n / h``.  Raises ``ConvergenceError`` past the refinement cap.
    """
    if b_n <= 0:
        raise ValueError("B_n must be positive")
    top = upper * b_n
    if t_low >= top:
        return 0.0
    edges = [t_low, top]
    if lattice_span is not None:
        half = math.pi * b_n / lattice_span
        inner = np.arange(math.floor(t_low / half) + 1, math.ceil(top / half)) * half
        edges = [t_low, *inner.tolist(), top]

    def integrand(t):
        return np.abs(sum_charfn_exact(model, f, n, t / b_n))

    val, _ = simpson_pieces(integrand, edges, rtol=rtol, atol=atol, panels=256)
    return 2.0 * val


def d2_quantity(model: ChainModel, f: Functional, n: int, b_n: float, delta: float, d: float,
                rtol: float = 1e-6) -> float:
    """``B_n int_{delta < |t| <= D} |E exp(i t S_n)| dt``."""
    if delta >= d:
        return 0.0

    def integrand(t):
        return np.abs(sum_charfn_exact(model, f, n, t))

    val, _ = simpson_pieces(integrand, [delta, d], rtol=rtol, atol=1e-16, panels=256)
    return 2.0 * b_n * val


# -- curves -------------------------------------------------------------------------


@dataclass
class CharfnCurve:
    grid: np.ndarray
    values: np.ndarray
    n: int
    provenance: str
    bound: np.ndarray | None = None
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in ("exact", "empirical"):
            raise ValueError("provenance must be 'exact' or 'empirical'")

    def to_csv(self, path) -> None:
        bound = self.bound if self.bound is not None else np.full(self.grid.size, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "re", "im", "modulus", "nagaev_bound"])
            for u, v, b in zip(self.grid.tolist(), self.values.tolist(), bound.tolist()):
                w.writerow([repr(u), repr(v.real), repr(v.imag), repr(abs(v)), repr(b)])


def exact_curve(model: ChainModel, f: Functional, n: int, u_grid) -> CharfnCurve:
    u = _grid(u_grid)
    return CharfnCurve(u, sum_charfn_exact(model, f, n, u), n, "exact", nagaev_bound(model, f, n, u))


def empirical_curve(sums: np.ndarray, n: int, u_grid) -> CharfnCurve:
    from .stable import empirical_charfn

    u = _grid(u_grid)
    return CharfnCurve(u, empirical_charfn(sums, u), n, "empirical")

"""Stable limit laws, heavy-tailed increments and normalizing sequences.

Densities come from Fourier inversion of the characteristic function on
Gauss-Legendre panels.  Tail models are two-sided Pareto-type laws with
``P(|X| > x) = x^-p l(x)`` for ``x >= x0`` and an atom at ``x0`` holding the
remaining mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

CHARFN_TAIL = 1e-10
GL_NODES, GL_WEIGHTS = leggauss(8)
KINK_LEVELS = 40


@dataclass(frozen=True)
class StableLaw:
    """Strictly stable law with ``|f(t)| = exp(-|c t|^p)``."""

    p: float
    scale: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.p <= 2.0:
            raise ValueError(f"index p must lie in (0, 2], got {self.p}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not -1.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [-1, 1]")
        if self.beta != 0.0 and self.p in (1.0, 2.0):
            raise ValueError(f"beta must be 0 when p = {self.p:g}")

    @property
    def symmetric(self) -> bool:
        return self.beta == 0.0

    def to_config(self) -> dict[str, float]:
        return {"p": self.p, "scale": self.scale, "beta": self.beta}


def stable_charfn(law: StableLaw, t) -> np.ndarray:
    """``exp(-|c t|^p (1 - i beta sign(t) tan(pi p / 2)))``."""
    t = np.asarray(t, dtype=np.float64)
    mag = np.abs(law.scale * t) ** law.p
    if law.beta == 0.0:
        return np.exp(-mag).astype(np.complex128)
    phase = law.beta * np.sign(t) * math.tan(math.pi * law.p / 2.0)
    return np.exp(-mag * (1.0 - 1j * phase))


def inversion_cutoff(law: StableLaw, tail: float = CHARFN_TAIL) -> float:
    """Smallest ``T`` with ``int_{|t|>T} exp(-|c t|^p) dt < tail``.

    The one-sided integral is ``Gamma(1/p, (cT)^p) / (c p)``.
    """
    p, c = law.p, law.scale

    def mass(t: float) -> float:
        a = 1.0 / p
        return 2.0 * special.gamma(a) * special.gammaincc(a, (c * t) ** p) / (c * p)

    lo, hi = 0.0, 1.0 / c
    while mass(hi) >= tail:
        lo, hi = hi, 2.0 * hi
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mass(mid) >= tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


def _panels(upper: float, width: float, kink: bool) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, upper]``.

    With ``kink`` the first panel is split dyadically toward 0, where
    ``|t|^p`` is not smooth.
    """
    count = max(1, math.ceil(upper / width))
    edges = np.linspace(0.0, upper, count + 1)
    if kink:
        first = edges[1] * 0.5 ** np.arange(KINK_LEVELS + 1)
        edges = np.concatenate([[0.0], first[::-1], edges[2:]])
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (lo + half)[:, None] + half[:, None] * GL_NODES[None, :]
    weights = half[:, None] * GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def stable_density(law: StableLaw, x, block: int = 256) -> np.ndarray:
    """Density ``h(x) = (1/pi) int_0^T Re(f(t) e^{-itx}) dt`` by inversion.

    ``T`` drops less than 1e-10 of charfn mass.  The panel width is at most
    ``min(0.01, 1/(4 |x|max))`` within each band of ``|x|`` values that share
    a power of two, so every oscillation is resolved.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    out = np.empty_like(flat)
    upper = inversion_cutoff(law)
    kink = law.p not in (1.0, 2.0)
    mag = np.abs(flat)
    band = np.where(mag > 1.0, np.ceil(np.log2(np.maximum(mag, 1.0))), 0.0)
    for b in np.unique(band):
        idx = np.flatnonzero(band == b)
        xmax = 2.0**b
        t, w = _panels(upper, min(0.01, 1.0 / (4.0 * xmax)), kink)
        f = stable_charfn(law, t) * w
        for s in range(0, idx.size, block):
            sel = idx[s : s + block]
            phase = np.exp(-1j * np.outer(flat[sel], t))
            out[sel] = (phase @ f).real / math.pi
    return out.reshape(x.shape)


@dataclass
class DensityCurve:
    law: StableLaw
    x: np.ndarray
    h: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,h_L\n")
            for a, b in zip(self.x.tolist(), self.h.tolist()):
                fh.write(f"{a!r},{b!r}\n")


def density_table(law: StableLaw, x_grid) -> DensityCurve:
    x = np.asarray(x_grid, dtype=np.float64)
    return DensityCurve(law, x, stable_density(law, x))


def density_mass(law: StableLaw, reach: float = 200.0, points: int = 801) -> dict[str, float]:
    """Total mass of the inverted density and its minimum on the grid.

    Integrates over ``|x| <= reach * scale`` on a sinh-stretched grid
    (Simpson in the stretched variable) and adds the power-law tail
    ``h(X) X / p`` beyond each end (none for the Gaussian).
    """
    a = law.scale
    edge = reach * a
    v = np.linspace(-math.asinh(reach), math.asinh(reach), points)
    xs = a * np.sinh(v)
    h = stable_density(law, xs)
    jac = a * np.cosh(v)
    dv = v[1] - v[0]
    simpson = np.ones(points)
    simpson[1:-1:2] = 4.0
    simpson[2:-1:2] = 2.0
    inner = float((simpson * h * jac).sum() * dv / 3.0)
    tails = 0.0
    if law.p < 2.0:
        tails = float((h[0] + h[-1]) * edge / law.p)
    return {"mass": inner + tails, "inner": inner, "tail_correction": tails,
            "min_density": float(h.min()), "reach": edge}


# -- tail models -------------------------------------------------------------


@dataclass(frozen=True)
class TailModel:
    """Two-sided law with ``P(|X| > x) = x^-p l(x)`` for ``x >= x0``.

    ``ell`` is ``"constant"`` (``l = x0^p``, pure Pareto from ``x0``) or
    ``"log"`` (``l(x) = kappa (log x)^gamma``; the remaining mass sits at
    ``|X| = x0``).  Signs are ``+`` with probability ``c_plus``.
    """

    p: float
    x0: float = 1.0
    c_plus: float = 0.5
    c_minus: float = 0.5
    ell: str = "constant"
    kappa: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p < 2.0:
            raise ValueError(f"tail index p must lie in (0, 2), got {self.p}")
        if not self.x0 > 0:
            raise ValueError("cutoff x0 must be positive")
        if min(self.c_plus, self.c_minus) < 0 or abs(self.c_plus + self.c_minus - 1.0) > 1e-12:
            raise ValueError("need c_plus, c_minus >= 0 with c_plus + c_minus = 1")
        if self.ell == "log":
            if self.x0 < math.exp(self.gamma / self.p) or self.kappa <= 0:
                raise ValueError("log tail needs kappa > 0 and x0 >= exp(gamma / p)")
            if self.survival(np.array(self.x0)) > 1.0:
                raise ValueError("tail mass at x0 exceeds 1")
        elif self.ell != "constant":
            raise ValueError(f"unknown slowly varying choice {self.ell!r}")

    @property
    def symmetric(self) -> bool:
        return self.c_plus == self.c_minus

    def slowly_varying(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.ell == "constant":
            return np.full_like(x, self.x0**self.p)
        return self.kappa * np.log(x) ** self.gamma

    def survival(self, x) -> np.ndarray:
        """``P(|X| > x)``."""
        x = np.asarray(x, dtype=np.float64)
        safe = np.maximum(x, self.x0)
        tail = safe**-self.p * self.slowly_varying(safe)
        return np.where(x < self.x0, 1.0, tail)

    def magnitude(self, u) -> np.ndarray:
        """Quantile of ``|X|``: the ``x`` with ``P(|X| > x) = u`` (or ``x0``)."""
        u = np.asarray(u, dtype=np.float64)
        if self.ell == "constant":
            return self.x0 * u ** (-1.0 / self.p)
        top = float(self.survival(np.array(self.x0)))
        lo = np.full(u.shape, math.log(self.x0))
        hi = lo + 1.0
        live = u < top
        # grow the bracket until survival drops below u
        while True:
            short = live & (self.survival(np.exp(hi)) > u)
            if not short.any():
                break
            hi = np.where(short, hi + 2.0 * (hi - lo), hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = self.survival(np.exp(mid)) > u
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return np.where(live, np.exp(0.5 * (lo + hi)), self.x0)

    def mean_abs(self) -> float:
        """``E|X| = x0 + int_{x0}^inf P(|X| > x) dx`` (infinite when p <= 1)."""
        if self.p <= 1.0:
            return math.inf
        if self.ell == "constant":
            return self.x0 * self.p / (self.p - 1.0)
        q = self.p - 1.0
        g1 = self.gamma + 1.0
        upper = special.gammaincc(g1, q * math.log(self.x0)) * special.gamma(g1)
        return self.x0 + self.kappa * upper / q**g1

    def mean(self) -> float:
        if self.p <= 1.0:
            raise ValueError("mean undefined for p <= 1")
        return (self.c_plus - self.c_minus) * self.mean_abs()

    def to_config(self) -> dict[str, Any]:
        cfg = {"p": self.p, "x0": self.x0, "c_plus": self.c_plus, "c_minus": self.c_minus, "ell": self.ell}
        if self.ell == "log":
            cfg.update(kappa=self.kappa, gamma=self.gamma)
        return cfg


def tail_transform(tail: TailModel, u, recenter: bool = True) -> np.ndarray:
    """Map one uniform per draw to an increment.

    ``u < c_plus`` gives ``+|X|`` with ``|X|`` the quantile at ``u / c_plus``;
    otherwise ``-|X|`` at ``(1 - u) / c_minus``.  Both rescaled uniforms stay
    in ``(0, 1]``.  For ``p > 1`` and ``recenter`` the analytic mean is
    subtracted.
    """
    u = np.asarray(u, dtype=np.float64)
    pos = u < tail.c_plus
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(pos, u / tail.c_plus, (1.0 - u) / tail.c_minus)
    mag = tail.magnitude(np.minimum(scaled, 1.0))
    x = np.where(pos, mag, -mag)
    if recenter and tail.p > 1.0:
        m = tail.mean()
        if m != 0.0:
            x = x - m
    return x


def sample_tail_increment(tail: TailModel, size: int, seed: int, first: int = 0,
                          recenter: bool = True) -> np.ndarray:
    """``size`` increments; draw ``r`` uses replica stream ``first + r``."""
    from . import _rng

    return tail_transform(tail, _rng.unit_block(seed, first, size, 1)[:, 0], recenter=recenter)


# -- normalizers ---------------------------------------------------------------


@dataclass
class NormalizerSchedule:
    ns: np.ndarray
    values: np.ndarray
    method: str
    info: dict[str, Any] = field(default_factory=dict)

    METHODS = ("tail_solve", "variance", "c_sqrt_n", "mean_abs")

    def __post_init__(self):
        if self.method not in self.METHODS:
            raise ValueError(f"unknown normalizer method {self.method!r}")
        self.ns = np.asarray(self.ns, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.ns.shape != self.values.shape:
            raise ValueError("ns and values must align")
        if not np.all(self.values > 0):
            raise ValueError("normalizers must be positive")

    def __getitem__(self, n: int) -> float:
        hit = np.flatnonzero(self.ns == n)
        if hit.size == 0:
            raise KeyError(f"no normalizer for n = {n}")
        return float(self.values[hit[0]])

    @property
    def increasing(self) -> bool:
        order = np.argsort(self.ns)
        return bool(np.all(np.diff(self.values[order]) > 0))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("n,B_n,method\n")
            for n, b in zip(self.ns.tolist(), self.values.tolist()):
                fh.write(f"{n},{b!r},{self.method}\n")


def solve_normalizer(tail: TailModel, n: int, rtol: float = 1e-15) -> float:
    """Bisection in ``log B`` for ``n P(|X| > B) = 1`` with ``B >= x0``."""
    if n * float(tail.survival(np.array(tail.x0))) < 1.0:
        raise ValueError(f"no normalizer above x0 for n = {n}")

    def excess(logb: float) -> float:
        return n * float(tail.survival(np.array(math.exp(logb)))) - 1.0

    lo = math.log(tail.x0)
    hi = lo + 1.0
    while excess(hi) > 0:
        lo, hi = hi, hi + 2.0 * (hi - lo)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol:
            break
    # pick the endpoint with the smaller residual
    return math.exp(min((lo, hi), key=lambda v: abs(excess(v))))


def tail_normalizers(tail: TailModel, ns: Iterable[int]) -> NormalizerSchedule:
    ns = list(ns)
    vals = [solve_normalizer(tail, n) for n in ns]
    res = [abs(n * float(tail.survival(np.array(b))) - 1.0) for n, b in zip(ns, vals)]
    return NormalizerSchedule(ns, vals, "tail_solve", {"max_residual": max(res)})


def _sums_of(batches) -> list[tuple[int, np.ndarray]]:
    out = []
    for b in batches:
        s = np.asarray(b.sums, dtype=np.float64)
        if not np.any(s):
            raise ValueError(f"degenerate batch at n = {b.n}: all sums are zero")
        out.append((b.n, s))
    return out


def mean_abs_normalizer(batches: Sequence) -> NormalizerSchedule:
    """``B_n = sqrt(pi / 2) E|S_n|`` (exact for Gaussian sums)."""
    pairs = _sums_of(batches)
    vals = [math.sqrt(math.pi / 2.0) * float(np.abs(s).mean()) for _, s in pairs]
    return NormalizerSchedule([n for n, _ in pairs], vals, "mean_abs")


def variance_normalizer(batches: Sequence) -> NormalizerSchedule:
    """``B_n^2 = E S_n^2`` estimated by the sample second moment."""
    pairs = _sums_of(batches)
    vals = [math.sqrt(float(np.mean(s * s))) for _, s in pairs]
    return NormalizerSchedule([n for n, _ in pairs], vals, "variance")


def c_sqrt_n_normalizer(c: float, ns: Iterable[int]) -> NormalizerSchedule:
    if not c > 0:
        raise ValueError("c must be positive")
    ns = list(ns)
    return NormalizerSchedule(ns, [c * math.sqrt(n) for n in ns], "c_sqrt_n")


def truncated_second_moment(sample=None, x_grid=None, *, values=None, probs=None,
                            tol: float = 0.05) -> dict[str, Any]:
    """``H(x) = E X^2 1{|X| <= x}`` and the doubling ratios ``H(2x) / H(x)``.

    Pass a ``sample`` or a finite law (``values``, ``probs``).  The slow
    variation flag is set when the ratio at the largest grid point is within
    ``tol`` of 1.
    """
    if sample is not None:
        v = np.asarray(sample, dtype=np.float64)
        w = np.full(v.size, 1.0 / max(v.size, 1))
    else:
        v = np.asarray(values, dtype=np.float64)
        w = np.asarray(probs, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty sample")
    x = np.asarray(x_grid, dtype=np.float64)
    order = np.argsort(np.abs(v))
    mags = np.abs(v)[order]
    cum = np.concatenate([[0.0], np.cumsum((w * v * v)[order])])

    def h(at):
        return cum[np.searchsorted(mags, at, side="right")]

    hx, h2x = h(x), h(2.0 * x)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hx > 0, h2x / hx, np.nan)
    last = ratio[np.isfinite(ratio)]
    flag = bool(last.size and abs(last[-1] - 1.0) <= tol)
    return {"x": x, "H": hx, "ratio": ratio, "slowly_varying": flag}


def empirical_charfn(values: np.ndarray, t) -> np.ndarray:
    """``mean(exp(i t X))`` over a sample, in fixed summation order."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    v = np.asarray(values, dtype=np.float64)
    out = np.empty(t.size, dtype=np.complex128)
    for i, ti in enumerate(t.tolist()):
        a = ti * v
        out[i] = complex(np.cos(a).mean(), np.sin(a).mean())
    return out


def fit_stable_scale(sums: np.ndarray, b_n: float, p: float, t_grid=None,
                     band: tuple[float, float] = (0.2, 0.95)) -> dict[str, Any]:
    """Fit ``c`` in ``|f(t)| = exp(-|c t|^p)`` to ``S_n / B_n``.

    Least squares of ``-ln|f_hat(t)|`` on ``t^p`` through the origin, using
    grid points where ``|f_hat|`` lies inside ``band`` (away from both the
    flat top and the noise floor).
    """
    t = np.linspace(0.02, 3.0, 150) if t_grid is None else np.asarray(t_grid, dtype=np.float64)
    phi = np.abs(empirical_charfn(np.asarray(sums) / b_n, t))
    use = (phi >= band[0]) & (phi <= band[1])
    if use.sum() < 3:
        raise ValueError("too few grid points inside the fitting band")
    x = t[use] ** p
    y = -np.log(phi[use])
    cp = float(x @ y / (x @ x))
    resid = y - cp * x
    return {"scale": cp ** (1.0 / p), "scale_pow_p": cp, "points": int(use.sum()),
            "rms_residual": float(np.sqrt(np.mean(resid**2)))}

"""Composite Simpson quadrature with dyadic refinement."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

MAX_PANELS = 2**22


class ConvergenceError(ArithmeticError):
    """Refinement hit the panel cap before meeting the tolerance."""


def simpson(func: Callable[[np.ndarray], np.ndarray], a: float, b: float, *, rtol: float = 1e-6,
            atol: float = 1e-14, panels: int = 64, max_panels: int | None = None,
            agree: int = 2) -> tuple[float, int]:
    """Integrate a vectorized ``func`` over ``[a, b]``.

    The panel count doubles until ``agree`` consecutive refinements change the
    estimate by at most ``max(rtol |I|, atol)``.  Every refinement evaluates
    only the new midpoints.  Returns ``(integral, panels_used)``.
    """
    if b <= a:
        return 0.0, 0
    max_panels = MAX_PANELS if max_panels is None else max_panels
    n = max(2, panels + panels % 2)
    x = np.linspace(a, b, n + 1)
    fx = np.asarray(func(x), dtype=np.float64)
    ends = fx[0] + fx[-1]
    odd = fx[1:-1:2].sum()
    even = fx[2:-1:2].sum()
    prev = (b - a) / n / 3.0 * (ends + 4.0 * odd + 2.0 * even)
    streak = 0
    while True:
        if 2 * n > max_panels:
            raise ConvergenceError(f"Simpson refinement exceeded {max_panels} panels on [{a}, {b}]")
        h = (b - a) / (2 * n)
        mids = a + h * (2.0 * np.arange(n) + 1.0)
        even += odd
        odd = np.asarray(func(mids), dtype=np.float64).sum()
        n *= 2
        cur = h / 3.0 * (ends + 4.0 * odd + 2.0 * even)
        if abs(cur - prev) <= max(rtol * abs(cur), atol):
            streak += 1
            if streak >= agree:
                return float(cur), n
        else:
            streak = 0
        prev = cur


def simpson_pieces(func, edges: Sequence[float], **kw) -> tuple[float, int]:
    """Sum of :func:`simpson` over consecutive ``edges``."""
    total, used = 0.0, 0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, n = simpson(func, lo, hi, **kw)
        total += val
        used += n
    return total, used

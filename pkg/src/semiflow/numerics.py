"""Shared low-level numerics: Gauss-Legendre rules, graded meshes, tail verdicts."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


@lru_cache(maxsize=None)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the Gauss-Legendre rule on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def segment_points(lo: np.ndarray, hi: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points and weights for a batch of segments.

    ``lo``/``hi`` are arrays of shape (m,); the result has shape (m, order).
    """
    nodes, weights = gauss_rule(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    return mid + half * nodes[None, :], half * weights[None, :]


def integrate_segments(fn: Callable[[np.ndarray], np.ndarray],
                       lo: np.ndarray, hi: np.ndarray, order: int = 8) -> np.ndarray:
    """Per-segment Gauss-Legendre integrals of ``fn`` over [lo_i, hi_i]."""
    pts, wts = segment_points(lo, hi, order)
    vals = np.asarray(fn(pts.ravel())).reshape(pts.shape)
    return np.sum(vals * wts, axis=1)


def integrate_interval(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                       panels: int = 16, order: int = 8) -> float:
    """Composite Gauss-Legendre integral of ``fn`` over [a, b]."""
    if b == a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    return float(np.sum(integrate_segments(fn, edges[:-1], edges[1:], order)))


def graded_mesh(lo: float, hi: float, count: int, *, factor: float = 1.05,
                grade_lo: bool = True, grade_hi: bool = True,
                ratio_cap: float = 1e6) -> np.ndarray:
    """``count`` strictly increasing interior nodes of (lo, hi).

    Cell widths grow geometrically by ``factor`` away from each graded end, capped
    so the largest/smallest cell ratio stays below ``ratio_cap`` (which keeps the
    smallest cells representable and the mesh strictly monotone in floats).
    """
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise ValueError("graded_mesh needs a finite non-empty interval")
    if count < 1:
        raise ValueError("count must be positive")
    m = count + 1  # number of cells
    k_cap = int(np.log(ratio_cap) / np.log(factor)) if factor > 1 else m
    levels = np.arange(m, dtype=float)
    exponent = np.full(m, float(k_cap))
    if grade_lo:
        exponent = np.minimum(exponent, levels)
    if grade_hi:
        exponent = np.minimum(exponent, levels[::-1])
    if not (grade_lo or grade_hi):
        exponent = np.zeros(m)
    weights = factor ** exponent
    nodes = lo + (hi - lo) * np.cumsum(weights)[:-1] / np.sum(weights)
    nodes = np.unique(nodes)
    nodes = nodes[(nodes > lo) & (nodes < hi)]
    return nodes


@dataclass(frozen=True)
class TailDiagnosis:
    """Outcome of a geometric tail test on a sequence of block integrals."""

    verdict: str                 # 'convergent' | 'divergent' | 'inconclusive'
    blocks: tuple[float, ...]
    tail_estimate: float         # extrapolated remainder (0 unless convergent)
    detail: str = ""


def classify_tail(blocks: Sequence[float], *, decay_ratio: float = 0.7,
                  growth_ratio: float = 1.0, runs: int = 3,
                  negligible: float = 1e-13) -> TailDiagnosis:
    """Classify an improper integral from its successive block contributions.

    The last ``runs`` consecutive ratios must all fall at or below ``decay_ratio``
    for a convergent verdict, or all at or above ``growth_ratio`` (within rounding)
    for a divergent one.  Blocks that have shrunk below ``negligible`` relative to
    the accumulated total count as converged.  Anything else is inconclusive.
    """
    blocks = tuple(float(b) for b in blocks)
    if len(blocks) == 0:
        return TailDiagnosis("inconclusive", blocks, 0.0, "no blocks")
    if any(not np.isfinite(b) for b in blocks):
        return TailDiagnosis("divergent", blocks, 0.0, "non-finite block")
    total = sum(abs(b) for b in blocks)
    floor = negligible * (1.0 + total)
    if abs(blocks[-1]) <= floor:
        return TailDiagnosis("convergent", blocks, 0.0, "tail below floor")
    if len(blocks) < runs + 1:
        return TailDiagnosis("inconclusive", blocks, 0.0, "too few blocks")
    ratios = []
    for prev, cur in zip(blocks[-runs - 1:-1], blocks[-runs:]):
        if abs(prev) <= floor:
            return TailDiagnosis("convergent", blocks, 0.0, "tail below floor")
        ratios.append(abs(cur) / abs(prev))
    if all(r <= decay_ratio for r in ratios):
        r = max(ratios)
        tail = abs(blocks[-1]) * r / (1.0 - r)
        return TailDiagnosis("convergent", blocks, tail,
                             f"decay ratios {['%.3g' % r for r in ratios]}")
    if all(r >= growth_ratio * (1.0 - 1e-9) for r in ratios):
        return TailDiagnosis("divergent", blocks, 0.0,
                             f"growth ratios {['%.3g' % r for r in ratios]}")
    return TailDiagnosis("inconclusive", blocks, 0.0,
                         f"mixed ratios {['%.3g' % r for r in ratios]}")


def dyadic_time_blocks(horizon: float, first: float = 1.0) -> list[tuple[float, float]]:
    """Blocks [0, 1], [1, 2], [2, 4], ... clipped to [0, horizon]."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    edges = [0.0]
    e = min(first, horizon)
    while True:
        edges.append(e)
        if e >= horizon:
            break
        e = min(2 * e, horizon)
    return list(zip(edges[:-1], edges[1:]))

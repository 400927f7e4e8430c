"""Discretized weighted Lebesgue space on an interval.

Functions are piecewise-linear interpolants over a strictly increasing node
grid, extended by zero outside the node hull.  A grid function may carry sharp
*support pieces*: intervals (with endpoints placed exactly on nodes) outside of
which it vanishes identically.  Indicators and everything derived from them use
this to keep interval statements sharp — quadrature cells are clipped to the
support, so an indicator's norm has no edge-smearing error.

Norms and pairings are composite Gauss-Legendre quadratures with the density ρ
evaluated at the quadrature points::

    lp_norm(f, p, ρ)  = (∫ |f|^p ρ dλ)^{1/p}
    pairing(g, f, ρ)  = ∫ g f ρ dλ          (bilinear, no conjugation)
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .flows import ComponentDecomposition, F_MIN, Semiflow
from .numerics import gauss_rule, graded_mesh
from .problem import ProblemDef

__all__ = [
    "Grid", "GridFunction", "IndicatorSpec", "StepApproximation",
    "build_grid", "make_indicator_spec", "indicator", "sample_function",
    "lp_norm", "lq_norm", "pairing", "lp_distance", "step_approximate",
    "write_csv", "read_csv",
]

DEFAULT_GRID_SIZE = 4096
CLUSTER_FACTOR = 1.05
MIN_NODES = 65                  # x₀ … x_N with N ≥ 64
MAX_SPACING_RATIO = 10.0

Interval = tuple[float, float]
_QUAD_ORDER = 8


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Strictly increasing quadrature/interpolation nodes.

    Built grids respect the adjacent-spacing-ratio bound; inserting explicit
    interval edges afterwards (:meth:`with_points`) may create locally smaller
    cells, which is deliberate — quadrature is exact per cell and sharp edges
    outrank spacing uniformity.
    """

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < MIN_NODES:
            raise ValueError(f"a grid needs at least {MIN_NODES} nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")

    def __len__(self) -> int:
        return int(self.nodes.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.nodes, other.nodes)

    @property
    def hull(self) -> Interval:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def max_spacing_ratio(self) -> float:
        gaps = np.diff(self.nodes)
        return float(np.max(np.maximum(gaps[1:], gaps[:-1])
                            / np.minimum(gaps[1:], gaps[:-1])))

    def with_points(self, points: Iterable[float]) -> "Grid":
        """A grid whose node set additionally contains ``points`` exactly."""
        extra = np.asarray([float(p) for p in points], dtype=float)
        merged = np.unique(np.concatenate([self.nodes, extra]))
        if np.array_equal(merged, self.nodes):
            return self
        return Grid(merged)


def build_grid(problem: ProblemDef, *, size: int = DEFAULT_GRID_SIZE,
               zeros: Sequence[float] = (), factor: float = CLUSTER_FACTOR,
               include: Sequence[float] = ()) -> Grid:
    """Default grid: geometric clustering toward finite endpoints and zeros of F."""
    if size < MIN_NODES:
        raise ValueError(f"size must be at least {MIN_NODES}")
    lo_w, hi_w = problem.sample_window()
    interior_zeros = sorted({float(z) for z in zeros if lo_w < z < hi_w})
    breaks = [lo_w, *interior_zeros, hi_w]
    total = hi_w - lo_w
    pieces: list[np.ndarray] = []
    for i, (a, b) in enumerate(zip(breaks[:-1], breaks[1:])):
        count = max(16, int(round(size * (b - a) / total)))
        grade_lo = (i > 0) or math.isfinite(problem.omega_lo)
        grade_hi = (i < len(breaks) - 2) or math.isfinite(problem.omega_hi)
        pieces.append(graded_mesh(a, b, count, factor=factor,
                                  grade_lo=grade_lo, grade_hi=grade_hi))
    boundary = [b for b in breaks if problem.contains(b)]
    nodes = np.unique(np.concatenate([*pieces, np.asarray(boundary, dtype=float)]))
    nodes = nodes[(nodes > problem.omega_lo) & (nodes < problem.omega_hi)]
    grid = Grid(nodes)
    if include:
        grid = grid.with_points(include)
    return grid


# ---------------------------------------------------------------------------
# Grid functions
# ---------------------------------------------------------------------------

def _normalize_pieces(pieces: Iterable[Interval]) -> tuple[Interval, ...]:
    items = sorted((float(a), float(b)) for a, b in pieces if b > a)
    merged: list[list[float]] = []
    for a, b in items:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


@dataclass(frozen=True)
class GridFunction:
    """Piecewise-linear function on a grid, zero outside its support.

    ``pieces`` (optional) lists sharp support intervals; ``None`` means the
    full node hull.  Values are stored complex.
    """

    grid: Grid
    values: np.ndarray
    pieces: Optional[tuple[Interval, ...]] = None

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(np.asarray(self.values, dtype=complex))
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.nodes.shape:
            raise ValueError("values must match the grid length")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        if self.pieces is not None:
            object.__setattr__(self, "pieces", _normalize_pieces(self.pieces))

    # -- evaluation -----------------------------------------------------

    def support_intervals(self) -> tuple[Interval, ...]:
        return self.pieces if self.pieces is not None else (self.grid.hull,)

    def eval(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        nodes = self.grid.nodes
        re = np.interp(xs, nodes, self.values.real, left=0.0, right=0.0)
        im = np.interp(xs, nodes, self.values.imag, left=0.0, right=0.0)
        out = re + 1j * im
        if self.pieces is not None:
            gate = np.zeros(xs.shape, dtype=bool)
            for a, b in self.pieces:
                # fp-scale slack so round-tripped edge points stay inside
                tol_a = 1e-12 * (1.0 + abs(a))
                tol_b = 1e-12 * (1.0 + abs(b))
                gate |= (xs >= a - tol_a) & (xs <= b + tol_b)
            out = np.where(gate, out, 0.0)
        return out

    def __call__(self, x):
        return self.eval(x)

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0.0))

    # -- algebra ----------------------------------------------------------

    def _merged_pieces(self, other: "GridFunction") -> Optional[tuple[Interval, ...]]:
        if self.pieces is None or other.pieces is None:
            return None
        return _normalize_pieces([*self.pieces, *other.pieces])

    def _require_same_grid(self, other: "GridFunction") -> None:
        if self.grid != other.grid:
            raise ValueError("grid functions live on different grids")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._require_same_grid(other)
        return GridFunction(self.grid, self.values + other.values,
                            self._merged_pieces(other))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._require_same_grid(other)
        return GridFunction(self.grid, self.values - other.values,
                            self._merged_pieces(other))

    def __mul__(self, scalar: complex) -> "GridFunction":
        return GridFunction(self.grid, self.values * scalar, self.pieces)

    __rmul__ = __mul__

    @staticmethod
    def zeros(grid: Grid) -> "GridFunction":
        return GridFunction(grid, np.zeros(len(grid), dtype=complex), ())


def sample_function(grid: Grid, fn: Callable[[np.ndarray], np.ndarray],
                    pieces: Optional[Iterable[Interval]] = None) -> GridFunction:
    values = np.asarray(fn(grid.nodes), dtype=complex)
    return GridFunction(grid, values,
                        None if pieces is None else tuple(pieces))


# ---------------------------------------------------------------------------
# Indicators and the dense step-function class
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndicatorSpec:
    """A compact interval wholly inside one sign component of F."""

    lo: float
    hi: float
    component_id: int
    min_abs_F: float

    @property
    def interval(self) -> Interval:
        return (self.lo, self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo


def make_indicator_spec(sf: Semiflow, interval: Interval,
                        decomposition: Optional[ComponentDecomposition] = None
                        ) -> IndicatorSpec:
    a, b = float(interval[0]), float(interval[1])
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise ValueError("indicator interval must be a finite [a, b] with a < b")
    dec = decomposition if decomposition is not None else sf.decompose()
    component_id = None
    for idx, comp in enumerate(dec.components):
        if comp.lo < a and b < comp.hi:
            component_id = idx
            break
    if component_id is None:
        raise ValueError(
            "interval must lie strictly inside one component of the zero-free set")
    rs = np.linspace(a, b, 513)
    min_abs = float(np.min(np.abs(np.asarray(sf.problem.F(rs), dtype=float))))
    if min_abs < F_MIN:
        raise ValueError(f"|F| falls below the floor {F_MIN:g} on the interval")
    return IndicatorSpec(a, b, component_id, min_abs)


def indicator(spec: IndicatorSpec, grid: Grid) -> GridFunction:
    """χ_{[a,b]} on ``grid`` augmented so a and b are nodes (sharp edges)."""
    sharp = grid.with_points([spec.lo, spec.hi])
    nodes = sharp.nodes
    values = ((nodes >= spec.lo) & (nodes <= spec.hi)).astype(complex)
    return GridFunction(sharp, values, ((spec.lo, spec.hi),))


# ---------------------------------------------------------------------------
# Quadrature: norms and pairings
# ---------------------------------------------------------------------------

def _intersect(pieces_a: Sequence[Interval],
               pieces_b: Sequence[Interval]) -> list[Interval]:
    out = []
    for a0, a1 in pieces_a:
        for b0, b1 in pieces_b:
            lo, hi = max(a0, b0), min(a1, b1)
            if hi > lo:
                out.append((lo, hi))
    return out


def _segments(pieces: Sequence[Interval], cuts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    los: list[float] = []
    his: list[float] = []
    for a, b in pieces:
        inner = cuts[(cuts > a) & (cuts < b)]
        edges = np.concatenate(([a], inner, [b]))
        los.extend(edges[:-1])
        his.extend(edges[1:])
    return np.asarray(los), np.asarray(his)


def _quad_points(los: np.ndarray, his: np.ndarray):
    base, wts = gauss_rule(_QUAD_ORDER)
    mid = 0.5 * (los + his)[:, None]
    half = 0.5 * (his - los)[:, None]
    return (mid + half * base[None, :]).ravel(), (half * wts[None, :]).ravel()


def _density_at(rho, pts: np.ndarray) -> np.ndarray:
    if rho is None:
        return np.ones_like(pts)
    return np.asarray(rho(pts), dtype=float)


def lp_norm(f: GridFunction, p: float, rho=None) -> float:
    """(∫ |f|^p ρ dλ)^{1/p} over the sharp support of f."""
    if p < 1:
        raise ValueError("p must be at least 1")
    los, his = _segments(f.support_intervals(), f.grid.nodes)
    if los.size == 0:
        return 0.0
    pts, wts = _quad_points(los, his)
    total = float(np.sum(np.abs(f.eval(pts)) ** p * _density_at(rho, pts) * wts))
    return max(total, 0.0) ** (1.0 / p)


def lq_norm(g: GridFunction, q: float, rho=None) -> float:
    """Dual-exponent norm; q = inf gives the essential sup of |g|."""
    if math.isinf(q):
        top = 0.0
        for a, b in g.support_intervals():
            nodes = g.grid.nodes
            inside = (nodes >= a) & (nodes <= b)
            if inside.any():
                top = max(top, float(np.max(np.abs(g.values[inside]))))
            top = max(top, float(abs(g.eval(a))), float(abs(g.eval(b))))
        return top
    return lp_norm(g, q, rho)


def pairing(g: GridFunction, f: GridFunction, rho=None) -> complex:
    """Bilinear pairing ∫ g f ρ dλ (no conjugation), on possibly distinct grids."""
    pieces = _intersect(g.support_intervals(), f.support_intervals())
    if not pieces:
        return 0.0 + 0.0j
    cuts = np.unique(np.concatenate([g.grid.nodes, f.grid.nodes]))
    los, his = _segments(pieces, cuts)
    pts, wts = _quad_points(los, his)
    vals = g.eval(pts) * f.eval(pts) * _density_at(rho, pts) * wts
    return complex(np.sum(vals))


def lp_distance(f: GridFunction, g: GridFunction, p: float, rho=None) -> float:
    """(∫ |f − g|^p ρ dλ)^{1/p} across possibly distinct grids."""
    if p < 1:
        raise ValueError("p must be at least 1")
    pieces = _normalize_pieces([*f.support_intervals(), *g.support_intervals()])
    if not pieces:
        return 0.0
    cuts = np.unique(np.concatenate([f.grid.nodes, g.grid.nodes]))
    los, his = _segments(pieces, cuts)
    pts, wts = _quad_points(los, his)
    diff = np.abs(f.eval(pts) - g.eval(pts)) ** p
    total = float(np.sum(diff * _density_at(rho, pts) * wts))
    return max(total, 0.0) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Step approximation (the dense class X₀, exercised constructively)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepApproximation:
    pieces: tuple[tuple[Interval, complex], ...]
    error: float

    def __iter__(self):
        return iter(self.pieces)


def step_approximate(f: GridFunction, k: int, p: float, rho=None,
                     decomposition: Optional[ComponentDecomposition] = None
                     ) -> StepApproximation:
    """Approximate f by k weighted indicators on component-interior intervals.

    Pieces are equal-width within each support stretch (allocated by length),
    pulled strictly inside the sign components of F when a decomposition is
    supplied.  Coefficients are ρ-weighted means; the reported error is the
    L^p_ρ distance between f and the step function.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if decomposition is not None and decomposition.zero_set_measure_flag:
        raise ValueError("zero set of F may have positive measure; "
                         "step approximants over components are unavailable")

    support = list(f.support_intervals())
    if decomposition is not None:
        comp_intervals = [(c.lo, c.hi) for c in decomposition.components]
        support = _intersect(support, comp_intervals)
    stretches = []
    for a, b in support:
        shrink = 1e-9 * (b - a)
        a2, b2 = a + shrink, b - shrink
        if b2 > a2:
            stretches.append((a2, b2))
    if not stretches:
        return StepApproximation((), lp_norm(f, p, rho))

    total = sum(b - a for a, b in stretches)
    counts = [max(1, int(round(k * (b - a) / total))) for a, b in stretches]
    while sum(counts) > k:
        counts[int(np.argmax(counts))] -= 1
    while sum(counts) < k:
        counts[int(np.argmax([(b - a) / c for (a, b), c in zip(stretches, counts)]))] += 1

    pieces: list[tuple[Interval, complex]] = []
    for (a, b), count in zip(stretches, counts):
        edges = np.linspace(a, b, count + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            cuts = f.grid.nodes
            los, his = _segments([(lo, hi)], cuts)
            pts, wts = _quad_points(los, his)
            dens = _density_at(rho, pts)
            mass = float(np.sum(dens * wts))
            if mass <= 0.0:
                coeff = 0.0 + 0.0j
            else:
                coeff = complex(np.sum(f.eval(pts) * dens * wts) / mass)
            pieces.append(((float(lo), float(hi)), coeff))

    def step_eval(x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape, dtype=complex)
        for (lo, hi), coeff in pieces:
            out = np.where((x >= lo) & (x <= hi), coeff, out)
        return out

    err_pieces = _normalize_pieces(
        [*f.support_intervals(), *[interval for interval, _ in pieces]])
    cuts = np.unique(np.concatenate(
        [f.grid.nodes, [e for (lo, hi), _ in pieces for e in (lo, hi)]]))
    los, his = _segments(err_pieces, cuts)
    pts, wts = _quad_points(los, his)
    diff = np.abs(f.eval(pts) - step_eval(pts)) ** p
    error = float(np.sum(diff * _density_at(rho, pts) * wts)) ** (1.0 / p)
    return StepApproximation(tuple(pieces), error)


# ---------------------------------------------------------------------------
# CSV round-trip
# ---------------------------------------------------------------------------

def write_csv(f: GridFunction, destination: Union[str, Path, io.TextIOBase]) -> None:
    """Write (node, value_re[, value_im]) rows; floats use repr for exact round-trip."""
    with_imag = not f.is_real
    lines = ["node,value_re,value_im" if with_imag else "node,value_re"]
    for node, value in zip(f.grid.nodes.tolist(), f.values.tolist()):
        row = f"{node!r},{value.real!r}"
        if with_imag:
            row += f",{value.imag!r}"
        lines.append(row)
    text = "\n".join(lines) + "\n"
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)


def read_csv(source: Union[str, Path, io.TextIOBase]) -> GridFunction:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows or not rows[0].startswith("node"):
        raise ValueError("missing CSV header")
    nodes: list[float] = []
    values: list[complex] = []
    for row in rows[1:]:
        parts = row.split(",")
        if len(parts) not in (2, 3):
            raise ValueError(f"malformed CSV row: {row!r}")
        nodes.append(float(parts[0]))
        imag = float(parts[2]) if len(parts) == 3 else 0.0
        values.append(complex(float(parts[1]), imag))
    return GridFunction(Grid(np.asarray(nodes)), np.asarray(values))

"""Double-dyadic space-time partitions of the unit parabolic cylinder.

Cells are dyadic in time, t ~ e^{-4i}, and dyadic in the parabolic
ratio w = 1 + 2|x| t^{-1/2} ~ e^j.  Three index families are used:

* ``A``: the full lattice, restricted to j <= 2i + 2 inside the
  cylinder [0,1] x B(0,1);
* ``A(tau)``: the sub-lattice covering the cut parabola
  {|x|^2 <= tau t <= 1} (up to the usual one-row fuzz at the top);
* ``B(tau)``: a coarser partition of [0, 1/tau) x B(0,1) in which,
  for rows deeper than 4i > sqrt(tau), the whole inner region
  |x| < e^{-2i} sqrt(tau) collapses into a single slab.

Cell membership on the closed boundaries is made deterministic by
treating every cell as half-open, (lo, hi] in t and in w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np


class CellKind(Enum):
    """Which family of the coarse cylinder partition a cell belongs to."""

    A_IJ = "A_ij"
    B_LOG_SLAB = "B_log_slab"
    B_OUTER = "B_outer"


@dataclass(frozen=True)
class DyadicIndex:
    """Index (i, j) of the cell A_ij; j >= 0 always."""

    i: int
    j: int

    def __post_init__(self):
        if self.j < 0:
            raise ValueError(f"spatial level j must be >= 0, got {self.j}")

    def in_cylinder_lattice(self) -> bool:
        """Whether the cell meets the unit cylinder (j <= 2i + 2)."""
        return self.j <= 2 * self.i + 2

    def as_tuple(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class PartitionWindow:
    """Finite truncation of the infinite dyadic index range.

    i_min is pinned to ceil((ln tau + 1)/4), the first full row of the
    cut-parabola lattice; i_max is a free desk-scale truncation knob.
    """

    tau: float
    i_min: int
    i_max: int

    def __post_init__(self):
        if self.tau <= 1.0:
            raise ValueError("tau must exceed 1")
        expected = math.ceil((math.log(self.tau) + 1.0) / 4.0)
        if self.i_min != expected:
            raise ValueError(
                f"i_min must be ceil((ln tau + 1)/4) = {expected}, got {self.i_min}")
        if self.i_max <= self.i_min:
            raise ValueError("window must contain at least two rows (i_max > i_min)")

    @classmethod
    def for_tau(cls, tau: float, i_max: int) -> "PartitionWindow":
        return cls(tau=tau, i_min=math.ceil((math.log(tau) + 1.0) / 4.0), i_max=i_max)

    @property
    def j_cap(self) -> int:
        """Largest spatial level of the cut-parabola lattice, floor(ln tau / 2 + 2)."""
        return math.floor(0.5 * math.log(self.tau) + 2.0)

    def rows(self) -> range:
        return range(self.i_min, self.i_max + 1)

    def indices(self) -> list[DyadicIndex]:
        return [DyadicIndex(i, j) for i in self.rows() for j in range(self.j_cap + 1)]

    @property
    def n_rows(self) -> int:
        return self.i_max - self.i_min + 1

    @property
    def n_cells(self) -> int:
        return self.n_rows * (self.j_cap + 1)


def locate(t: float, x) -> DyadicIndex:
    """Dyadic address of a space-time point.

    Returns the (i, j) with e^{-4i-4} < t <= e^{-4i} and
    e^j < 1 + 2|x| t^{-1/2} <= e^{j+1} (j = 0 cell closed at w = 1).
    Shared closed boundaries go to the cell whose *upper* edge they sit
    on, i.e. i = floor(-ln t / 4) and j = max(0, ceil(ln w) - 1).
    """
    if t <= 0.0:
        raise ValueError(f"time must be positive, got {t}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    i = math.floor(-math.log(t) / 4.0)
    w = 1.0 + 2.0 * float(np.linalg.norm(x)) / math.sqrt(t)
    j = max(0, math.ceil(math.log(w)) - 1)
    return DyadicIndex(i, j)


def cell_bounds(idx: DyadicIndex):
    """(t_lo, t_hi, w_lo, w_hi) of A_ij; w is the ratio 1 + 2|x| t^{-1/2}."""
    t_hi = math.exp(-4.0 * idx.i)
    t_lo = math.exp(-4.0 * idx.i - 4.0)
    return t_lo, t_hi, math.exp(idx.j), math.exp(idx.j + 1.0)


def enumerate_A_tau(window: PartitionWindow) -> list[DyadicIndex]:
    """Lattice A(tau): 4i >= ln tau + 1 and 0 <= j <= floor(ln tau/2 + 2).

    Rows outside the window are dropped; the j <= 2i + 2 cylinder
    restriction is re-checked although it is never binding inside A(tau).
    """
    ln_tau = math.log(window.tau)
    out = []
    for i in window.rows():
        if 4 * i < ln_tau + 1.0:
            continue
        for j in range(window.j_cap + 1):
            if j <= 2 * i + 2:
                out.append(DyadicIndex(i, j))
    return out


@dataclass(frozen=True)
class BCell:
    """One cell of the coarse B(tau) partition.

    For dyadic kinds the radial extent is recorded as the w-range of the
    underlying A_ij; for the log slab it is the plain radius bound
    |x| < r_hi = e^{-2i} sqrt(tau) (with r_lo = 0).
    """

    index: DyadicIndex
    kind: CellKind
    t_lo: float
    t_hi: float
    r_lo: float
    r_hi: float


def _b_rows(window: PartitionWindow) -> range:
    # B(tau) covers [0, 1/tau): rows with e^{-4i} <= 1/tau, i.e. 4i >= ln tau.
    return range(math.ceil(math.log(window.tau) / 4.0), window.i_max + 1)


def enumerate_B_tau(window: PartitionWindow) -> list[BCell]:
    """Cells of the three B(tau) families inside the window.

    Shallow rows (4i <= sqrt(tau)): individual cells, tagged A_IJ up to
    the inner cap j <= floor(ln tau/2 + 2) and B_OUTER beyond it.
    Deep rows (4i > sqrt(tau)): one log slab covering the inner region,
    plus B_OUTER cells from j = floor(ln tau/2) outward.  Enumerated
    bounds are nominal; point membership is decided by ``locate_B_tau``.
    """
    tau = window.tau
    sqrt_tau = math.sqrt(tau)
    j_inner_cap = window.j_cap
    j_outer_lo = math.floor(0.5 * math.log(tau))
    cells = []
    for i in _b_rows(window):
        j_row_cap = 2 * i + 2
        if 4 * i <= sqrt_tau:
            for j in range(0, min(j_inner_cap, j_row_cap) + 1):
                t_lo, t_hi, w_lo, w_hi = cell_bounds(DyadicIndex(i, j))
                cells.append(BCell(DyadicIndex(i, j), CellKind.A_IJ,
                                   t_lo, t_hi, w_lo, w_hi))
            for j in range(j_inner_cap + 1, j_row_cap + 1):
                t_lo, t_hi, w_lo, w_hi = cell_bounds(DyadicIndex(i, j))
                cells.append(BCell(DyadicIndex(i, j), CellKind.B_OUTER,
                                   t_lo, t_hi, w_lo, w_hi))
        else:
            t_hi = math.exp(-4.0 * i)
            t_lo = math.exp(-4.0 * i - 4.0)
            cells.append(BCell(DyadicIndex(i, 0), CellKind.B_LOG_SLAB,
                               t_lo, t_hi, 0.0, math.exp(-2.0 * i) * sqrt_tau))
            for j in range(j_outer_lo, j_row_cap + 1):
                t_lo, t_hi, w_lo, w_hi = cell_bounds(DyadicIndex(i, j))
                cells.append(BCell(DyadicIndex(i, j), CellKind.B_OUTER,
                                   t_lo, t_hi, w_lo, w_hi))
    return cells


def locate_B_tau(tau: float, t: float, x) -> tuple[DyadicIndex, CellKind]:
    """Deterministic B(tau) membership of a point of [0, 1/tau) x B(0,1).

    Precedence: deep rows claim the log slab first; everything else is
    addressed by ``locate`` and tagged by the inner cap.  This makes the
    three families genuinely disjoint even though their nominal regions
    overlap near the slab boundary.
    """
    if not (0.0 < t < 1.0 / tau):
        raise ValueError(f"t = {t} outside the cylinder [0, 1/tau)")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    i = math.floor(-math.log(t) / 4.0)
    if 4 * i > math.sqrt(tau) and float(np.linalg.norm(x)) < math.exp(-2.0 * i) * math.sqrt(tau):
        return DyadicIndex(i, 0), CellKind.B_LOG_SLAB
    idx = locate(t, x)
    j_inner_cap = math.floor(0.5 * math.log(tau) + 2.0)
    if 4 * idx.i <= math.sqrt(tau) and idx.j <= j_inner_cap:
        return idx, CellKind.A_IJ
    return idx, CellKind.B_OUTER


def coarse_B_ij(thresholds: dict[int, int], j_cap: int, idx: DyadicIndex):
    """Coarsened cell of A_ij under the merge thresholds j(i).

    The three regimes: j(i) = 0 keeps the row unmerged; an interior
    threshold merges j < j(i) into B_i0; j(i) = j_cap merges the whole
    row.  Returns (kind, index, j_span) where j_span is the inclusive
    range of merged spatial levels.
    """
    if idx.i not in thresholds:
        raise KeyError(f"row {idx.i} outside the threshold table")
    j_i = thresholds[idx.i]
    if j_i == 0:
        return ("A", idx, (idx.j, idx.j))
    if j_i >= j_cap:
        return ("B_i0", DyadicIndex(idx.i, 0), (0, j_cap))
    if idx.j >= j_i:
        return ("A", idx, (idx.j, idx.j))
    return ("B_i0", DyadicIndex(idx.i, 0), (0, j_i - 1))


def cells_to_csv_rows(cells: Iterable) -> list[dict]:
    """Rows (i, j, kind, t_lo, t_hi, r_lo, r_hi) for the CSV artifact."""
    rows = []
    for c in cells:
        if isinstance(c, BCell):
            rows.append(dict(i=c.index.i, j=c.index.j, kind=c.kind.value,
                             t_lo=c.t_lo, t_hi=c.t_hi, r_lo=c.r_lo, r_hi=c.r_hi))
        else:
            t_lo, t_hi, w_lo, w_hi = cell_bounds(c)
            rows.append(dict(i=c.i, j=c.j, kind=CellKind.A_IJ.value,
                             t_lo=t_lo, t_hi=t_hi, r_lo=w_lo, r_hi=w_hi))
    return rows

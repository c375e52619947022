"""Structural complexity metrics for voxel morphologies.

Four raw metrics are computed per genome:

* heterogeneity: entropy of the material mix over non-empty voxels,
  normalized by ln(4) so a uniform mix of all four materials scores 1.
* connectivity: mean number of occupied 4-neighbours per non-empty voxel.
* symmetry: mean per-cell agreement with the mirrored grid, where agreement
  is 1 - |code difference| / 4.
* actuator_dispersion: RMS distance (in voxel units) of actuator voxels
  from their centroid.

Normalized forms rescale each metric to [0, 1] using per-grid-size theoretical
maxima (not per-dataset ranges), so composites are comparable across runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .genome import ACTUATOR_CODES, Genome

SYMMETRY_AXES = ("vertical", "horizontal", "transpose")

# Codes span 0..4, so two cells differ by at most 4.
_V_MAX = 4.0
_N_MATERIALS = 4

METRIC_NAMES = ("heterogeneity", "connectivity", "symmetry", "actuator_dispersion")

CSV_COLUMNS = (
    "heterogeneity", "connectivity", "symmetry", "actuator_dispersion",
    "het_norm", "conn_norm", "sym_norm", "act_norm", "composite",
)


@dataclass(frozen=True)
class MorphoMetrics:
    heterogeneity: float
    connectivity: float
    symmetry: float
    actuator_dispersion: float
    het_norm: float
    conn_norm: float
    sym_norm: float
    act_norm: float
    composite: float

    def normalized(self) -> tuple[float, float, float, float]:
        """The four normalized metrics in canonical (CSV column) order."""
        return (self.het_norm, self.conn_norm, self.sym_norm, self.act_norm)

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in CSV_COLUMNS}

    @classmethod
    def from_dict(cls, d: dict) -> "MorphoMetrics":
        return cls(**{name: float(d[name]) for name in CSV_COLUMNS})


def heterogeneity(g: Genome) -> float:
    """Normalized entropy of material proportions among non-empty voxels."""
    codes = np.asarray(g.cells, dtype=np.int64)
    materials = codes[codes > 0]
    counts = np.bincount(materials, minlength=5)[1:]
    p = counts[counts > 0] / materials.size
    return float(-(p * np.log(p)).sum() / math.log(_N_MATERIALS)) + 0.0


def connectivity(g: Genome) -> float:
    """Mean occupied-neighbour count (degree) over non-empty voxels."""
    occ = g.grid() > 0
    degree = np.zeros(occ.shape, dtype=np.int64)
    degree[:, 1:] += occ[:, :-1]
    degree[:, :-1] += occ[:, 1:]
    degree[1:, :] += occ[:-1, :]
    degree[:-1, :] += occ[1:, :]
    n = occ.sum()
    return float(degree[occ].sum() / n)


def symmetry(g: Genome, axis: str = "vertical") -> float:
    """Mean mirror agreement of raw voxel codes across the chosen axis.

    vertical   - left/right mirror (reflection across the vertical mid-axis)
    horizontal - top/bottom mirror
    transpose  - matrix transpose; defined only for square grids
    """
    arr = g.grid().astype(np.float64)
    if axis == "vertical":
        mirror = arr[:, ::-1]
    elif axis == "horizontal":
        mirror = arr[::-1, :]
    elif axis == "transpose":
        if g.width != g.height:
            raise ValueError(f"transpose symmetry needs a square grid, got {g.width}x{g.height}")
        mirror = arr.T
    else:
        raise ValueError(f"unknown symmetry axis {axis!r}; choose from {SYMMETRY_AXES}")
    return float(np.mean(1.0 - np.abs(arr - mirror) / _V_MAX))


def actuator_dispersion(g: Genome) -> float:
    """RMS distance of actuator voxels (codes 3, 4) from their mean position."""
    grid = g.grid()
    rows, cols = np.nonzero((grid == 3) | (grid == 4))
    pts = np.stack([rows, cols], axis=1).astype(np.float64)
    if pts.shape[0] == 0:
        raise ValueError("genome has no actuator voxels")
    centroid = pts.mean(axis=0)
    sq = ((pts - centroid) ** 2).sum(axis=1)
    return float(np.sqrt(sq.mean()))


def dispersion_ceiling(width: int, height: int) -> float:
    """Largest possible RMS centroid distance on the grid: half its diagonal."""
    return math.sqrt((width - 1) ** 2 + (height - 1) ** 2) / 2.0


def compute_all(g: Genome, symmetry_axis: str = "vertical") -> MorphoMetrics:
    """All four metrics plus normalized forms and their arithmetic-mean composite.

    Normalization: heterogeneity and symmetry are already in [0, 1];
    connectivity is divided by 4 (max degree); actuator dispersion by the grid
    half-diagonal. A degenerate ceiling (1x1 grid) normalizes to 0.
    """
    het = heterogeneity(g)
    conn = connectivity(g)
    sym = symmetry(g, axis=symmetry_axis)
    act = actuator_dispersion(g)
    ceiling = dispersion_ceiling(g.width, g.height)
    act_norm = act / ceiling if ceiling > 0.0 else 0.0
    conn_norm = conn / 4.0
    composite = (het + conn_norm + sym + act_norm) / 4.0
    return MorphoMetrics(
        heterogeneity=het,
        connectivity=conn,
        symmetry=sym,
        actuator_dispersion=act,
        het_norm=het,
        conn_norm=conn_norm,
        sym_norm=sym,
        act_norm=act_norm,
        composite=composite,
    )

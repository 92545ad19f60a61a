"""Evaluation machinery: discrete Frechet and Hausdorff curve distances,
MAE/mean-bias, the normalized difference index, and Gaussian kernel density
comparison with an overlap coefficient.

Curves are (n, 2) float arrays of ordered points. Daily yield curves are
made commensurable before geometric distances by normalize_curves, which
maps days to [1/365, 1] and yields to [0, 1] by the joint maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataDomainError, SampleSizeError, ShapeError

Array = np.ndarray

_trapz = getattr(np, "trapezoid", np.trapz)


def _as_curve(points, name: str) -> Array:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DataDomainError(f"{name} must be an (n, d) point array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DataDomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataDomainError(f"{name} contains non-finite coordinates")
    return arr


def discrete_frechet(p, q) -> float:
    """Discrete Frechet distance by the Eiter-Mannila dynamic program.

    d[i][j] = max(|p_i - q_j|, min(d[i-1][j], d[i][j-1], d[i-1][j-1])),
    i.e. the cheapest monotone coupling's worst paired distance.
    """
    p = _as_curve(p, "p")
    q = _as_curve(q, "q")
    dist = cdist(p, q)
    m, n = dist.shape
    row = np.maximum.accumulate(dist[0])
    for i in range(1, m):
        prev = row
        row = np.empty(n)
        row[0] = max(prev[0], dist[i, 0])
        # Candidates from the row above can be vectorized; the west neighbor
        # forces a sequential sweep.
        up = np.minimum(prev[1:], prev[:-1])
        di = dist[i]
        acc = row[0]
        for j in range(1, n):
            acc = max(di[j], min(up[j - 1], acc))
            row[j] = acc
    return float(row[-1])


def hausdorff(p, q) -> float:
    """Symmetric Hausdorff distance between the two point sets."""
    p = _as_curve(p, "p")
    q = _as_curve(q, "q")
    dist = cdist(p, q)
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def normalize_curves(y_a: Array, y_b: Array) -> tuple[Array, Array]:
    """Map two equal-length daily series to commensurable (x, y) curves.

    x = day/n in (1/n, 1]; y is divided by the joint maximum (floored at 1),
    so the larger series touches y = 1 exactly.
    """
    y_a = np.asarray(y_a, dtype=np.float64)
    y_b = np.asarray(y_b, dtype=np.float64)
    if y_a.shape != y_b.shape or y_a.ndim != 1:
        raise ShapeError(f"series must be 1-D and equal length: {y_a.shape} vs {y_b.shape}")
    n = y_a.shape[0]
    scale = max(float(y_a.max()), float(y_b.max()), 1.0)
    x = np.arange(1, n + 1, dtype=np.float64) / n
    return np.column_stack([x, y_a / scale]), np.column_stack([x, y_b / scale])


def error_stats(a: Array, b: Array) -> tuple[float, float]:
    """(MAE, mean bias) of a - b; |bias| <= MAE always."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 1:
        raise ShapeError(f"series must be 1-D, equal length >= 1: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.abs(diff).mean()), float(diff.mean())


def ndi(a: float, b: float) -> float:
    """Normalized difference (a - b)/(a + b) in [-1, 1]; 0 when both are 0."""
    if a < 0 or b < 0:
        raise DataDomainError(f"ndi needs nonnegative inputs, got ({a}, {b})")
    if a == 0 and b == 0:
        return 0.0
    return (a - b) / (a + b)


@dataclass(frozen=True)
class DensityCurve:
    """A kernel density estimate sampled on an ascending grid."""

    grid: Array
    density: Array

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64)
        dens = np.asarray(self.density, dtype=np.float64)
        if grid.shape != dens.shape or grid.ndim != 1:
            raise ShapeError("grid and density must be 1-D and equal length")
        if np.any(np.diff(grid) <= 0):
            raise DataDomainError("grid must be strictly ascending")
        if np.any(dens < 0):
            raise DataDomainError("density must be nonnegative")
        area = float(_trapz(dens, grid))
        if abs(area - 1.0) > 1e-3:
            raise DataDomainError(f"density integrates to {area}, expected 1 +- 1e-3")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)


def silverman_bandwidth(samples: Array) -> float:
    sd = float(np.std(samples, ddof=1))
    return 1.06 * sd * len(samples) ** (-0.2)


def kde_density(samples, n_grid: int = 256, span: tuple[float, float] | None = None) -> DensityCurve:
    """Gaussian KDE with the Silverman rule-of-thumb bandwidth.

    The grid spans [min - 3h, max + 3h] unless an explicit span is given
    (needed when two densities must share a grid). The sampled density is
    renormalized by its trapezoidal integral so the unit-area invariant
    holds regardless of grid truncation.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise SampleSizeError(f"kde needs at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataDomainError("samples contain non-finite values")
    h = silverman_bandwidth(x)
    if h <= 0:
        raise DataDomainError("degenerate spread: constant samples have no density estimate")
    if span is None:
        lo, hi = float(x.min()) - 3.0 * h, float(x.max()) + 3.0 * h
    else:
        lo, hi = span
        if not lo < hi:
            raise DataDomainError(f"span must be increasing, got ({lo}, {hi})")
    grid = np.linspace(lo, hi, int(n_grid))
    dens = np.zeros_like(grid)
    norm = 1.0 / (x.size * h * np.sqrt(2.0 * np.pi))
    for start in range(0, x.size, 4096):
        block = x[start : start + 4096]
        z = (grid[:, None] - block[None, :]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens *= norm
    area = float(_trapz(dens, grid))
    if area <= 0:
        raise DataDomainError("density integrated to zero on the requested span")
    return DensityCurve(grid=grid, density=dens / area)


def kde_pair(a, b, n_grid: int = 256) -> tuple[DensityCurve, DensityCurve]:
    """Two KDEs on one shared grid wide enough for both sample sets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    pad = 3.0 * max(silverman_bandwidth(a), silverman_bandwidth(b))
    lo = min(float(a.min()), float(b.min())) - pad
    hi = max(float(a.max()), float(b.max())) + pad
    return (
        kde_density(a, n_grid, span=(lo, hi)),
        kde_density(b, n_grid, span=(lo, hi)),
    )


def overlap(f: DensityCurve, g: DensityCurve) -> float:
    """Overlap coefficient: trapezoidal integral of min(f, g) on a shared grid."""
    if f.grid.shape != g.grid.shape or not np.array_equal(f.grid, g.grid):
        raise ShapeError("overlap requires densities on an identical grid")
    return float(_trapz(np.minimum(f.density, g.density), f.grid))

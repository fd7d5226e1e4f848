"""
How different storage rules summarise a drifting 2D stream.

The stream (see :func:`ecmem.envs.synthetic_stream`) is pushed through the
online km, dkm and lru stores, and batch k-means is run on the data seen so
far. Snapshots of the stored points are taken at fixed fractions of the
stream, and kernel density grids are built from them.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr
from scipy.stats import skewnorm

from ecmem.envs import StreamSpec, synthetic_stream
from ecmem.memory import ActionMemory, squared_distances

FRACTIONS = (0.25, 0.5, 0.75, 1.0)
ONLINE_METHODS = ("km", "dkm", "lru")
METHODS = ("kmeans",) + ONLINE_METHODS


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: List[float]
    iterations: int


def _assign(points, centroids):
    d2 = np.stack([squared_distances(points, c) for c in centroids], axis=1)
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(len(points)), labels].sum())


def batch_kmeans(points, k: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm seeded with ``k`` distinct points of the data.

    Stops when assignments stop changing or after ``max_iters`` updates.
    ``inertia[i]`` is the within-cluster sum of squares after the i-th
    assignment; an empty cluster keeps its previous centroid so the sequence
    never increases.
    """
    points = np.asarray(points, dtype=float)
    if k < 1 or k > len(points):
        raise ValueError(f"need 1 <= k <= {len(points)} points, got k={k}")
    rng = np.random.default_rng(seed)
    centroids = points[rng.choice(len(points), size=k, replace=False)].copy()
    labels, inertia = _assign(points, centroids)
    history = [inertia]
    it = 0
    while it < max_iters:
        it += 1
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        new_labels, inertia = _assign(points, centroids)
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(centroids, labels, history, it)


@dataclass
class CentroidSnapshot:
    method: str
    fraction: float
    centroids: np.ndarray
    counts: Optional[np.ndarray] = None


def _store_snapshot(method, fraction, mem: ActionMemory):
    ent = mem.entries()
    counts = ent["count"] if method in ("km", "dkm") else None
    return CentroidSnapshot(method, fraction, ent["keys"], counts)


def stream_study(
    spec: Optional[StreamSpec] = None,
    memory_size: int = 100,
    fractions: Sequence[float] = FRACTIONS,
    kmeans_iters: int = 100,
) -> List[CentroidSnapshot]:
    """Feed one stream to every method and snapshot each at ``fractions``."""
    if memory_size < 2:
        raise ValueError("memory_size must be >= 2")
    spec = spec or StreamSpec()
    stream = synthetic_stream(spec)
    marks = sorted({max(1, int(round(f * len(stream)))): f for f in fractions}.items())

    stores = {m: ActionMemory(memory_size, 2, m) for m in ONLINE_METHODS}
    snaps: List[CentroidSnapshot] = []
    seen = 0
    for stop, frac in marks:
        for t in range(seen, stop):
            for mem in stores.values():
                mem.insert(stream[t], 0.0, now=t)
        seen = stop
        km = batch_kmeans(stream[:stop], min(memory_size, stop), kmeans_iters, seed=spec.seed)
        snaps.append(CentroidSnapshot("kmeans", frac, km.centroids, np.bincount(km.labels, minlength=len(km.centroids)).astype(float)))
        for m in ONLINE_METHODS:
            snaps.append(_store_snapshot(m, frac, stores[m]))
    return snaps


def phase2_box(spec: Optional[StreamSpec] = None, mass: float = 0.9) -> Tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box holding ``mass`` of the skew-normal phase.

    Each axis gets its central ``sqrt(mass)`` quantile range, so the joint
    mass of the (independent) axes is ``mass``.
    """
    spec = spec or StreamSpec()
    tail = (1 - math.sqrt(mass)) / 2
    lo = np.array([skewnorm.ppf(tail, a, loc=l, scale=s) for a, l, s in zip(spec.shape, spec.loc, spec.scale)])
    hi = np.array([skewnorm.ppf(1 - tail, a, loc=l, scale=s) for a, l, s in zip(spec.shape, spec.loc, spec.scale)])
    return lo, hi


def fraction_inside(points, box) -> float:
    points = np.asarray(points, dtype=float)
    lo, hi = box
    inside = np.all((points >= lo) & (points <= hi), axis=1)
    return float(inside.mean())


def final_phase2_fractions(snaps: Sequence[CentroidSnapshot], spec: Optional[StreamSpec] = None) -> Dict[str, float]:
    box = phase2_box(spec)
    last = max(s.fraction for s in snaps)
    return {s.method: fraction_inside(s.centroids, box) for s in snaps if s.fraction == last}


# --------------------------------------------------------------------------
# density grids
# --------------------------------------------------------------------------


@dataclass
class DensityGrid:
    resolution: Tuple[int, int]
    bounds: Tuple[float, float, float, float]
    bandwidth: float
    values: np.ndarray = field(repr=False)

    @property
    def cell_area(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) / self.resolution[0] * (y1 - y0) / self.resolution[1]

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def centers(self):
        x0, x1, y0, y1 = self.bounds
        nx, ny = self.resolution
        xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
        return xs, ys


def scott_bandwidth(points, weights=None) -> float:
    """Scott's rule for an isotropic 2D Gaussian kernel."""
    points = np.asarray(points, dtype=float)
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    n_eff = 1.0 / np.sum(w**2)
    mean = w @ points
    var = w @ (points - mean) ** 2
    return float(np.sqrt(var.mean()) * n_eff ** (-1.0 / (points.shape[1] + 4)))


def kde_grid(
    points,
    weights=None,
    resolution: int | Tuple[int, int] = 64,
    bounds: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    bandwidth: Optional[float] = None,
) -> DensityGrid:
    """Gaussian KDE averaged over each cell of a regular lattice.

    Cell values are exact cell-mean densities (the kernel mass falling in the
    cell divided by its area), so ``values.sum() * cell_area`` equals the
    share of kernel mass inside ``bounds``. Weights are normalised, so only
    their ratios matter.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        raise ValueError("kde_grid needs at least one point")
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(points),) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    nx, ny = (resolution, resolution) if isinstance(resolution, int) else resolution
    x0, x1, y0, y1 = bounds
    if bandwidth is None:
        bandwidth = scott_bandwidth(points, w)
        if not bandwidth > 0:
            bandwidth = max((x1 - x0) / nx, (y1 - y0) / ny)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")

    ex = np.linspace(x0, x1, nx + 1)
    ey = np.linspace(y0, y1, ny + 1)
    cx = np.diff(ndtr((ex[None, :] - points[:, :1]) / bandwidth), axis=1)
    cy = np.diff(ndtr((ey[None, :] - points[:, 1:]) / bandwidth), axis=1)
    w = w / w.sum()
    grid = DensityGrid((nx, ny), tuple(bounds), float(bandwidth), np.zeros((nx, ny)))
    grid.values = (cx * w[:, None]).T @ cy / grid.cell_area
    return grid


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def write_snapshots(snaps: Sequence[CentroidSnapshot], path: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "fraction", "x", "y", "n"])
        for s in snaps:
            counts = s.counts if s.counts is not None else [""] * len(s.centroids)
            for (x, y), n in zip(s.centroids, counts):
                w.writerow([s.method, s.fraction, repr(float(x)), repr(float(y)), "" if n == "" else repr(float(n))])


def write_density(grid: DensityGrid, path: str):
    """One row per x cell, one column per y cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in grid.values:
            w.writerow([repr(float(v)) for v in row])


def run_stream_study(out_dir: str, memory_size: int = 100, seed: int = 0, resolution: int = 64):
    """Write snapshots.csv and one density_<method>.csv per method (plus the raw data)."""
    spec = StreamSpec(seed=seed)
    snaps = stream_study(spec, memory_size)
    os.makedirs(out_dir, exist_ok=True)
    write_snapshots(snaps, os.path.join(out_dir, "snapshots.csv"))
    bounds = (-0.1, 1.3, -0.1, 1.3)
    for s in snaps:
        if s.fraction == 1.0:
            write_density(kde_grid(s.centroids, resolution=resolution, bounds=bounds), os.path.join(out_dir, f"density_{s.method}.csv"))
    write_density(kde_grid(synthetic_stream(spec), resolution=resolution, bounds=bounds), os.path.join(out_dir, "density_data.csv"))
    return snaps

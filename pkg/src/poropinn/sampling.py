"""Sample generation: solution grids, splits, boundary sets, collocation.

All draws are driven by explicit integer seeds through ``numpy``'s
``default_rng``; the same seed always reproduces the same sets.  Coordinates
live in the closed unit box (space) times the unit time interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

KINDS = ("boundary_initial", "collocation", "measurement", "validation", "test")


class SizeError(ValueError):
    """Requested more points than are available."""


@dataclass
class SampleSet:
    """A labeled collection of points, optionally with solution values."""

    points: np.ndarray
    values: Optional[np.ndarray]
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sample kind {self.kind!r}")
        if (self.values is None) != (self.kind == "collocation"):
            raise ValueError(
                f"kind {self.kind!r} and values presence are inconsistent"
            )

    @property
    def n(self):
        return self.points.shape[0]

    def coords(self):
        """Coordinate columns as separate (N,) arrays."""
        return [self.points[:, j] for j in range(self.points.shape[1])]

    def to_csv(self, path, coord_names=None, value_names=None):
        d = self.points.shape[1]
        k = 0 if self.values is None else self.values.shape[1]
        coord_names = coord_names or [f"c{j}" for j in range(d)]
        value_names = value_names or [f"v{j}" for j in range(k)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(coord_names) + list(value_names))
            for i in range(self.n):
                row = [repr(c) for c in self.points[i]]
                if self.values is not None:
                    row += [repr(c) for c in self.values[i]]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, n_coords, kind):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [[float(c) for c in row] for row in reader]
        data = np.array(rows) if rows else np.empty((0, n_coords))
        points = data[:, :n_coords]
        values = None if kind == "collocation" else data[:, n_coords:]
        return cls(points, values, kind)


@dataclass(frozen=True)
class GridSpec:
    """Equidistant tensor-product grid: interval counts per axis."""

    spatial_intervals: tuple
    temporal_intervals: int

    def __post_init__(self):
        if self.temporal_intervals < 1 or any(
            n < 1 for n in self.spatial_intervals
        ):
            raise ValueError("interval counts must be >= 1")

    @property
    def n_points(self):
        n = self.temporal_intervals + 1
        for m in self.spatial_intervals:
            n *= m + 1
        return n


def default_grid(problem):
    """Grid sizes used by the reported experiments."""
    if problem.name == "diffusivity":
        return GridSpec((2559,), 99)
    return GridSpec((99, 99), 49)


def build_grid(spec, problem):
    """Exact-solution values on the full tensor-product grid."""
    axes = [np.linspace(0.0, 1.0, m + 1) for m in spec.spatial_intervals]
    axes.append(np.linspace(0.0, 1.0, spec.temporal_intervals + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    values = problem.exact_values(points)
    return SampleSet(points, values, "measurement")


def split(grid, n_train, seed):
    """Random train subset; the rest split half/half into validation/test.

    With an odd remainder the validation set gets the extra point.  The
    three sets are disjoint and together exhaust the grid.
    """
    if n_train > grid.n:
        raise SizeError(f"n_train={n_train} exceeds grid size {grid.n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(grid.n)
    train_idx = perm[:n_train]
    rest = perm[n_train:]
    n_val = (rest.size + 1) // 2
    val_idx, test_idx = rest[:n_val], rest[n_val:]

    def subset(idx, kind):
        return SampleSet(grid.points[idx], grid.values[idx], kind)

    return (
        subset(train_idx, "measurement"),
        subset(val_idx, "validation"),
        subset(test_idx, "test"),
    )


def _boundary_pieces(spatial_dim):
    """(description, measure) for the initial slab and each Dirichlet side."""
    pieces = [("initial", 1.0)]
    for axis in range(spatial_dim):
        pieces.append((("side", axis, 0.0), 1.0))
        pieces.append((("side", axis, 1.0), 1.0))
    return pieces


def _allocate(n, weights, rng):
    """Randomized rounding of n * weights to integer counts summing to n."""
    weights = np.asarray(weights, dtype=float)
    target = n * weights / weights.sum()
    counts = np.floor(target).astype(int)
    short = n - counts.sum()
    if short > 0:
        frac = target - counts
        order = rng.choice(len(weights), size=short, replace=False,
                           p=frac / frac.sum() if frac.sum() > 0 else None)
        for i in order:
            counts[i] += 1
    return counts


def boundary_initial_points(problem, n_b, seed):
    """Uniform draws from the initial slab and the Dirichlet boundary.

    Counts per piece are proportional to each piece's measure (randomized
    rounding); at least one initial point is kept whenever n_b >= 2.
    Values come from the exact solution.
    """
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    rng = np.random.default_rng(seed)
    d = problem.spatial_dim
    pieces = _boundary_pieces(d)
    counts = _allocate(n_b, [w for _, w in pieces], rng)
    if n_b >= 2 and counts[0] == 0:
        counts[int(np.argmax(counts))] -= 1
        counts[0] += 1

    blocks = []
    for (desc, _), m in zip(pieces, counts):
        if m == 0:
            continue
        block = rng.uniform(size=(m, d + 1))
        if desc == "initial":
            block[:, d] = 0.0
        else:
            _, axis, value = desc
            block[:, axis] = value
        blocks.append(block)
    points = np.concatenate(blocks, axis=0)
    values = problem.exact_values(points)
    return SampleSet(points, values, "boundary_initial")


def lhs_collocation(n, bounds, seed):
    """Latin-hypercube sample: one point in each of n strata per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = len(bounds)
    points = np.empty((n, d))
    for j, (lo, hi) in enumerate(bounds):
        cells = rng.permutation(n)
        jitter = rng.uniform(size=n)
        points[:, j] = lo + (hi - lo) * (cells + jitter) / n
    return SampleSet(points, None, "collocation")


def add_noise(values, epsilon, seed):
    """Additive Gaussian corruption scaled by each component's spread.

    Per column: x + epsilon * SD(column) * z with z standard normal and SD
    the population standard deviation, so components with different scales
    are corrupted commensurately.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    values = np.asarray(values, dtype=np.float64)
    if epsilon == 0:
        return values.copy()
    rng = np.random.default_rng(seed)
    flat = values.ndim == 1
    cols = values[:, None] if flat else values
    out = cols + epsilon * cols.std(axis=0) * rng.standard_normal(cols.shape)
    return out[:, 0] if flat else out

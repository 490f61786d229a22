"""Polynomial-spline spaces and their clamped B-spline basis."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPartitionError, OutOfDomainError


@dataclass(frozen=True)
class KnotPartition:
    """Boundary knots plus strictly increasing interior knots."""

    lower_boundary: float
    upper_boundary: float
    interior_knots: tuple = ()

    def __post_init__(self):
        lo, hi = float(self.lower_boundary), float(self.upper_boundary)
        knots = tuple(float(k) for k in self.interior_knots)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise InvalidPartitionError(
                f"need lower_boundary < upper_boundary, got [{lo}, {hi}]")
        if any(not (lo < k < hi) for k in knots):
            raise InvalidPartitionError(
                "interior knots must lie strictly inside the boundary interval")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise InvalidPartitionError("interior knots must be strictly increasing")
        object.__setattr__(self, "lower_boundary", lo)
        object.__setattr__(self, "upper_boundary", hi)
        object.__setattr__(self, "interior_knots", knots)

    @property
    def n_interior(self):
        return len(self.interior_knots)

    @classmethod
    def uniform(cls, lower, upper, n_interior):
        """Evenly spaced interior knots on ``[lower, upper]``."""
        inner = np.linspace(lower, upper, n_interior + 2)[1:-1]
        return cls(lower, upper, tuple(inner))


@dataclass(frozen=True)
class SplineBasis:
    """Order-``m`` B-spline basis on a knot partition.

    ``order`` is degree + 1 and ``dimension`` is ``M + m``. The extended
    knot vector repeats each boundary knot ``order`` times.
    """

    order: int
    partition: KnotPartition
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise InvalidPartitionError(f"spline order must be a positive integer, got {self.order}")
        object.__setattr__(self, "order", int(self.order))
        p = self.partition
        knots = np.concatenate([
            np.full(self.order, p.lower_boundary),
            np.asarray(p.interior_knots, dtype=float),
            np.full(self.order, p.upper_boundary),
        ])
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def dimension(self):
        return self.partition.n_interior + self.order

    @property
    def degree(self):
        return self.order - 1

    @property
    def domain(self):
        return self.partition.lower_boundary, self.partition.upper_boundary


def make_quantile_partition(t_values, M):
    """Partition the observed range of ``t_values`` at empirical quantiles.

    Interior knots sit at the ``k / (M + 1)`` sample quantiles (linear
    interpolation between order statistics), ``k = 1..M``. Quantiles that
    coincide with each other or with a boundary are dropped with a warning,
    so the returned partition may hold fewer than ``M`` interior knots.
    """
    t = np.asarray(t_values, dtype=float).ravel()
    if t.size == 0:
        raise InvalidPartitionError("cannot build a partition from no values")
    if not np.all(np.isfinite(t)):
        raise InvalidPartitionError("t_values contain non-finite entries")
    M = int(M)
    if M < 0:
        raise InvalidPartitionError(f"number of interior knots must be >= 0, got {M}")
    n_distinct = np.unique(t).size
    if M >= n_distinct:
        raise InvalidPartitionError(
            f"M = {M} interior knots needs more than {M} distinct values, got {n_distinct}")
    lo, hi = t.min(), t.max()
    if M == 0:
        return KnotPartition(lo, hi, ())

    probs = np.arange(1, M + 1) / (M + 1)
    raw = np.quantile(t, probs)
    inner = [k for k in np.unique(raw) if lo < k < hi]
    if len(inner) < M:
        warnings.warn(
            f"tied quantile knots collapsed: requested {M} interior knots, kept {len(inner)}",
            RuntimeWarning, stacklevel=2)
    return KnotPartition(lo, hi, tuple(inner))


def _find_spans(basis, t):
    # index s with knots[s] <= t < knots[s+1]; the right end joins the last span
    knots = basis.knots
    m = basis.order
    last = basis.dimension - 1
    spans = np.searchsorted(knots, t, side="right") - 1
    return np.clip(spans, m - 1, last)


def basis_matrix(basis, t_values):
    """Evaluate every basis function at every point.

    Returns an ``(n, q)`` array whose row ``i`` holds the ``q`` basis values
    at ``t_values[i]``. Uses the triangular Cox-de Boor scheme, so only the
    ``m`` functions supported on the point's span are computed.
    """
    t = np.atleast_1d(np.asarray(t_values, dtype=float))
    if t.ndim != 1:
        raise ValueError("t_values must be one-dimensional")
    lo, hi = basis.domain
    bad = np.flatnonzero(~((t >= lo) & (t <= hi)))
    if bad.size:
        i = int(bad[0])
        raise OutOfDomainError(
            f"t = {t[i]!r} at row {i} lies outside [{lo}, {hi}]", index=i)

    knots = basis.knots
    m = basis.order
    n = t.size
    spans = _find_spans(basis, t)

    # N[:, r] accumulates B_{span-j+r, j+1}; standard in-place recurrence
    N = np.zeros((n, m))
    N[:, 0] = 1.0
    left = np.zeros((n, m))
    right = np.zeros((n, m))
    for j in range(1, m):
        left[:, j] = t - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - t
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = N[:, r] / denom
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((n, basis.dimension))
    cols = spans[:, None] - (m - 1) + np.arange(m)[None, :]
    out[np.arange(n)[:, None], cols] = N
    return out


def evaluate_basis(basis, t):
    """All ``q`` basis values at a single point ``t``."""
    return basis_matrix(basis, [t])[0]

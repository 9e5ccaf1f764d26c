"""Instances, tours, tour length, and a small exact oracle.

City indices are 0-based throughout the library; the CLI converts to
1-based only when printing.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

BRUTE_FORCE_MAX_N = 10


class TspError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(TspError):
    pass


class OracleSizeExceeded(TspError):
    pass


@dataclass(frozen=True)
class Instance:
    """A set of city coordinates in the plane.

    coords is an (N, 2) float64 array; it is copied and frozen on
    construction, so instances are safe to share.
    """

    coords: np.ndarray
    id: str | None = None

    def __post_init__(self):
        c = np.array(self.coords, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise InvalidArgument(f"coords must be (N, 2) with N >= 1, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("coords must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def distance_matrix(self) -> np.ndarray:
        d = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((d * d).sum(axis=2))


@dataclass(frozen=True)
class Tour:
    """A permutation of city indices with cached length."""

    order: np.ndarray
    length: float

    def __post_init__(self):
        o = np.array(self.order, dtype=np.int64)
        o.setflags(write=False)
        object.__setattr__(self, "order", o)
        object.__setattr__(self, "length", float(self.length))

    @property
    def n(self) -> int:
        return self.order.shape[0]


def _check_permutation(instance: Instance, order: np.ndarray) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (instance.n,):
        raise InvalidArgument(
            f"tour has {order.shape} cities, instance has {instance.n}"
        )
    if not np.array_equal(np.sort(order), np.arange(instance.n)):
        raise InvalidArgument("tour order is not a permutation of the instance cities")
    return order


def order_length(coords: np.ndarray, order: np.ndarray) -> float:
    """Closed-tour Euclidean length of `order` over `coords`."""
    pts = coords[order]
    diffs = pts - np.roll(pts, -1, axis=0)
    return float(np.sqrt((diffs * diffs).sum(axis=1)).sum())


def tour_length(instance: Instance, tour: Tour | np.ndarray) -> float:
    """Sum of consecutive Euclidean edges, including the closing edge."""
    order = tour.order if isinstance(tour, Tour) else tour
    order = _check_permutation(instance, order)
    return order_length(instance.coords, order)


def make_tour(instance: Instance, order: np.ndarray) -> Tour:
    """Build a Tour with its length freshly computed."""
    order = _check_permutation(instance, order)
    return Tour(order=order, length=order_length(instance.coords, order))


def random_instance(n: int, rng: RngStream) -> Instance:
    """n i.i.d. uniform points in the unit square."""
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    return Instance(coords=rng.generator.random((n, 2)))


def random_tour(instance: Instance, rng: RngStream) -> Tour:
    return make_tour(instance, rng.generator.permutation(instance.n))


def brute_force_optimal(instance: Instance) -> Tour:
    """Exact optimum by enumeration with the first city pinned.

    Refuses N > 10 (9! tours is the ceiling we accept).  Ties go to the
    lexicographically smallest order, which enumeration yields for free.
    """
    n = instance.n
    if n < 3:
        raise InvalidArgument(f"need at least 3 cities, got {n}")
    if n > BRUTE_FORCE_MAX_N:
        raise OracleSizeExceeded(f"brute force capped at N={BRUTE_FORCE_MAX_N}, got {n}")
    coords = instance.coords
    best_order = None
    best_len = np.inf
    buf = np.empty(n, dtype=np.int64)
    buf[0] = 0
    for perm in itertools.permutations(range(1, n)):
        buf[1:] = perm
        ln = order_length(coords, buf)
        if ln < best_len:
            best_len = ln
            best_order = buf.copy()
    return Tour(order=best_order, length=best_len)

"""Canonicalizing preprocessing and relative-coordinate views.

Symmetry orbits (rotation, scale, translation, reflections) are collapsed to
a single representative before the points reach the network:

  - Rotation: PCA, principal axis mapped onto the 45-degree diagonal.
  - ScaleTranslate: min-max fit into the unit square, one shared scale.
  - ReflectH/V/Diag: flip only when a strict majority of points moves into
    the fixed region (lower half / left half / below the main diagonal).

Steps can run once on the initial instance or at every decoding step;
per-step is the default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Instance, InvalidArgument

DEGENERATE_EPS = 1e-12


class Step(Enum):
    ROTATION = "rotation"
    SCALE_TRANSLATE = "scale_translate"
    REFLECT_H = "reflect_h"
    REFLECT_V = "reflect_v"
    REFLECT_DIAG = "reflect_diag"


@dataclass(frozen=True)
class PreprocessConfig:
    """Ordered preprocessing steps plus the per-step/one-shot switch."""

    steps: tuple[Step, ...] = (Step.ROTATION, Step.SCALE_TRANSLATE)
    per_step: bool = True
    enabled: bool = True

    def __post_init__(self):
        steps = tuple(self.steps)
        if self.enabled and len(set(steps)) != len(steps):
            raise InvalidArgument("duplicate preprocessing steps")
        object.__setattr__(self, "steps", steps)

    @staticmethod
    def disabled() -> "PreprocessConfig":
        return PreprocessConfig(steps=(), per_step=False, enabled=False)


def scale_translate_canonical(points: np.ndarray) -> np.ndarray:
    """Translate the bounding-box corner to the origin, divide by the larger
    axis range.  Degenerate inputs are returned unchanged."""
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    scale = (pts.max(axis=0) - lo).max()
    if scale <= DEGENERATE_EPS:
        return pts.copy()
    return (pts - lo) / scale


def rotate_canonical(points: np.ndarray) -> np.ndarray:
    """Rotate so the principal axis lies on the main diagonal, then fit to
    the unit square.

    The PCA sign ambiguity is resolved by orienting the principal eigenvector
    to non-negative x (ties toward +y) before rotating it onto 45 degrees.
    """
    pts = np.asarray(points, dtype=np.float64)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    if np.abs(cov).max() <= DEGENERATE_EPS:
        return pts.copy()
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, np.argmax(evals)]
    if v[0] < 0.0 or (v[0] == 0.0 and v[1] < 0.0):
        v = -v
    phi = math.atan2(v[1], v[0])
    theta = math.pi / 4.0 - phi
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return scale_translate_canonical(centered @ rot.T)


def reflect_canonical(points: np.ndarray, which: Step) -> np.ndarray:
    """Majority-rule flip; ties (no strict majority) leave points unchanged."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if which == Step.REFLECT_H:
        outside = int((pts[:, 1] > 0.5).sum())
        if 2 * outside > n:
            out = pts.copy()
            out[:, 1] = 1.0 - out[:, 1]
            return out
    elif which == Step.REFLECT_V:
        outside = int((pts[:, 0] > 0.5).sum())
        if 2 * outside > n:
            out = pts.copy()
            out[:, 0] = 1.0 - out[:, 0]
            return out
    elif which == Step.REFLECT_DIAG:
        outside = int((pts[:, 1] > pts[:, 0]).sum())
        if 2 * outside > n:
            return pts[:, ::-1].copy()
    else:
        raise InvalidArgument(f"not a reflection step: {which}")
    return pts.copy()


def apply_steps(points: np.ndarray, steps: tuple[Step, ...]) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        return pts.copy()
    for step in steps:
        if step == Step.ROTATION:
            pts = rotate_canonical(pts)
        elif step == Step.SCALE_TRANSLATE:
            pts = scale_translate_canonical(pts)
        else:
            pts = reflect_canonical(pts, step)
    return pts


@dataclass(frozen=True)
class CanonicalView:
    """Relative-coordinate snapshot of the remaining subproblem.

    remaining_ids lists the unvisited cities plus the first and last visited
    ones; rel_coords are their preprocessed positions relative to the last
    visited city (whose row, last_row, is exactly the origin).
    """

    remaining_ids: np.ndarray
    rel_coords: np.ndarray
    first_rel: np.ndarray
    last_row: int
    first_row: int

    @property
    def size(self) -> int:
        return self.remaining_ids.shape[0]

    def candidate_mask(self) -> np.ndarray:
        """True for rows that may be chosen next (the unvisited ones)."""
        mask = np.ones(self.size, dtype=bool)
        mask[self.last_row] = False
        mask[self.first_row] = False
        return mask


def build_view(
    instance: Instance,
    visited: np.ndarray | list[int],
    config: PreprocessConfig,
) -> CanonicalView:
    """View of the subproblem after `visited` cities have been chosen.

    With t = len(visited) + 1 the view holds N - t + 2 rows for t >= 2 and
    all N rows at t = 1 (positions relative to the centroid, zero first_rel).
    With preprocessing disabled the view degrades to absolute coordinates
    over all cities, matching the no-equivariance ablation.
    """
    visited = np.asarray(visited, dtype=np.int64)
    n = instance.n
    if visited.size != np.unique(visited).size:
        raise InvalidArgument("visited contains duplicates")
    if visited.size and (visited.min() < 0 or visited.max() >= n):
        raise InvalidArgument("visited city index out of range")

    if not config.enabled:
        coords = instance.coords.copy()
        ids = np.arange(n)
        if visited.size == 0:
            first_row = last_row = 0
            first_rel = np.zeros(2)
        else:
            first_row = int(visited[0])
            last_row = int(visited[-1])
            first_rel = coords[first_row].copy()
        return CanonicalView(ids, coords, first_rel, last_row, first_row)

    if visited.size == 0:
        ids = np.arange(n)
        pts = apply_steps(instance.coords, config.steps)
        rel = pts - pts.mean(axis=0)
        return CanonicalView(ids, rel, np.zeros(2), 0, 0)

    mask = np.ones(n, dtype=bool)
    mask[visited] = False
    unvisited = np.nonzero(mask)[0]
    first, last = int(visited[0]), int(visited[-1])
    if first == last:
        ids = np.concatenate([unvisited, [last]])
    else:
        ids = np.concatenate([unvisited, [first, last]])
    if config.per_step:
        pts = apply_steps(instance.coords[ids], config.steps)
    else:
        pts = apply_steps(instance.coords, config.steps)[ids]
    last_row = ids.size - 1
    first_row = ids.size - 1 if first == last else ids.size - 2
    rel = pts - pts[last_row]
    return CanonicalView(ids, rel, rel[first_row].copy(), last_row, first_row)

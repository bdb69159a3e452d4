"""Evaluation metrics: surface point sampling, Chamfer distance, depth RMSE."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class MetricError(ValueError):
    pass


def sample_points(
    vertices: np.ndarray, faces: np.ndarray, count: int, seed: int
) -> np.ndarray:
    """Sample ``count`` points uniformly by surface area.

    Faces are chosen proportionally to area and positions drawn by uniform
    barycentric sampling; fully deterministic for a given seed.
    """
    if count < 1:
        raise MetricError("need at least one sample")
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0.0:
        raise MetricError("all faces have zero area")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas) / total
    pick = np.searchsorted(cdf, rng.random(count), side="right")
    pick = np.minimum(pick, len(areas) - 1)
    r1 = rng.random(count)
    r2 = rng.random(count)
    flip = r1 + r2 > 1.0
    r1 = np.where(flip, 1.0 - r1, r1)
    r2 = np.where(flip, 1.0 - r2, r2)
    return (
        a[pick]
        + r1[:, None] * (b[pick] - a[pick])
        + r2[:, None] * (c[pick] - a[pick])
    )


def chamfer(a: np.ndarray, b: np.ndarray, squared: bool = True) -> float:
    """Symmetric Chamfer distance between two point sets.

    Default is the squared form: ``0.5 * mean_a min_b |a-b|^2 + 0.5 * mean_b
    min_a |a-b|^2`` (magnitudes then match scores conventionally reported as
    x1e4 on unit-scale scenes).  ``squared=False`` uses plain distances.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise MetricError("chamfer requires non-empty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    if squared:
        return 0.5 * float(np.mean(d_ab**2)) + 0.5 * float(np.mean(d_ba**2))
    return 0.5 * float(np.mean(d_ab)) + 0.5 * float(np.mean(d_ba))


def depth_rmse(
    pred_depth: np.ndarray, gt_depth: np.ndarray, mask: np.ndarray
) -> float:
    """Root mean squared depth difference over masked pixels with valid
    (nonzero) ground truth, in the depth maps' units (mm by convention)."""
    pred_depth = np.asarray(pred_depth, dtype=np.float64)
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    if pred_depth.shape != gt_depth.shape:
        raise MetricError("depth map shapes differ")
    valid = (np.asarray(mask) > 0.5) & (gt_depth > 0.0)
    if not np.any(valid):
        raise MetricError("no valid pixels for depth RMSE")
    diff = pred_depth[valid] - gt_depth[valid]
    return float(np.sqrt(np.mean(diff**2)))

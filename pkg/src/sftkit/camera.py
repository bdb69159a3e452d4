"""Pinhole camera model.

Convention: +z forward, +x right, +y down, pixel origin at the top-left
corner, pixel (row r, col c) centered at (c + 0.5, r + 0.5).  Extrinsics are
never needed; all geometry lives in the camera frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NEAR_PLANE = 1e-6


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_json(self, path: str | Path) -> None:
        data = {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }
        Path(path).write_text(json.dumps(data, indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "CameraIntrinsics":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"camera file missing: {path}")
        except json.JSONDecodeError as exc:
            raise ValueError(f"camera file unreadable: {path}: {exc}")
        try:
            return cls(
                fx=float(data["fx"]),
                fy=float(data["fy"]),
                cx=float(data["cx"]),
                cy=float(data["cy"]),
                width=int(data["width"]),
                height=int(data["height"]),
            )
        except KeyError as exc:
            raise ValueError(f"camera file {path} missing field {exc}")


def project(points: np.ndarray, camera: CameraIntrinsics, near: float = NEAR_PLANE):
    """Perspective projection of camera-frame points.

    Returns ``(uv, z)`` with ``uv[:, 0] = fx*x/z + cx`` and
    ``uv[:, 1] = fy*y/z + cy`` in pixels.  Any point with ``z <= near`` is an
    error (named by vertex index): the projective map is undefined there.
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[:, 2]
    behind = z <= near
    if np.any(behind):
        idx = int(np.argmax(behind))
        raise ProjectionError(f"vertex behind camera: index {idx}, z={z[idx]:.3g}")
    u = camera.fx * points[:, 0] / z + camera.cx
    v = camera.fy * points[:, 1] / z + camera.cy
    return np.stack([u, v], axis=1), z.copy()

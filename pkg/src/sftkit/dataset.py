"""Sequence datasets on disk.

Layout of a sequence directory::

    template.obj  texture.png  camera.json
    frames/0001.png ...        masks/0001.png ...
    depth/0001.png ...         (optional, 16-bit PNG, millimeters)
    gt_points/0001.ply ...     (optional, ASCII point clouds)
    gt_mesh/0001.obj ...       (optional, ground-truth geometry)

Synthetic and real data share this one loader.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .camera import CameraIntrinsics
from .mesh import TemplateMesh, load_template, save_obj


class DatasetError(ValueError):
    pass


@dataclass
class FrameObservation:
    """One observed video frame: RGB in [0, 1], binary mask as float, and
    optional evaluation-only ground truth."""

    rgb: np.ndarray
    mask: np.ndarray
    depth: np.ndarray | None = None        # millimeters, 0 = invalid
    gt_points: np.ndarray | None = None


@dataclass
class SequenceDataset:
    template: TemplateMesh
    camera: CameraIntrinsics
    frames: list
    name: str = ""
    root: Path | None = None
    gt_vertices: list | None = field(default=None, repr=False)

    @property
    def frame_count(self) -> int:
        return len(self.frames)


def load_sequence(directory: str | Path) -> SequenceDataset:
    """Load and validate a sequence directory; every error names the file."""
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"sequence directory missing: {root}")
    template = load_template(root / "template.obj", root / "texture.png")
    camera = CameraIntrinsics.from_json(root / "camera.json")

    frame_files = _numbered(root / "frames", "*.png")
    if not frame_files:
        raise DatasetError(f"no frames found under {root / 'frames'}")
    masks_dir = root / "masks"
    if not masks_dir.is_dir():
        raise DatasetError(
            f"masks directory missing: {masks_dir}; silhouettes are required "
            "inputs - generate them with an external segmentation tool first"
        )
    mask_files = _numbered(masks_dir, "*.png")
    if len(mask_files) != len(frame_files):
        raise DatasetError(
            f"frame/mask count mismatch: {len(frame_files)} frames vs "
            f"{len(mask_files)} masks under {root}"
        )
    depth_files = _numbered(root / "depth", "*.png")
    if depth_files and len(depth_files) != len(frame_files):
        raise DatasetError(f"depth map count mismatch under {root / 'depth'}")
    point_files = _numbered(root / "gt_points", "*.ply")
    if point_files and len(point_files) != len(frame_files):
        raise DatasetError(f"point cloud count mismatch under {root / 'gt_points'}")

    frames = []
    for i, fpath in enumerate(frame_files):
        rgb = imageio.load_rgb(fpath)
        if rgb.shape[0] != camera.height or rgb.shape[1] != camera.width:
            raise DatasetError(
                f"{fpath}: size {rgb.shape[1]}x{rgb.shape[0]} does not match "
                f"camera.json ({camera.width}x{camera.height})"
            )
        mask = imageio.load_mask(mask_files[i])
        if mask.shape != rgb.shape[:2]:
            raise DatasetError(f"{mask_files[i]}: mask size differs from frame")
        depth = imageio.load_depth(depth_files[i]) if depth_files else None
        pts = imageio.load_ply(point_files[i]) if point_files else None
        frames.append(FrameObservation(rgb=rgb, mask=mask, depth=depth, gt_points=pts))

    return SequenceDataset(
        template=template, camera=camera, frames=frames, name=root.name, root=root
    )


def write_dataset(
    directory: str | Path,
    template: TemplateMesh,
    camera: CameraIntrinsics,
    frames: list,
    gt_vertices: list | None = None,
) -> Path:
    """Write a sequence in the standard layout (used by the generator)."""
    root = Path(directory)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    save_obj(root / "template.obj", template)
    imageio.save_rgb(root / "texture.png", template.texture)
    camera.to_json(root / "camera.json")
    has_depth = any(f.depth is not None for f in frames)
    has_points = any(f.gt_points is not None for f in frames)
    if has_depth:
        (root / "depth").mkdir(exist_ok=True)
    if has_points:
        (root / "gt_points").mkdir(exist_ok=True)
    if gt_vertices is not None:
        (root / "gt_mesh").mkdir(exist_ok=True)
    for i, frame in enumerate(frames, start=1):
        imageio.save_rgb(root / "frames" / f"{i:04d}.png", frame.rgb)
        imageio.save_mask(root / "masks" / f"{i:04d}.png", frame.mask)
        if frame.depth is not None:
            imageio.save_depth(root / "depth" / f"{i:04d}.png", frame.depth)
        if frame.gt_points is not None:
            imageio.save_ply(root / "gt_points" / f"{i:04d}.ply", frame.gt_points)
        if gt_vertices is not None:
            save_obj(root / "gt_mesh" / f"{i:04d}.obj", template, gt_vertices[i - 1])
    return root


def _numbered(directory: Path, pattern: str) -> list:
    if not directory.is_dir():
        return []
    return sorted(directory.glob(pattern))

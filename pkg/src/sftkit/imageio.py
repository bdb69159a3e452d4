"""PNG and PLY file helpers.

Frames and textures are 8-bit RGB PNG, masks are 8-bit single-channel PNG
(thresholded at 0.5 on load, kept as float), depth maps are 16-bit PNG in
millimeters, point clouds are ASCII PLY.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_rgb(path: str | Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def load_rgb(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    except FileNotFoundError:
        raise FileNotFoundError(f"image file missing: {path}")
    return arr / 255.0


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    arr = np.clip(np.asarray(mask), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)


def load_mask(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise FileNotFoundError(f"mask file missing: {path}")
    return (arr >= 0.5).astype(np.float64)


def save_depth(path: str | Path, depth_mm: np.ndarray) -> None:
    arr = np.clip(np.round(np.asarray(depth_mm)), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def load_depth(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img, dtype=np.float64)
    except FileNotFoundError:
        raise FileNotFoundError(f"depth file missing: {path}")
    return arr


def save_ply(path: str | Path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {points.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    lines.extend(f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in points)
    Path(path).write_text("\n".join(lines) + "\n")


def load_ply(path: str | Path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"point cloud file missing: {path}")
    lines = text.splitlines()
    try:
        end = lines.index("end_header")
    except ValueError:
        raise ValueError(f"not an ASCII PLY file: {path}")
    pts = [[float(x) for x in line.split()[:3]] for line in lines[end + 1 :] if line.strip()]
    return np.array(pts, dtype=np.float64)

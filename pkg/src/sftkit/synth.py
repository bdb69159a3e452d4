"""Synthetic ground-truth sequences: a deforming textured sheet rendered by
the same forward model the reconstruction uses (a deliberate inverse-crime
setup so end-to-end tests isolate optimization correctness).

Observations are quantized exactly as the on-disk formats store them (8-bit
RGB, integer-millimeter depth), so a write/load round trip is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, project
from .dataset import FrameObservation, SequenceDataset, write_dataset
from .imageio import load_rgb
from .mesh import build_template
from .metrics import sample_points
from .render import rasterize

# Evaluation point clouds are sampled with this base seed both here and in
# the evaluator, so a perfect reconstruction scores exactly zero.
EVAL_POINT_SEED = 9000


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    grid_resolution: int = 16           # vertices per side
    sheet_size: float = 1.0             # scene units
    deformation: str = "sine-bend"      # sine-bend | corner-fold | compound
    amplitude: float = 0.1
    frequency: float = 1.0
    frame_count: int = 10
    camera_distance: float = 2.0
    image_size: int = 128
    texture_kind: str = "checkerboard"  # checkerboard | noise | image
    texture_file: str | None = None
    texture_cells: int = 8
    texture_resolution: int = 128
    translation_velocity: tuple = (0.0, 0.0, 0.0)   # scene units per frame
    brightness_ramp: float = 0.0        # fractional gain reached at the last frame
    base_curvature: float = 0.0         # static bow of the template (scene units)
    gt_point_count: int = 2048
    silhouette_softness: float = 0.3
    quantize: bool = True               # 8-bit frames/integer-mm depth (disk-exact)
    seed: int = 0

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ScenarioError("grid_resolution must be >= 2")
        if self.frame_count < 1:
            raise ScenarioError("frame_count must be >= 1")
        if self.amplitude < 0.0:
            raise ScenarioError("amplitude must be nonnegative")
        if self.deformation not in ("sine-bend", "corner-fold", "compound"):
            raise ScenarioError(f"unknown deformation family {self.deformation!r}")
        if self.texture_kind not in ("checkerboard", "noise", "image"):
            raise ScenarioError(f"unknown texture kind {self.texture_kind!r}")


def generate_sequence(config: ScenarioConfig) -> SequenceDataset:
    """Template plus analytically deformed, rendered frames with exact masks,
    depth maps and ground-truth point clouds."""
    template = _build_sheet(config)
    camera = _camera_for(config)

    gt_vertices = []
    frames = []
    for t in range(1, config.frame_count + 1):
        verts = deformed_vertices(config, template.vertices, t)
        _check_in_frame(verts, camera, config)
        out = rasterize(verts, template, camera, config.silhouette_softness)
        rgb = out.rgb.value
        if config.brightness_ramp != 0.0:
            gain = 1.0 + config.brightness_ramp * t / config.frame_count
            rgb = np.clip(rgb * gain, 0.0, 1.0)
        if config.quantize:
            rgb = _quantize_u8(rgb)
        mask = out.hard_coverage
        depth_mm = np.round(out.depth * 1000.0) if config.quantize else out.depth * 1000.0
        pts = sample_points(
            verts, template.faces, config.gt_point_count, EVAL_POINT_SEED + t
        )
        frames.append(
            FrameObservation(rgb=rgb, mask=mask, depth=depth_mm, gt_points=pts)
        )
        gt_vertices.append(verts)

    return SequenceDataset(
        template=template,
        camera=camera,
        frames=frames,
        name=f"synthetic-{config.deformation}",
        gt_vertices=gt_vertices,
    )


def generate_dataset(config: ScenarioConfig, directory) -> SequenceDataset:
    """Generate and also write the sequence in the standard on-disk layout."""
    seq = generate_sequence(config)
    write_dataset(directory, seq.template, seq.camera, seq.frames, seq.gt_vertices)
    return seq


def deformed_vertices(config: ScenarioConfig, x0: np.ndarray, t: int) -> np.ndarray:
    """Analytic deformation at frame t (1-based); t=0 is the template."""
    s = t / config.frame_count
    uc = x0[:, 0] / config.sheet_size + 0.5
    vc = x0[:, 1] / config.sheet_size + 0.5
    verts = x0.copy()
    a = config.amplitude
    f = config.frequency
    if config.deformation == "sine-bend":
        verts[:, 2] -= a * s * np.sin(2.0 * np.pi * f * uc)
    elif config.deformation == "corner-fold":
        r = np.hypot(uc - 1.0, vc - 1.0)
        verts[:, 2] -= a * s * np.maximum(0.0, 1.0 - r / 0.75) ** 2
    else:  # compound
        verts[:, 2] -= 0.6 * a * s * np.sin(2.0 * np.pi * f * uc)
        r = np.hypot(uc - 1.0, vc - 1.0)
        verts[:, 2] -= 0.4 * a * s * np.maximum(0.0, 1.0 - r / 0.75) ** 2
        verts[:, 0] += 0.15 * a * s * np.sin(np.pi * vc)
    verts += np.asarray(config.translation_velocity, dtype=np.float64) * t
    return verts


def _build_sheet(config: ScenarioConfig):
    m = config.grid_resolution
    size = config.sheet_size
    lin = (np.arange(m) / (m - 1) - 0.5) * size
    xs, ys = np.meshgrid(lin, lin, indexing="xy")
    z = np.full(m * m, config.camera_distance)
    if config.base_curvature:
        # A gentle static bow: real templates are never perfectly planar, and
        # planar neighborhoods make the inextensibility term vanish.
        uc = xs.ravel() / size + 0.5
        vc = ys.ravel() / size + 0.5
        z = z - config.base_curvature * np.sin(np.pi * uc) * np.sin(np.pi * vc)
    verts = np.stack([xs.ravel(), ys.ravel(), z], axis=1)
    faces = []
    for i in range(m - 1):
        for j in range(m - 1):
            a = i * m + j
            b = i * m + j + 1
            c = (i + 1) * m + j
            d = (i + 1) * m + j + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    faces = np.array(faces, dtype=np.int32)
    uu = np.arange(m) / (m - 1)
    uv_vertex = np.stack(
        [np.tile(uu, m), 1.0 - np.repeat(uu, m)], axis=1
    )  # v flipped: OBJ texture origin is bottom-left
    face_uvs = uv_vertex[faces]
    texture = _make_texture(config)
    return build_template(verts, faces, face_uvs, texture)


def _make_texture(config: ScenarioConfig) -> np.ndarray:
    """Texture in [0,1], pre-quantized to 8 bits so the in-memory template is
    exactly what the on-disk PNG stores."""
    n = config.texture_resolution
    if config.texture_kind == "image":
        if not config.texture_file:
            raise ScenarioError("texture_kind 'image' needs texture_file")
        return load_rgb(config.texture_file)
    rng = np.random.default_rng(config.seed)
    if config.texture_kind == "noise":
        coarse = rng.random((8, 8, 3))
        return _quantize_u8(_bilinear_upscale(coarse, n))
    # Checkerboard of alternating dark/light cells.  Each cell gets its own
    # deterministic tint: a two-tone checker is periodic, so a surface can
    # slide by whole cells without changing the image; the tints keep cells
    # identifiable while preserving the checker structure.
    cells = config.texture_cells
    idx = np.arange(n) * cells // n
    checker = (idx[:, None] + idx[None, :]) % 2
    dark = np.array([0.15, 0.2, 0.45])
    light = np.array([0.9, 0.85, 0.35])
    tex = np.where(checker[:, :, None] == 0, dark, light)
    tint = 0.55 + 0.45 * rng.random((cells, cells, 3))
    tex = tex * tint[idx[:, None], idx[None, :]]
    return _quantize_u8(tex)


def _bilinear_upscale(img: np.ndarray, n: int) -> np.ndarray:
    src = img.shape[0]
    pos = np.linspace(0.0, src - 1.0, n)
    i0 = np.clip(np.floor(pos).astype(int), 0, src - 2)
    frac = pos - i0
    rows = (
        img[i0] * (1.0 - frac)[:, None, None] + img[i0 + 1] * frac[:, None, None]
    )
    cols = (
        rows[:, i0] * (1.0 - frac)[None, :, None]
        + rows[:, i0 + 1] * frac[None, :, None]
    )
    return cols


def _camera_for(config: ScenarioConfig) -> CameraIntrinsics:
    n = config.image_size
    # Sheet spans ~78% of the image at the template distance; bending toward
    # the camera enlarges it, so keep headroom up to the generator's margin
    # check.  A fuller frame gives the vision losses more informative pixels.
    focal = 0.78 * n * config.camera_distance / config.sheet_size
    return CameraIntrinsics(
        fx=focal, fy=focal, cx=n / 2.0, cy=n / 2.0, width=n, height=n
    )


def _check_in_frame(verts: np.ndarray, camera: CameraIntrinsics, config: ScenarioConfig) -> None:
    uv, _ = project(verts, camera)
    margin = 1.0
    if (
        uv[:, 0].min() < margin
        or uv[:, 0].max() > camera.width - margin
        or uv[:, 1].min() < margin
        or uv[:, 1].max() > camera.height - margin
    ):
        spread = max(
            np.abs(uv[:, 0] - camera.cx).max() / (camera.width / 2 - margin),
            np.abs(uv[:, 1] - camera.cy).max() / (camera.height / 2 - margin),
        )
        suggested = config.camera_distance * float(spread) * 1.1
        raise ScenarioError(
            "deformed sheet leaves the frame; increase camera_distance to "
            f"about {suggested:.3g}"
        )


def _quantize_u8(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(x, 0.0, 1.0) * 255.0) / 255.0

import numpy as np
import pytest

from sftkit.mesh import build_template


def make_grid_template(m=6, size=1.0, distance=2.0, texture=None, bend=0.0):
    """Small sheet template used across tests; optionally pre-bent in z."""
    lin = (np.arange(m) / (m - 1) - 0.5) * size
    xs, ys = np.meshgrid(lin, lin, indexing="xy")
    z = np.full(m * m, float(distance))
    if bend:
        z = z - bend * np.sin(np.pi * (xs.ravel() / size + 0.5))
    verts = np.stack([xs.ravel(), ys.ravel(), z], axis=1)
    faces = []
    for i in range(m - 1):
        for j in range(m - 1):
            a, b = i * m + j, i * m + j + 1
            c, d = (i + 1) * m + j, (i + 1) * m + j + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    faces = np.array(faces, dtype=np.int32)
    uu = np.arange(m) / (m - 1)
    uv_vertex = np.stack([np.tile(uu, m), 1.0 - np.repeat(uu, m)], axis=1)
    if texture is None:
        rng = np.random.default_rng(0)
        coarse = rng.random((4, 4, 3)) * 0.8 + 0.1
        texture = _upscale(coarse, 32)
    return build_template(verts, faces, uv_vertex[faces], texture)


def _upscale(img, n):
    src = img.shape[0]
    pos = np.linspace(0.0, src - 1.0, n)
    i0 = np.clip(np.floor(pos).astype(int), 0, src - 2)
    frac = pos - i0
    rows = img[i0] * (1 - frac)[:, None, None] + img[i0 + 1] * frac[:, None, None]
    return rows[:, i0] * (1 - frac)[None, :, None] + rows[:, i0 + 1] * frac[None, :, None]


def random_rotation(rng):
    """Uniform-ish random rotation from QR decomposition."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

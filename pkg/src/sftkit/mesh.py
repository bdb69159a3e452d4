"""Textured triangle-mesh template: loading, neighborhoods, eigen-structure.

A template is immutable after construction.  Besides raw geometry it carries
the per-vertex 1-ring neighborhoods, the eigenvalues of each vertex's
template covariance matrix (the local-rigidity reference used by the
inextensibility regularizer), and the median edge length used as the mesh
scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import eigen3

ZERO_AREA_EPS = 1e-12


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TemplateMesh:
    """Geometry, connectivity, texture and precomputed local statistics.

    ``neighborhoods[v]`` is the sorted 1-ring of vertex ``v`` (center vertex
    excluded).  Covariance neighborhoods additionally include the center; the
    padded index/mask arrays below encode exactly that set for vectorized
    gathers.
    """

    vertices: np.ndarray          # (V, 3) float64
    faces: np.ndarray             # (F, 3) int32
    face_uvs: np.ndarray          # (F, 3, 2) float64 in [0, 1]^2
    texture: np.ndarray           # (th, tw, 3) float64 in [0, 1]
    neighborhoods: list = field(repr=False)   # V arrays of ring indices
    lambda0: np.ndarray           # (V, 3) descending eigenvalues
    delta_hat: float              # median edge length
    cov_index: np.ndarray = field(repr=False)  # (V, N) padded covariance members
    cov_mask: np.ndarray = field(repr=False)   # (V, N) float 0/1
    cov_counts: np.ndarray = field(repr=False)  # (V,) float
    border_edges: np.ndarray = field(repr=False)  # (E, 2) int32, mesh boundary

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def with_vertices(self, vertices: np.ndarray) -> "TemplateMesh":
        """Same connectivity/texture with replaced geometry; the reference
        eigen-structure and scale stay frozen to the original template."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise MeshError("vertex array shape mismatch")
        return TemplateMesh(
            vertices=vertices,
            faces=self.faces,
            face_uvs=self.face_uvs,
            texture=self.texture,
            neighborhoods=self.neighborhoods,
            lambda0=self.lambda0,
            delta_hat=self.delta_hat,
            cov_index=self.cov_index,
            cov_mask=self.cov_mask,
            cov_counts=self.cov_counts,
            border_edges=self.border_edges,
        )


def build_template(
    vertices: np.ndarray,
    faces: np.ndarray,
    face_uvs: np.ndarray,
    texture: np.ndarray,
) -> TemplateMesh:
    """Validate raw mesh data and precompute neighborhoods, eigenvalues and
    the median edge length."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    face_uvs = np.ascontiguousarray(face_uvs, dtype=np.float64)
    texture = np.ascontiguousarray(texture, dtype=np.float64)

    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError("vertices must be (V, 3)")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise MeshError("faces must be (F, 3) triangles")
    nv = vertices.shape[0]
    if faces.size and (faces.min() < 0 or faces.max() >= nv):
        raise MeshError("face index out of range")
    if face_uvs.shape != (faces.shape[0], 3, 2):
        raise MeshError("face_uvs must be (F, 3, 2)")
    if np.any(face_uvs < -1e-9) or np.any(face_uvs > 1.0 + 1e-9):
        raise MeshError("UV coordinates must lie in [0, 1]^2")
    if texture.ndim != 3 or texture.shape[2] != 3:
        raise MeshError("texture must be (H, W, 3) RGB")

    _reject_degenerate_faces(vertices, faces)
    _reject_non_manifold(faces)

    neighborhoods = _one_rings(faces, nv)
    for v, ring in enumerate(neighborhoods):
        if len(ring) < 2:
            raise MeshError(f"vertex {v} has fewer than 2 neighbors")

    cov_index, cov_mask, cov_counts = _padded_cov_members(neighborhoods)
    lambda0 = _template_eigen(vertices, cov_index, cov_mask, cov_counts)
    delta_hat = _median_edge_length(vertices, faces)
    if delta_hat <= 0.0:
        raise MeshError("degenerate mesh: median edge length is zero")

    return TemplateMesh(
        vertices=vertices,
        faces=faces,
        face_uvs=face_uvs,
        texture=texture,
        neighborhoods=neighborhoods,
        lambda0=lambda0,
        delta_hat=delta_hat,
        cov_index=cov_index,
        cov_mask=cov_mask,
        cov_counts=cov_counts,
        border_edges=_border_edges(faces),
    )


def load_template(mesh_file: str | Path, texture_file: str | Path) -> TemplateMesh:
    """Load a Wavefront OBJ (``v``, ``vt``, ``f v/vt``) plus a PNG texture.

    Polygonal faces are fan-triangulated.  Faces without texture coordinates
    make the template unusable for rendering and are rejected.
    """
    from .imageio import load_rgb

    mesh_file = Path(mesh_file)
    verts, uvs, face_v, face_vt = parse_obj(mesh_file)
    if not face_v:
        raise MeshError(f"{mesh_file}: no faces found")
    for i, vt in enumerate(face_vt):
        if any(j < 0 for j in vt):
            raise MeshError(f"{mesh_file}: template not textured (face {i} has no UVs)")
    faces = np.array(face_v, dtype=np.int32)
    face_uvs = np.array([[uvs[j] for j in vt] for vt in face_vt], dtype=np.float64)
    texture = load_rgb(texture_file)
    return build_template(np.array(verts), faces, face_uvs, texture)


def parse_obj(path: Path):
    """Minimal OBJ parser returning vertices, uv table and per-face index
    triples (vertex and uv).  Quadrilaterals and larger polygons are split
    into a triangle fan."""
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    face_v: list[list[int]] = []
    face_vt: list[list[int]] = []
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"mesh file missing: {path}")
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            uvs.append([float(parts[1]), float(parts[2])])
        elif tag == "f":
            corners = []
            for token in parts[1:]:
                fields = token.split("/")
                vi = int(fields[0])
                ti = int(fields[1]) if len(fields) > 1 and fields[1] else 0
                # OBJ indices are 1-based; negatives count from the end.
                vi = vi - 1 if vi > 0 else len(verts) + vi
                ti = ti - 1 if ti > 0 else (len(uvs) + ti if ti < 0 else -1)
                corners.append((vi, ti))
            for k in range(1, len(corners) - 1):
                face_v.append([corners[0][0], corners[k][0], corners[k + 1][0]])
                face_vt.append([corners[0][1], corners[k][1], corners[k + 1][1]])
    return verts, uvs, face_v, face_vt


def save_obj(path: str | Path, mesh: TemplateMesh, vertices: np.ndarray | None = None) -> None:
    """Write an OBJ with the template's UV/face blocks and the given vertex
    positions (connectivity never changes; only vertices move).  Vertices use
    shortest round-trip float formatting, so a reload is bit-exact."""
    vertices = mesh.vertices if vertices is None else np.asarray(vertices)
    lines = [
        f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in vertices
    ]
    uv_table: dict[tuple[float, float], int] = {}
    uv_idx = np.empty((mesh.num_faces, 3), dtype=np.int64)
    for f in range(mesh.num_faces):
        for k in range(3):
            key = (float(mesh.face_uvs[f, k, 0]), float(mesh.face_uvs[f, k, 1]))
            if key not in uv_table:
                uv_table[key] = len(uv_table)
            uv_idx[f, k] = uv_table[key]
    lines.extend(f"vt {u:.8f} {v:.8f}" for u, v in uv_table)
    for f in range(mesh.num_faces):
        a, b, c = (int(i) + 1 for i in mesh.faces[f])
        ta, tb, tc = (int(i) + 1 for i in uv_idx[f])
        lines.append(f"f {a}/{ta} {b}/{tb} {c}/{tc}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Local statistics
# ---------------------------------------------------------------------------


def vertex_covariance(points: np.ndarray, mean: np.ndarray | None = None) -> np.ndarray:
    """Covariance of a vertex neighborhood: ``(1/n) sum (x - mean)(x - mean)^T``.

    ``mean`` defaults to the neighborhood centroid.  Fewer than two points
    give no spread information and are rejected.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 2:
        raise MeshError("degenerate neighborhood: need at least 2 points")
    center = points.mean(axis=0) if mean is None else np.asarray(mean, dtype=np.float64)
    centered = points - center
    return centered.T @ centered / points.shape[0]


def template_eigen(mesh: TemplateMesh) -> np.ndarray:
    """Eigenvalues (descending) of every vertex's covariance matrix."""
    return _template_eigen(mesh.vertices, mesh.cov_index, mesh.cov_mask, mesh.cov_counts)


def covariance_batch(
    vertices: np.ndarray,
    cov_index: np.ndarray,
    cov_mask: np.ndarray,
    cov_counts: np.ndarray,
) -> np.ndarray:
    """(V, 3, 3) covariance matrices from padded neighborhood gathers.

    Arithmetic mirrors the differentiable path in the loss module operation
    by operation, so the reference eigenvalues match a recomputation at the
    identity deformation exactly.
    """
    inv = 1.0 / cov_counts
    pts = vertices[cov_index]                      # (V, N, 3)
    w = cov_mask[:, :, None]
    mean = (pts * w).sum(axis=1) * inv[:, None]
    diffs = (pts - mean[:, None, :]) * w
    return np.einsum("vnd,vne->vde", diffs, diffs) * inv[:, None, None]


def _template_eigen(vertices, cov_index, cov_mask, cov_counts) -> np.ndarray:
    cov = covariance_batch(vertices, cov_index, cov_mask, cov_counts)
    return eigen3.sym_eigvals3(cov)


def _one_rings(faces: np.ndarray, nv: int) -> list:
    rings = [set() for _ in range(nv)]
    for a, b, c in faces:
        rings[a].update((b, c))
        rings[b].update((a, c))
        rings[c].update((a, b))
    return [np.array(sorted(r), dtype=np.int64) for r in rings]


def _padded_cov_members(neighborhoods: list):
    """Covariance membership = ring plus the center vertex itself; including
    the center keeps 2-neighbor boundary vertices well conditioned."""
    nv = len(neighborhoods)
    width = max(len(r) for r in neighborhoods) + 1
    index = np.zeros((nv, width), dtype=np.int64)
    mask = np.zeros((nv, width), dtype=np.float64)
    for v, ring in enumerate(neighborhoods):
        members = np.concatenate([[v], ring])
        index[v, : len(members)] = members
        mask[v, : len(members)] = 1.0
    counts = mask.sum(axis=1)
    return index, mask, counts


def _edge_set(faces: np.ndarray):
    edges = set()
    for a, b, c in faces:
        for i, j in ((a, b), (b, c), (c, a)):
            edges.add((min(i, j), max(i, j)))
    return edges


def _median_edge_length(vertices: np.ndarray, faces: np.ndarray) -> float:
    edges = np.array(sorted(_edge_set(faces)), dtype=np.int64)
    lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    return float(np.median(lengths))


def _reject_degenerate_faces(vertices: np.ndarray, faces: np.ndarray) -> None:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    scale = max(float(np.abs(vertices).max()), 1.0)
    bad = area2 <= ZERO_AREA_EPS * scale * scale
    if np.any(bad):
        raise MeshError(f"degenerate (zero-area) face rejected: index {int(np.argmax(bad))}")


def _border_edges(faces: np.ndarray) -> np.ndarray:
    """Undirected edges referenced by exactly one face (the mesh boundary)."""
    counts: dict = {}
    for a, b, c in faces:
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(int(i), int(j)), max(int(i), int(j)))
            counts[key] = counts.get(key, 0) + 1
    border = sorted(k for k, n in counts.items() if n == 1)
    return np.array(border, dtype=np.int32).reshape(-1, 2)


def _reject_non_manifold(faces: np.ndarray) -> None:
    counts: dict[tuple[int, int], int] = {}
    for fi, (a, b, c) in enumerate(faces):
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(int(i), int(j)), max(int(i), int(j)))
            counts[key] = counts.get(key, 0) + 1
            if counts[key] > 2:
                raise MeshError(f"non-manifold edge {key} rejected: face index {fi}")

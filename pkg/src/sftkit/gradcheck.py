"""Randomized gradient validation across the full pipeline.

Five check families on small randomized scenes:

* ``rgb``      - hard-raster RGB loss w.r.t. vertex coordinates, with pixels
  inside a 1-px band around visibility discontinuities excluded (visibility
  is held fixed by design, so finite differences disagree exactly there).
* ``silhouette`` - soft-coverage loss w.r.t. vertex coordinates.
* ``filters``  - blur/Sobel linear operators w.r.t. image entries.
* ``inextensibility`` - regularizer w.r.t. vertex coordinates.
* ``network``  - full pipeline loss w.r.t. MLP parameters.

Adaptive data-loss weights are constants during differentiation, so checked
programs freeze them at the base point; that is the function whose gradient
the optimizer actually follows.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import abs_, constant, finite_difference_check, mean_, sum_
from .camera import CameraIntrinsics
from .losses import LossConfig, adaptive_weight, inextensibility_loss
from .mesh import build_template
from .network import DeformationState, NetworkConfig, forward
from .render import gaussian_blur, rasterize, sobel
from .synth import _bilinear_upscale

RENDER_TOL = 5e-3
NUMERIC_TOL = 1e-4
FAMILIES = ("rgb", "silhouette", "filters", "inextensibility", "network")


@dataclass
class FamilyResult:
    name: str
    tol: float
    max_rel_error: float = 0.0
    n_checked: int = 0
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def absorb(self, report) -> None:
        self.max_rel_error = max(self.max_rel_error, report.max_rel_error)
        self.n_checked += report.n_checked
        self.failures += len(report.failures)


@dataclass
class GradcheckResult:
    families: dict = field(default_factory=dict)
    scenes: int = 0
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.families.values())

    def lines(self):
        out = []
        for f in self.families.values():
            mark = "pass" if f.passed else "FAIL"
            out.append(
                f"[{mark}] {f.name:16s} max rel error {f.max_rel_error:.3e} "
                f"(tol {f.tol:.0e}, {f.n_checked} coords)"
            )
        out.append(
            f"{'all checks passed' if self.passed else 'GRADCHECK FAILED'} "
            f"on {self.scenes} scenes in {self.seconds:.1f}s"
        )
        return out


@dataclass
class _Scene:
    mesh: object
    camera: CameraIntrinsics
    xt: np.ndarray
    ref_rgb: np.ndarray
    ref_mask: np.ndarray


def _make_scene(rng: np.random.Generator, size: int) -> _Scene:
    m = int(rng.integers(6, 9))
    lin = np.linspace(-0.5, 0.5, m)
    xs, ys = np.meshgrid(lin, lin, indexing="xy")
    lat = np.stack([xs.ravel(), ys.ravel()], axis=1)
    dist = 2.0 + 0.4 * rng.random()
    # General position: rotate the sheet in plane and jitter the principal
    # point so no mesh edge aligns exactly with the pixel lattice (exact
    # alignments put pixel centers on visibility kinks and poison the FD).
    theta = np.deg2rad(4.0 + 10.0 * rng.random())
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    shift = 0.05 * (rng.random(2) - 0.5)

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
    # Smooth random texture: bilinear sampling kinks stay negligible under
    # the finite-difference step sizes used here.
    texture = _bilinear_upscale(rng.random((4, 4, 3)) * 0.8 + 0.1, 32)

    def placed(z_offset):
        xy = lat @ rot.T + shift
        return np.column_stack([xy, dist + z_offset])

    def bend_z(amp, phase, freq):
        uc = lat[:, 0] + 0.5
        vc = lat[:, 1] + 0.5
        return -amp * np.sin(2.0 * np.pi * freq * uc + phase) - 0.4 * amp * np.sin(
            np.pi * vc
        )

    mesh = build_template(placed(np.zeros(m * m)), faces, uv_vertex[faces], texture)
    gt = placed(bend_z(0.06 + 0.04 * rng.random(), rng.random() * np.pi, 1.0))
    xt = placed(bend_z(0.05 + 0.04 * rng.random(), rng.random() * np.pi, 1.2))

    focal = 0.5 * size * dist / 1.0
    camera = CameraIntrinsics(
        fx=focal,
        fy=focal,
        cx=size / 2.0 + 0.3 * (rng.random() - 0.5),
        cy=size / 2.0 + 0.3 * (rng.random() - 0.5),
        width=size,
        height=size,
    )
    out = rasterize(gt, mesh, camera)
    return _Scene(mesh=mesh, camera=camera, xt=xt,
                  ref_rgb=out.rgb.value, ref_mask=out.hard_coverage)


def _occlusion_band_mask(face_id: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Pixels farther than 1 px from any occlusion boundary.

    Occlusion boundaries are coverage transitions and depth jumps; interior
    shared edges are continuous in the rendered image, so the fixed-visibility
    gradient stays valid across them and they are kept.
    """
    covered = face_id >= 0
    jump = 0.02 * np.median(depth[covered]) if covered.any() else np.inf
    h, w = face_id.shape
    edge = np.zeros((h, w), dtype=bool)

    def mark(sl_a, sl_b):
        disc = (covered[sl_a] != covered[sl_b]) | (
            np.abs(depth[sl_a] - depth[sl_b]) > jump
        )
        edge[sl_a] |= disc
        edge[sl_b] |= disc

    mark((slice(None), slice(None, -1)), (slice(None), slice(1, None)))
    mark((slice(None, -1), slice(None)), (slice(1, None), slice(None)))
    band = edge.copy()
    band[1:, :] |= edge[:-1, :]
    band[:-1, :] |= edge[1:, :]
    band[:, 1:] |= edge[:, :-1]
    band[:, :-1] |= edge[:, 1:]
    return ~band


def _sample_vertex_coords(rng, n_vertices: int, k: int, pool=None):
    if pool is None:
        pool = range(n_vertices)
    flat = [v * 3 + d for v in pool for d in range(3)]
    idx = rng.choice(len(flat), size=min(k, len(flat)), replace=False)
    return [(0, (flat[int(i)] // 3, flat[int(i)] % 3)) for i in sorted(idx)]


def _fd_kink_tolerant(program, inputs, h, tol, coords):
    """FD check that re-verifies failing coordinates at a smaller step.

    The render is piecewise smooth: a coordinate whose +/-h window straddles
    a visibility or abs kink disagrees with the (correct) one-sided analytic
    gradient by an amount that vanishes as h -> 0, while a genuine adjoint
    bug persists at every step size.  Failures must therefore reproduce at
    h/8 and h/64 to count.
    """
    report = finite_difference_check(program, inputs, h=h, tol=tol, coords=coords)
    passed_errors = [r for (_, _, r) in report.per_coord if r <= tol]
    max_rel = max(passed_errors, default=0.0)
    failing = [(f.input_index, f.coord) for f in report.failures]
    for shrink in (8.0, 64.0):
        if not failing:
            break
        report = finite_difference_check(
            program, inputs, h=h / shrink, tol=tol, coords=failing
        )
        max_rel = max([max_rel] + [r for (_, _, r) in report.per_coord if r <= tol])
        failing = [(f.input_index, f.coord) for f in report.failures]
    report.failures = [f for f in report.failures if (f.input_index, f.coord) in failing]
    report.max_rel_error = max([max_rel] + [f.rel_error for f in report.failures])
    report.n_checked = len(coords)
    return report


def _check_rgb(scene: _Scene, rng, loss_cfg: LossConfig):
    base = rasterize(scene.xt, scene.mesh, scene.camera)
    keep = _occlusion_band_mask(base.face_id, base.depth)
    ref = scene.ref_rgb * scene.ref_mask[:, :, None]
    w0 = adaptive_weight(np.abs(base.rgb.value - ref), loss_cfg.alpha, loss_cfg.sigma)
    weights = constant(w0 * keep[:, :, None])
    ref_c = constant(ref)

    def program(xv):
        out = rasterize(xv, scene.mesh, scene.camera)
        return mean_(weights * abs_(out.rgb - ref_c))

    coords = _sample_vertex_coords(rng, scene.mesh.num_vertices, 5)
    return _fd_kink_tolerant(program, [scene.xt], h=1e-6, tol=RENDER_TOL, coords=coords)


def _check_silhouette(scene: _Scene, rng, loss_cfg: LossConfig):
    ref_blur = gaussian_blur(scene.ref_mask, 1.0)
    base = rasterize(scene.xt, scene.mesh, scene.camera)
    base_blur = gaussian_blur(base.silhouette.value, 1.0)
    w0 = constant(adaptive_weight(np.abs(base_blur - ref_blur), loss_cfg.alpha, loss_cfg.sigma))
    ref_c = constant(ref_blur)

    def program(xv):
        out = rasterize(xv, scene.mesh, scene.camera)
        return mean_(w0 * abs_(gaussian_blur(out.silhouette, 1.0) - ref_c))

    coords = _sample_vertex_coords(rng, scene.mesh.num_vertices, 5)
    return finite_difference_check(program, [scene.xt], h=1e-6, tol=RENDER_TOL, coords=coords)


def _check_filters(scene: _Scene, rng, loss_cfg: LossConfig):
    img = scene.ref_rgb[::4, ::4].copy()
    wb = constant(rng.standard_normal(img.shape))
    w1 = constant(rng.standard_normal(img.shape + (2,)))
    w2 = constant(rng.standard_normal(img.shape + (3,)))

    def program(iv):
        return (
            sum_(wb * gaussian_blur(iv, 1.3))
            + sum_(w1 * sobel(iv, 1))
            + sum_(w2 * sobel(iv, 2))
        )

    k = 8
    idx = rng.choice(img.size, size=k, replace=False)
    coords = [(0, tuple(int(q) for q in np.unravel_index(int(i), img.shape))) for i in sorted(idx)]
    return finite_difference_check(program, [img], h=1e-6, tol=NUMERIC_TOL, coords=coords)


def _check_inextensibility(scene: _Scene, rng, loss_cfg: LossConfig):
    def program(xv):
        return inextensibility_loss(xv, scene.mesh, loss_cfg)

    # The per-vertex term is |prod(lam_hat - lam0)|: keep the check away from
    # the abs kinks (tiny eigenvalue differences) and from near-degenerate
    # eigenvalue pairs, where the adjoint is declared unreliable.  A vertex
    # coordinate touches the covariances of itself and its ring.
    from .eigen3 import sym_eigvals3
    from .mesh import covariance_batch

    mesh = scene.mesh
    cov = covariance_batch(scene.xt, mesh.cov_index, mesh.cov_mask, mesh.cov_counts)
    lam = sym_eigvals3(cov)
    margin = np.abs(lam - mesh.lambda0).min(axis=1)
    gaps = np.minimum(lam[:, 0] - lam[:, 1], lam[:, 1] - lam[:, 2])
    # Margin: 10x the eigenvalue change a 1e-6 vertex perturbation induces.
    ok = (margin > 1e-5) & (gaps > 1e-6)
    pool = [
        v for v in range(mesh.num_vertices)
        if ok[v] and all(ok[n] for n in mesh.neighborhoods[v])
    ]
    coords = _sample_vertex_coords(rng, mesh.num_vertices, 6, pool=pool)
    return finite_difference_check(program, [scene.xt], h=1e-6, tol=NUMERIC_TOL, coords=coords)


def _check_network(scene: _Scene, rng, loss_cfg: LossConfig):
    config = NetworkConfig(hidden_layers=2, width=16, seed=int(rng.integers(1 << 30)))
    state = DeformationState.network(config, scene.mesh.vertices)
    # A zeroed final layer blocks gradient flow into hidden layers; give it a
    # small random value so every parameter participates.
    state.params.weights[-1][:] = rng.normal(0.0, 0.05, state.params.weights[-1].shape)
    xt_var, leaves = forward(state, scene.mesh.vertices)

    base = rasterize(xt_var.value, scene.mesh, scene.camera)
    keep = _occlusion_band_mask(base.face_id, base.depth)
    ref = scene.ref_rgb * scene.ref_mask[:, :, None]
    w_rgb = constant(
        adaptive_weight(np.abs(base.rgb.value - ref), loss_cfg.alpha, loss_cfg.sigma)
        * keep[:, :, None]
    )
    ref_c = constant(ref)
    ref_blur = constant(gaussian_blur(scene.ref_mask, 1.0))

    arrays = [a.copy() for a in state.trainable_arrays()]

    def program(*params):
        st = DeformationState(mode="network", center=state.center, scale=state.scale,
                              params=state.params)
        # Rebind parameter values through the graph: rebuild the MLP on Vars.
        h = constant((scene.mesh.vertices - state.center) / state.scale)
        n_layers = len(st.params.weights)
        from .autodiff import matmul, relu

        for i in range(n_layers):
            h = matmul(h, params[2 * i]) + params[2 * i + 1]
            if i < n_layers - 1:
                h = relu(h)
        xv = constant(scene.mesh.vertices) + h
        out = rasterize(xv, scene.mesh, scene.camera)
        loss = mean_(w_rgb * abs_(out.rgb - ref_c))
        loss = loss + mean_(abs_(gaussian_blur(out.silhouette, 1.0) - ref_blur))
        loss = loss + inextensibility_loss(xv, scene.mesh, loss_cfg)
        return loss

    coords = []
    for ai in (len(arrays) - 2, len(arrays) - 1, 0):
        arr = arrays[ai]
        flat = rng.choice(arr.size, size=min(2, arr.size), replace=False)
        coords.extend(
            (ai, tuple(int(q) for q in np.unravel_index(int(i), arr.shape)))
            for i in sorted(flat)
        )
    return _fd_kink_tolerant(program, arrays, h=1e-6, tol=RENDER_TOL, coords=coords)


_CHECKS = {
    "rgb": (_check_rgb, RENDER_TOL),
    "silhouette": (_check_silhouette, RENDER_TOL),
    "filters": (_check_filters, NUMERIC_TOL),
    "inextensibility": (_check_inextensibility, NUMERIC_TOL),
    "network": (_check_network, RENDER_TOL),
}


def run_gradcheck(
    seed: int = 0, scenes: int = 20, size: int = 64, only: str | None = None
) -> GradcheckResult:
    if only is not None and only not in _CHECKS:
        raise ValueError(f"unknown gradcheck family {only!r}; choose from {FAMILIES}")
    names = [only] if only else list(_CHECKS)
    result = GradcheckResult(
        families={n: FamilyResult(name=n, tol=_CHECKS[n][1]) for n in names},
        scenes=scenes,
    )
    start = time.perf_counter()
    loss_cfg = LossConfig()
    for s in range(scenes):
        rng = np.random.default_rng(seed * 100003 + s)
        scene = _make_scene(rng, size)
        for name in names:
            fn, _ = _CHECKS[name]
            result.families[name].absorb(fn(scene, rng, loss_cfg))
    result.seconds = time.perf_counter() - start
    return result

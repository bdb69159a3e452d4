"""Loss terms: adaptive data loss, RGB, silhouette, image-gradient,
mesh inextensibility, temporal smoothness, and their weighted total.

Every vision loss shares the adaptive data-loss structure: the elementwise
residual is reweighted by ``alpha * exp(d / sigma)``, with the weight treated
as a constant during differentiation so large mismatches get amplified
gradients without the exponential itself feeding back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Var,
    abs_,
    as_var,
    constant,
    custom,
    centered_covariance3,
    det3x3,
    gather_rows,
    mean_,
    reshape,
    sqrt,
    sum_,
    sym_eigvals3x3,
    AutodiffUsageError,
)
from .mesh import TemplateMesh
from .render import RenderOutput, gaussian_blur, sobel

WEIGHT_CLAMP = 50.0

# The gradient loss scales raw Sobel stacks by the kernel L1 norm (8 per
# differentiation pass) so residuals stay commensurate with RGB/silhouette
# residuals and the exponential weighting operates in its intended regime.
SOBEL_SCALE_1 = 1.0 / 8.0
SOBEL_SCALE_2 = 1.0 / 64.0


@dataclass
class LossConfig:
    alpha: float = 10.0
    sigma: float = 1.0
    p: int = 1
    use_adaptive: bool = True
    use_image_gradient: bool = True
    use_silhouette: bool = True
    w_inext_mode: str = "adaptive"      # "adaptive" (delta_hat^-6) or "fixed"
    w_inext_fixed: float = 1.0
    inext_variant: str = "eig"          # "eig" or "literal"
    temporal_weight: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0.0 or self.sigma <= 0.0:
            raise ValueError("alpha and sigma must be positive")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.w_inext_mode not in ("adaptive", "fixed"):
            raise ValueError("w_inext_mode must be 'adaptive' or 'fixed'")
        if self.inext_variant not in ("eig", "literal"):
            raise ValueError("inext_variant must be 'eig' or 'literal'")
        if self.w_inext_fixed < 0.0 or self.temporal_weight < 0.0:
            raise ValueError("weights must be nonnegative")

    def resolve_w_inext(self, delta_hat: float) -> float:
        """Inextensibility weight: delta_hat^-6 cancels the delta^6 scale of
        the per-vertex determinant, making the loss scene-scale invariant."""
        if self.w_inext_mode == "adaptive":
            return float(delta_hat) ** -6
        return self.w_inext_fixed


@dataclass
class LossCounters:
    weight_clamps: int = 0
    skipped_vertices: int = 0


@dataclass
class LossBreakdown:
    rgb: float = 0.0
    silhouette: float = 0.0
    image_gradient: float = 0.0
    inextensibility: float = 0.0
    temporal: float = 0.0
    total: float = 0.0

    COLUMNS = ("rgb", "silhouette", "image_gradient", "inextensibility", "temporal", "total")

    def as_row(self):
        return (self.rgb, self.silhouette, self.image_gradient,
                self.inextensibility, self.temporal, self.total)


def adaptive_weight(
    d: np.ndarray, alpha: float, sigma: float, counters: LossCounters | None = None
) -> np.ndarray:
    """``w(d) = alpha * exp(d / sigma)`` with the exponent clamped at 50."""
    d = np.asarray(d, dtype=np.float64)
    arg = d / sigma
    clipped = np.count_nonzero(arg > WEIGHT_CLAMP)
    if clipped and counters is not None:
        counters.weight_clamps += int(clipped)
    return alpha * np.exp(np.minimum(arg, WEIGHT_CLAMP))


def data_loss(pred, ref, config: LossConfig, counters: LossCounters | None = None) -> Var:
    """Mean over elements of ``w(|pred - ref|) * |pred - ref|^p``; the weight
    is detached (constant in the backward pass)."""
    pred = as_var(pred)
    ref = as_var(ref)
    if pred.value.shape != ref.value.shape:
        raise AutodiffUsageError(
            f"data_loss shape mismatch: {pred.value.shape} vs {ref.value.shape}"
        )
    resid = pred - ref
    mag = abs_(resid)
    if config.p == 1:
        term = mag
    else:
        term = resid * resid
    if config.use_adaptive:
        w = constant(
            adaptive_weight(mag.value, config.alpha, config.sigma, counters),
            name="adaptive_weight",
        )
        term = w * term
    return mean_(term)


@dataclass
class FrameReference:
    """Per-frame constants shared by every iteration on that frame."""

    masked_rgb: np.ndarray
    mask_blurred: np.ndarray
    sobel1: np.ndarray
    sobel2: np.ndarray


def precompute_reference(frame, config: LossConfig, blur_sigma: float) -> FrameReference:
    masked = frame.rgb * frame.mask[:, :, None]
    return FrameReference(
        masked_rgb=masked,
        mask_blurred=gaussian_blur(frame.mask, blur_sigma),
        sobel1=sobel(masked, 1) * SOBEL_SCALE_1,
        sobel2=sobel(masked, 2) * SOBEL_SCALE_2,
    )


def rgb_loss(
    render: RenderOutput, frame, config: LossConfig,
    counters: LossCounters | None = None, precomp: FrameReference | None = None,
) -> Var:
    """Pixel-wise data loss between the render and the object-masked frame."""
    ref = precomp.masked_rgb if precomp is not None else frame.rgb * frame.mask[:, :, None]
    return data_loss(render.rgb, ref, config, counters)


def silhouette_loss(
    render: RenderOutput, frame, config: LossConfig, blur_sigma: float = 2.0,
    counters: LossCounters | None = None, precomp: FrameReference | None = None,
) -> Var:
    """Data loss between Gaussian-blurred soft and reference silhouettes.

    Both sides are blurred with the same kernel (symmetric comparison)."""
    if precomp is not None:
        ref = precomp.mask_blurred
    else:
        ref = gaussian_blur(frame.mask, blur_sigma)
    return data_loss(gaussian_blur(render.silhouette, blur_sigma), ref, config, counters)


def image_gradient_loss(
    render: RenderOutput, frame, config: LossConfig,
    counters: LossCounters | None = None, precomp: FrameReference | None = None,
) -> Var:
    """Data loss summed over first- and second-order Sobel stacks."""
    if precomp is None:
        masked = frame.rgb * frame.mask[:, :, None]
        ref1 = sobel(masked, 1) * SOBEL_SCALE_1
        ref2 = sobel(masked, 2) * SOBEL_SCALE_2
    else:
        ref1, ref2 = precomp.sobel1, precomp.sobel2
    first = data_loss(sobel(render.rgb, 1) * SOBEL_SCALE_1, ref1, config, counters)
    second = data_loss(sobel(render.rgb, 2) * SOBEL_SCALE_2, ref2, config, counters)
    return first + second


def inextensibility_loss(
    xt, mesh: TemplateMesh, config: LossConfig, counters: LossCounters | None = None
) -> Var:
    """Local-rigidity regularizer.

    Default ("eig") variant: per vertex, the eigenvalues of the deformed
    neighborhood covariance are compared against the template's, and the
    absolute product of the differences accumulates; this vanishes for every
    rigid motion.  The "literal" variant penalizes
    ``|det(C_v - diag(lambda0_v))|`` with the covariance in world coordinates
    and is kept for fidelity experiments only (it is not rigid-invariant).
    """
    xt = as_var(xt)
    valid = mesh.cov_counts >= 2.0
    if counters is not None and not np.all(valid):
        counters.skipped_vertices += int(np.count_nonzero(~valid))
    counts = np.where(valid, mesh.cov_counts, 1.0)

    pts = gather_rows(xt, mesh.cov_index)                       # (V, N, 3)
    wm = constant(mesh.cov_mask[:, :, None])
    pts_m = pts * wm
    mean = sum_(pts_m, axis=1) * constant((1.0 / counts)[:, None])
    diffs = (pts - reshape(mean, (mesh.num_vertices, 1, 3))) * wm
    cov = centered_covariance3(diffs, counts)                   # (V, 3, 3)

    if config.inext_variant == "eig":
        lam = sym_eigvals3x3(cov)
        delta = lam - constant(mesh.lambda0)
        per_vertex = _prod_last3(abs_(delta))
    else:
        lam0_diag = np.zeros((mesh.num_vertices, 3, 3))
        lam0_diag[:, [0, 1, 2], [0, 1, 2]] = mesh.lambda0
        per_vertex = abs_(det3x3(cov - constant(lam0_diag)))

    per_vertex = per_vertex * constant(valid.astype(np.float64))
    w = config.resolve_w_inext(mesh.delta_hat)
    return sum_(per_vertex) * w


def temporal_loss(xa, xb, xc) -> Var:
    """Kinematic midpoint penalty: mean per-vertex distance between the middle
    shape and the average of its neighbors; zero under uniform linear motion."""
    xa, xb, xc = as_var(xa), as_var(xb), as_var(xc)
    if not (xa.value.shape == xb.value.shape == xc.value.shape):
        raise AutodiffUsageError("temporal_loss requires three equal-shape vertex arrays")
    resid = xb - (xa + xc) * 0.5
    return mean_(sqrt(sum_(resid * resid, axis=1)))


def total_loss(
    render: RenderOutput,
    frame,
    xt,
    mesh: TemplateMesh,
    config: LossConfig,
    blur_sigma: float = 2.0,
    counters: LossCounters | None = None,
    precomp: FrameReference | None = None,
    temporal_shapes=None,
) -> tuple[Var, LossBreakdown]:
    """Weighted total of all enabled terms plus a per-component breakdown.

    Vision-loss weights are fixed to 1; the inextensibility weight comes from
    the config (adaptive by default); ``temporal_shapes`` optionally adds the
    window-mode midpoint term.
    """
    total = rgb_loss(render, frame, config, counters, precomp)
    bd = LossBreakdown(rgb=float(total.value))
    if config.use_silhouette:
        sil = silhouette_loss(render, frame, config, blur_sigma, counters, precomp)
        bd.silhouette = float(sil.value)
        total = total + sil
    if config.use_image_gradient:
        grad = image_gradient_loss(render, frame, config, counters, precomp)
        bd.image_gradient = float(grad.value)
        total = total + grad
    inext = inextensibility_loss(xt, mesh, config, counters)
    bd.inextensibility = float(inext.value)
    total = total + inext
    if temporal_shapes is not None and config.temporal_weight > 0.0:
        tl = temporal_loss(*temporal_shapes) * config.temporal_weight
        bd.temporal = float(tl.value)
        total = total + tl
    bd.total = float(total.value)
    return total, bd


def _prod_last3(a: Var) -> Var:
    """Product over the last axis of a (..., 3) array."""
    v = a.value

    def vjp(g):
        out = np.empty_like(v)
        out[..., 0] = g * v[..., 1] * v[..., 2]
        out[..., 1] = g * v[..., 0] * v[..., 2]
        out[..., 2] = g * v[..., 0] * v[..., 1]
        return (out,)

    return custom(v[..., 0] * v[..., 1] * v[..., 2], (a,), vjp, "prod3")

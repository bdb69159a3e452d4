"""sftkit: correspondence-free shape-from-template reconstruction.

Recovers a deforming textured triangle mesh from a monocular video by
optimizing a per-frame deformation network against rendered-vs-observed
image losses (RGB, silhouette, image gradients) and a mesh inextensibility
regularizer, with frame-wise parameter hand-off.
"""

from .camera import CameraIntrinsics, project
from .config import RunConfig, StrategyConfig
from .dataset import FrameObservation, SequenceDataset, load_sequence
from .kernels import BACKEND as kernel_backend
from .losses import LossBreakdown, LossConfig
from .mesh import TemplateMesh, build_template, load_template
from .metrics import chamfer, depth_rmse, sample_points
from .network import DeformationState, NetworkConfig, NetworkParameters, init_network
from .optim import OptimizationRun, run_adaptive, run_frame_wise, run_window_wise
from .pipeline import evaluate, reconstruct
from .render import RenderOutput, gaussian_blur, rasterize, render_silhouette, sobel
from .synth import ScenarioConfig, generate_dataset, generate_sequence

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "DeformationState",
    "FrameObservation",
    "LossBreakdown",
    "LossConfig",
    "NetworkConfig",
    "NetworkParameters",
    "OptimizationRun",
    "RenderOutput",
    "RunConfig",
    "ScenarioConfig",
    "SequenceDataset",
    "StrategyConfig",
    "TemplateMesh",
    "build_template",
    "chamfer",
    "depth_rmse",
    "evaluate",
    "generate_dataset",
    "generate_sequence",
    "gaussian_blur",
    "init_network",
    "kernel_backend",
    "load_sequence",
    "load_template",
    "project",
    "rasterize",
    "reconstruct",
    "render_silhouette",
    "run_adaptive",
    "run_frame_wise",
    "run_window_wise",
    "sample_points",
    "sobel",
]

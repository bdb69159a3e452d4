"""Deformation model: an MLP mapping template vertex coordinates to 3-D
displacements, plus the direct per-vertex-offset ablation mode.

The displaced shape is ``x_t = x0 + f(normalize(x0))`` with per-frame
parameters.  The final layer initializes to zero so the frame-0 render
matches the template exactly, and inputs are normalized into [-1, 1]^3 from
the template bounding box (raw scene-unit coordinates condition ReLU layers
badly).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Var, constant, matmul, relu

PRESETS = {
    "small": (4, 64),
    "base": (8, 256),
    "large": (12, 512),
}


class NetworkError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    hidden_layers: int = 8
    width: int = 256
    input_dim: int = 3
    output_dim: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ValueError("need at least one hidden layer of width >= 1")

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> "NetworkConfig":
        try:
            layers, width = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(hidden_layers=layers, width=width, seed=seed)

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.width] * self.hidden_layers + [self.output_dim]

    def parameter_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


@dataclass
class NetworkParameters:
    config: NetworkConfig
    weights: list = field(repr=False)   # per layer (in, out) float64
    biases: list = field(repr=False)    # per layer (out,) float64

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def parameter_count(self) -> int:
        return sum(a.size for a in self.arrays())


def init_network(config: NetworkConfig) -> NetworkParameters:
    """He-initialized hidden layers, zeroed final layer: the initial
    displacement field is identically zero."""
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        last = i == len(dims) - 2
        if last:
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return NetworkParameters(config=config, weights=weights, biases=biases)


def transfer_parameters(previous: NetworkParameters) -> NetworkParameters:
    """Deep copy used as the next frame's initialization; the stored optimum
    of the previous frame stays untouched by later updates."""
    return previous.copy()


@dataclass
class DeformationState:
    """Either a deformation network or raw per-vertex offsets, plus the
    template-derived input normalization."""

    mode: str                                # "network" or "vertex-offset"
    center: np.ndarray
    scale: np.ndarray
    params: NetworkParameters | None = None
    offsets: np.ndarray | None = None

    @classmethod
    def network(cls, config: NetworkConfig, template_vertices: np.ndarray) -> "DeformationState":
        center, scale = _fit_normalization(template_vertices)
        return cls(mode="network", center=center, scale=scale, params=init_network(config))

    @classmethod
    def vertex_offset(cls, template_vertices: np.ndarray) -> "DeformationState":
        center, scale = _fit_normalization(template_vertices)
        return cls(
            mode="vertex-offset",
            center=center,
            scale=scale,
            offsets=np.zeros_like(np.asarray(template_vertices, dtype=np.float64)),
        )

    def trainable_arrays(self) -> list:
        if self.mode == "network":
            return self.params.arrays()
        return [self.offsets]

    def snapshot(self):
        if self.mode == "network":
            return transfer_parameters(self.params)
        return self.offsets.copy()

    def load_snapshot(self, snap) -> None:
        if self.mode == "network":
            self.params = transfer_parameters(snap)
        else:
            self.offsets = snap.copy()


def forward(state: DeformationState, x0: np.ndarray) -> tuple[Var, list[Var]]:
    """Displaced shape ``x_t`` as a graph node plus the trainable leaves.

    The network is evaluated per vertex with shared parameters, so the result
    is independent of vertex ordering by construction.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x0_const = constant(x0, name="x0")
    if state.mode == "vertex-offset":
        leaf = Var(state.offsets, name="offsets")
        return x0_const + leaf, [leaf]

    params = state.params
    leaves = []
    h = constant((x0 - state.center) / state.scale, name="x0_normalized")
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        wv = Var(w, name=f"W{i}")
        bv = Var(b, name=f"b{i}")
        leaves.extend((wv, bv))
        h = matmul(h, wv) + bv
        if i < n_layers - 1:
            h = relu(h)
        if not np.all(np.isfinite(h.value)):
            raise NetworkError(f"non-finite activation after layer {i}")
    return x0_const + h, leaves


def forward_vertices(state: DeformationState, x0: np.ndarray) -> np.ndarray:
    """Plain-array forward (same code path as :func:`forward`)."""
    xt, _ = forward(state, x0)
    return xt.value


def _fit_normalization(vertices: np.ndarray):
    vertices = np.asarray(vertices, dtype=np.float64)
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    scale = np.maximum(0.5 * (hi - lo), 1e-12)
    return center, scale


# ---------------------------------------------------------------------------
# Parameter snapshots on disk: JSON header line + raw float64 blob
# ---------------------------------------------------------------------------


def save_parameters(path: str | Path, params: NetworkParameters, preset: str | None = None) -> None:
    header = {
        "hidden_layers": params.config.hidden_layers,
        "width": params.config.width,
        "input_dim": params.config.input_dim,
        "output_dim": params.config.output_dim,
        "seed": params.config.seed,
        "preset": preset,
        "shapes": [list(a.shape) for a in params.arrays()],
    }
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)


def load_parameters(path: str | Path) -> NetworkParameters:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        blob = fh.read()
    config = NetworkConfig(
        hidden_layers=header["hidden_layers"],
        width=header["width"],
        input_dim=header["input_dim"],
        output_dim=header["output_dim"],
        seed=header["seed"],
    )
    arrays = []
    offset = 0
    for shape in header["shapes"]:
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape).copy()
        arrays.append(arr)
        offset += n * 8
    weights = arrays[0::2]
    biases = arrays[1::2]
    return NetworkParameters(config=config, weights=weights, biases=biases)

"""Benchmark the compiled sweep kernels against the numpy reference."""

from __future__ import annotations

import importlib
import time

import numpy as np

from .kernels import BACKEND, reference


def _scene(n_side: int, size: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    lin = np.linspace(-0.5, 0.5, n_side)
    xs, ys = np.meshgrid(lin, lin, indexing="xy")
    z = 2.0 + 0.1 * rng.random(n_side * n_side)
    verts = np.stack([xs.ravel(), ys.ravel(), z], axis=1)
    verts[:, 2] -= 0.15 * np.sin(2 * np.pi * (verts[:, 0] + 0.5))
    faces = []
    counts: dict = {}
    for i in range(n_side - 1):
        for j in range(n_side - 1):
            a, b = i * n_side + j, i * n_side + j + 1
            c, d = (i + 1) * n_side + j, (i + 1) * n_side + j + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    faces = np.array(faces, dtype=np.int32)
    for fa, fb, fc in faces:
        for i, j in ((fa, fb), (fb, fc), (fc, fa)):
            key = (min(int(i), int(j)), max(int(i), int(j)))
            counts[key] = counts.get(key, 0) + 1
    edges = np.ascontiguousarray(
        sorted(k for k, n in counts.items() if n == 1), dtype=np.int32
    )
    focal = 0.5 * size * 2.0
    u = focal * verts[:, 0] / verts[:, 2] + size / 2.0
    v = focal * verts[:, 1] / verts[:, 2] + size / 2.0
    w = 1.0 / verts[:, 2]
    return (
        np.ascontiguousarray(u),
        np.ascontiguousarray(v),
        np.ascontiguousarray(w),
        faces,
        edges,
    )


def _time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(sizes=(64, 128, 256), mesh_side: int = 16, repeats: int = 5):
    """Return per-size timing rows for both backends; raises if the compiled
    backend is unavailable (nothing to compare)."""
    try:
        compiled = importlib.import_module("sftkit.kernels._sweeps")
    except ImportError:
        compiled = None
    rows = []
    for size in sizes:
        u, v, w, faces, edges = _scene(mesh_side, size)
        row = {"image": size, "faces": faces.shape[0]}
        row["raster_reference_ms"] = 1e3 * _time(
            lambda: reference.raster_sweep(u, v, w, faces, size, size), repeats
        )
        row["soft_reference_ms"] = 1e3 * _time(
            lambda: reference.border_distance_sweep(u, v, edges, size, size, 5.0),
            repeats,
        )
        if compiled is not None:
            row["raster_compiled_ms"] = 1e3 * _time(
                lambda: compiled.raster_sweep(u, v, w, faces, size, size), repeats
            )
            row["soft_compiled_ms"] = 1e3 * _time(
                lambda: compiled.border_distance_sweep(u, v, edges, size, size, 5.0),
                repeats,
            )
        rows.append(row)
    return rows, compiled is not None


def format_benchmark(rows, has_compiled: bool) -> str:
    lines = [f"active backend: {BACKEND}"]
    header = f"{'image':>6} {'faces':>6} {'raster ref':>11} {'soft ref':>11}"
    if has_compiled:
        header += f" {'raster cyt':>11} {'soft cyt':>11} {'speedup':>8}"
    lines.append(header)
    for r in rows:
        line = (
            f"{r['image']:>6} {r['faces']:>6} "
            f"{r['raster_reference_ms']:>9.2f}ms {r['soft_reference_ms']:>9.2f}ms"
        )
        if has_compiled:
            ref = r["raster_reference_ms"] + r["soft_reference_ms"]
            cyt = r["raster_compiled_ms"] + r["soft_compiled_ms"]
            line += (
                f" {r['raster_compiled_ms']:>9.2f}ms {r['soft_compiled_ms']:>9.2f}ms"
                f" {ref / cyt:>7.1f}x"
            )
        lines.append(line)
    if not has_compiled:
        lines.append("compiled backend not built; only the reference timings shown")
    return "\n".join(lines)

"""Closed-form eigendecomposition of symmetric 3x3 matrices.

Uses the trigonometric (Cardano) solution so that eigenvalues are a
deterministic, branch-stable function of the input: no iterative solver,
no convergence failures.  Everything is batched over a leading axis.
"""

from __future__ import annotations

import numpy as np

_TWO_PI_3 = 2.0 * np.pi / 3.0

# Relative gap below which a pair of eigenvalues is treated as degenerate
# when assembling the adjoint (individual eigenvectors are unreliable there).
DEGENERATE_GAP = 1e-8


def sym_eigvals3(mats: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric 3x3 matrices, sorted descending.

    Parameters
    ----------
    mats : (..., 3, 3) array
        Symmetric matrices.  Only the symmetric part is meaningful.

    Returns
    -------
    (..., 3) array of eigenvalues with ``lam[..., 0] >= lam[..., 1] >= lam[..., 2]``.
    """
    mats = np.asarray(mats, dtype=np.float64)
    q = np.trace(mats, axis1=-2, axis2=-1) / 3.0
    eye = np.eye(3)
    b = mats - q[..., None, None] * eye
    p2 = np.sum(b * b, axis=(-2, -1)) / 6.0
    p = np.sqrt(p2)

    # p == 0 means the matrix is already q*I; guard the division.
    safe_p = np.where(p > 0.0, p, 1.0)
    r = _det3(b) / (2.0 * safe_p**3)
    r = np.clip(r, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    lam1 = q + 2.0 * p * np.cos(phi)
    lam3 = q + 2.0 * p * np.cos(phi + _TWO_PI_3)
    lam2 = 3.0 * q - lam1 - lam3
    out = np.stack([lam1, lam2, lam3], axis=-1)
    iso = p == 0.0
    if np.any(iso):
        out = np.where(iso[..., None], q[..., None] * np.ones(3), out)
    return out


def sym_eig3(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and unit eigenvectors of symmetric 3x3 matrices.

    Returns ``(lam, vecs)`` with ``vecs[..., :, k]`` the eigenvector for
    ``lam[..., k]``.  For (near-)repeated eigenvalues the individual vectors
    are arbitrary within the degenerate subspace; callers needing adjoints
    should use :func:`eigvals_adjoint` which handles clusters explicitly.
    """
    mats = np.asarray(mats, dtype=np.float64)
    lam = sym_eigvals3(mats)
    flat = mats.reshape(-1, 3, 3)
    lflat = lam.reshape(-1, 3)
    vecs = np.empty_like(flat)
    eye = np.eye(3)
    for k in range(3):
        m = flat - lflat[:, k, None, None] * eye
        # Rows of (C - lam I) span the orthogonal complement of the
        # eigenvector; the largest cross product of row pairs recovers it.
        c01 = np.cross(m[:, 0], m[:, 1])
        c02 = np.cross(m[:, 0], m[:, 2])
        c12 = np.cross(m[:, 1], m[:, 2])
        cand = np.stack([c01, c02, c12], axis=1)
        norms = np.linalg.norm(cand, axis=2)
        best = np.argmax(norms, axis=1)
        v = cand[np.arange(flat.shape[0]), best]
        n = np.linalg.norm(v, axis=1)
        # Degenerate subspace: fall back to a fixed basis vector; the adjoint
        # never uses these vectors individually.
        bad = n < 1e-30
        if np.any(bad):
            v = v.copy()
            v[bad] = eye[k]
            n = np.where(bad, 1.0, n)
        v = v / n[:, None]
        # Deterministic sign: largest-magnitude component positive.
        lead = np.take_along_axis(
            v, np.argmax(np.abs(v), axis=1)[:, None], axis=1
        )[:, 0]
        v = v * np.where(lead < 0.0, -1.0, 1.0)[:, None]
        vecs[:, :, k] = v
    return lam, vecs.reshape(mats.shape)


def eigvals_adjoint(mats: np.ndarray, grad_lam: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`sym_eigvals3`: d(loss)/dC from d(loss)/d(lambda).

    For distinct eigenvalues this is ``sum_k gbar_k v_k v_k^T``.  Pairs closer
    than ``DEGENERATE_GAP`` (relative to the matrix scale) get a symmetrized
    adjoint built from the subspace projector, which is well defined even
    though the individual eigenvectors are not.
    """
    mats = np.asarray(mats, dtype=np.float64)
    grad_lam = np.asarray(grad_lam, dtype=np.float64)
    lam, vecs = sym_eig3(mats)
    scale = np.maximum(1.0, np.abs(lam).max(axis=-1))
    tol = DEGENERATE_GAP * scale
    g12 = (lam[..., 0] - lam[..., 1]) < tol
    g23 = (lam[..., 1] - lam[..., 2]) < tol

    outer = np.einsum("...ik,...jk->...kij", vecs, vecs)
    distinct = np.einsum("...k,...kij->...ij", grad_lam, outer)

    eye = np.eye(3)
    gbar = grad_lam
    # lam1 ~ lam2, lam3 isolated: projector onto the top-2 subspace.
    p12 = eye - outer[..., 2, :, :]
    pair12 = (
        0.5 * (gbar[..., 0] + gbar[..., 1])[..., None, None] * p12
        + gbar[..., 2][..., None, None] * outer[..., 2, :, :]
    )
    # lam2 ~ lam3, lam1 isolated.
    p23 = eye - outer[..., 0, :, :]
    pair23 = (
        gbar[..., 0][..., None, None] * outer[..., 0, :, :]
        + 0.5 * (gbar[..., 1] + gbar[..., 2])[..., None, None] * p23
    )
    triple = (gbar.mean(axis=-1))[..., None, None] * np.broadcast_to(
        eye, mats.shape
    )

    out = distinct
    out = np.where((g12 & ~g23)[..., None, None], pair12, out)
    out = np.where((g23 & ~g12)[..., None, None], pair23, out)
    out = np.where((g12 & g23)[..., None, None], triple, out)
    return out


def _det3(mats: np.ndarray) -> np.ndarray:
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 0, 2]
    d = mats[..., 1, 0]
    e = mats[..., 1, 1]
    f = mats[..., 1, 2]
    g = mats[..., 2, 0]
    h = mats[..., 2, 1]
    i = mats[..., 2, 2]
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def det3(mats: np.ndarray) -> np.ndarray:
    """Determinant of 3x3 matrices via cofactor expansion (no LAPACK)."""
    return _det3(np.asarray(mats, dtype=np.float64))


def cofactor3(mats: np.ndarray) -> np.ndarray:
    """Cofactor matrix of 3x3 matrices; equals d(det)/dA entrywise."""
    m = np.asarray(mats, dtype=np.float64)
    cof = np.empty_like(m)
    cof[..., 0, 0] = m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1]
    cof[..., 0, 1] = -(m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
    cof[..., 0, 2] = m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]
    cof[..., 1, 0] = -(m[..., 0, 1] * m[..., 2, 2] - m[..., 0, 2] * m[..., 2, 1])
    cof[..., 1, 1] = m[..., 0, 0] * m[..., 2, 2] - m[..., 0, 2] * m[..., 2, 0]
    cof[..., 1, 2] = -(m[..., 0, 0] * m[..., 2, 1] - m[..., 0, 1] * m[..., 2, 0])
    cof[..., 2, 0] = m[..., 0, 1] * m[..., 1, 2] - m[..., 0, 2] * m[..., 1, 1]
    cof[..., 2, 1] = -(m[..., 0, 0] * m[..., 1, 2] - m[..., 0, 2] * m[..., 1, 0])
    cof[..., 2, 2] = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return cof

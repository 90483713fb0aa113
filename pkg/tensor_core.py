# tensor_core.py
"""
Small-matrix algebra for 2x2 and 3x3 matrices.

Every function accepts a single matrix of shape (n, n) or a stack of
shape (..., n, n) and works along the last two axes. The dimension is a
runtime value so 2D and 3D data run through the same code paths.
"""

import logging

import numpy as np
from scipy.linalg import polar

logger = logging.getLogger('DD-Tensor')

SUPPORTED_DIMS = (2, 3)

# tau(n): number of minors of an n x n matrix
MINOR_COUNT = {2: 5, 3: 19}


class DimensionError(ValueError):
    """Raised for unsupported or mismatched matrix dimensions"""


def dim_of(A):
    """Return n for an (..., n, n) array, raising DimensionError otherwise"""
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2] or A.shape[-1] not in SUPPORTED_DIMS:
        raise DimensionError(f"expected (..., n, n) with n in {SUPPORTED_DIMS}, got shape {A.shape}")
    return A.shape[-1]


def _check_pair(A, B):
    n = dim_of(A)
    if dim_of(B) != n:
        raise DimensionError(f"dimension mismatch: {np.shape(A)} vs {np.shape(B)}")
    return n


def dot(A, B):
    """Frobenius inner product A.B = Tr(A^T B)"""
    _check_pair(A, B)
    return np.einsum('...ij,...ij->...', A, B)


def frobenius_norm(A):
    dim_of(A)
    return np.sqrt(np.einsum('...ij,...ij->...', A, A))


def det(A):
    """Closed-form determinant for n = 2, 3"""
    A = np.asarray(A, dtype=float)
    n = dim_of(A)
    if n == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return np.einsum('...i,...i->...', A[..., 0, :], np.cross(A[..., 1, :], A[..., 2, :]))


def cof(A):
    """
    Cofactor matrix, cof A = det(A) A^{-T} for invertible A.

    For n = 2 this is [[d, -c], [-b, a]]; for n = 3 the rows are the
    cross products of pairs of rows of A.
    """
    A = np.asarray(A, dtype=float)
    n = dim_of(A)
    if n == 2:
        out = np.empty_like(A)
        out[..., 0, 0] = A[..., 1, 1]
        out[..., 0, 1] = -A[..., 1, 0]
        out[..., 1, 0] = -A[..., 0, 1]
        out[..., 1, 1] = A[..., 0, 0]
        return out
    r0, r1, r2 = A[..., 0, :], A[..., 1, :], A[..., 2, :]
    return np.stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], axis=-2)


def minors(G):
    """
    Vector of minors M(G).

    n = 2: (G, det G), 5 values; n = 3: (G, cof G, det G), 19 values.
    Matrix blocks are flattened row-major.
    """
    G = np.asarray(G, dtype=float)
    n = dim_of(G)
    lead = G.shape[:-2]
    parts = [G.reshape(lead + (n * n,))]
    if n == 3:
        parts.append(cof(G).reshape(lead + (9,)))
    parts.append(det(G)[..., None])
    return np.concatenate(parts, axis=-1)


def rotation_2d(theta):
    """Planar rotation by theta (radians); vectorized over theta"""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def random_rotation(n, seed, size=None):
    """
    Deterministic random rotation(s) in SO(n).

    Parameters:
    -----------
    n : int
        Dimension, 2 or 3
    seed : int or numpy.random.Generator
        Seed (or generator) controlling the draw
    size : int, optional
        Number of rotations; None returns a single (n, n) matrix
    """
    if n not in SUPPORTED_DIMS:
        raise DimensionError(f"random_rotation supports n in {SUPPORTED_DIMS}, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = 1 if size is None else int(size)

    if n == 2:
        Q = rotation_2d(rng.uniform(0.0, 2.0 * np.pi, size=count))
    else:
        Z = rng.standard_normal((count, 3, 3))
        Q, R = np.linalg.qr(Z)
        # Haar measure: fix column signs by the diagonal of R, then orientation
        signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
        signs[signs == 0] = 1.0
        Q = Q * signs[:, None, :]
        flip = det(Q) < 0
        Q[flip, :, 0] *= -1.0

    return Q[0] if size is None else Q


def orthogonality_residual(A):
    """|A^T A - I|"""
    n = dim_of(A)
    AtA = np.einsum('...ki,...kj->...ij', A, A)
    return frobenius_norm(AtA - np.eye(n))


def polar_rotation_part(A):
    """
    Rotation R of the polar decomposition A = R U (U symmetric positive definite).

    Raises ValueError for singular or orientation-reversing input.
    """
    A = np.asarray(A, dtype=float)
    n = dim_of(A)
    if A.ndim != 2:
        raise DimensionError("polar_rotation_part takes a single matrix")
    scale = 1.0 + frobenius_norm(A)
    d = det(A)
    if not d > 1e-14 * scale ** n:
        raise ValueError(f"polar_rotation_part needs det A > 0, got det A = {d:.3e}")
    R, _ = polar(A, side='right')
    return R


def moment_residual(F, P):
    """|P F^T - F P^T|: zero iff P F^T is symmetric"""
    _check_pair(F, P)
    PFt = np.einsum('...ik,...jk->...ij', P, F)
    return frobenius_norm(PFt - np.swapaxes(PFt, -1, -2))


def det_expansion_defect(A, B):
    """
    det(A+B) - det A - (cof A.B + det B) for n=2, with the extra term A.cof B
    for n=3. Zero up to roundoff.
    """
    n = _check_pair(A, B)
    rhs = dot(cof(A), B) + det(B)
    if n == 3:
        rhs = rhs + dot(A, cof(B))
    return det(np.asarray(A) + B) - det(A) - rhs


def cof_increment_defect(F, G):
    """
    cof(F+G).G - (cof F.G + 2 F.cof G + 3 det G) for n=3 and
    cof(F+G).G - (cof F.G + 2 det G) for n=2.
    """
    n = _check_pair(F, G)
    lhs = dot(cof(np.asarray(F) + G), G)
    if n == 2:
        return lhs - (dot(cof(F), G) + 2.0 * det(G))
    return lhs - (dot(cof(F), G) + 2.0 * dot(F, cof(G)) + 3.0 * det(G))


def flatten(A):
    """Row-major flat view of matrices, shape (..., n*n)"""
    n = dim_of(A)
    A = np.asarray(A, dtype=float)
    return A.reshape(A.shape[:-2] + (n * n,))


def unflatten(values, n):
    values = np.asarray(values, dtype=float)
    if n not in SUPPORTED_DIMS or values.shape[-1] != n * n:
        raise DimensionError(f"cannot reshape {values.shape} into {n}x{n} matrices")
    return values.reshape(values.shape[:-1] + (n, n))

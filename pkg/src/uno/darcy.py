"""Darcy flow: -div(a grad u) = f on the unit square, u = 0 on the boundary.

Discretized by the conservative five-point scheme on a uniform vertex grid
with arithmetic averaging of the coefficient at cell faces; the SPD system
is solved by Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .errors import NumericalError, ShapeError


@dataclass
class DarcySample:
    """Coefficient/solution pair on one vertex grid."""

    a: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if self.a.shape != self.u.shape:
            raise ShapeError("coefficient and solution grids differ")


def darcy_coefficient(field: np.ndarray) -> np.ndarray:
    """Two-phase pushforward: 3 where the field is negative, 12 otherwise."""
    return np.where(np.asarray(field) >= 0, 12.0, 3.0)


def assemble_darcy_system(a: np.ndarray, f) -> tuple:
    """Sparse SPD matrix and right-hand side for the interior unknowns."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or n < 5:
        raise ShapeError(f"need a square grid of extent >= 5, got {a.shape}")
    if np.any(a <= 0):
        raise ShapeError("diffusion coefficient must be positive")
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), (n, n))
    h2 = (n - 1.0) ** 2  # 1 / h^2

    # face coefficients between interior node (i, j) and its neighbors
    east = 0.5 * (a[1:-1, 1:-1] + a[1:-1, 2:])
    west = 0.5 * (a[1:-1, 1:-1] + a[1:-1, :-2])
    north = 0.5 * (a[1:-1, 1:-1] + a[2:, 1:-1])
    south = 0.5 * (a[1:-1, 1:-1] + a[:-2, 1:-1])

    m = n - 2
    diag = (east + west + north + south).ravel() * h2
    off_e = (-east * h2).ravel()
    off_n = (-north * h2).ravel()
    # links that would cross the Dirichlet boundary are dropped
    off_e[m - 1 :: m] = 0.0
    matrix = sp.diags(
        [diag, off_e[:-1], off_e[:-1], off_n[: -m], off_n[: -m]],
        [0, 1, -1, m, -m],
        format="csr",
    )
    rhs = f[1:-1, 1:-1].ravel().copy()
    return matrix, rhs


def darcy_solve(
    a: np.ndarray,
    f=1.0,
    rtol: float = 1e-10,
    maxiter: int | None = None,
) -> np.ndarray:
    """Solution field with homogeneous Dirichlet boundary, same grid as ``a``."""
    matrix, rhs = assemble_darcy_system(a, f)
    n = a.shape[0]
    m = n - 2
    if maxiter is None:
        maxiter = 50 * n
    inv_diag = 1.0 / matrix.diagonal()
    precond = LinearOperator(matrix.shape, matvec=lambda x: inv_diag * x)
    x, info = cg(matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond)
    if info != 0:
        raise NumericalError(
            f"conjugate gradients failed to reach rtol={rtol} in {maxiter} "
            f"iterations (info={info}); the assembled system may be indefinite"
        )
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = x.reshape(m, m)
    return u


def manufactured_forcing(n: int) -> np.ndarray:
    """f = 2 pi^2 sin(pi x1) sin(pi x2), exact solution of a == 1."""
    x = np.arange(n) / (n - 1)
    s1, s2 = np.meshgrid(np.sin(np.pi * x), np.sin(np.pi * x), indexing="ij")
    return 2.0 * np.pi ** 2 * s1 * s2


def manufactured_solution(n: int) -> np.ndarray:
    x = np.arange(n) / (n - 1)
    s1, s2 = np.meshgrid(np.sin(np.pi * x), np.sin(np.pi * x), indexing="ij")
    return s1 * s2

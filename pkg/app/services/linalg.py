# app/services/linalg.py
"""Sparse building blocks and eigensolvers shared by the fibre, effective and
full solvers."""
import logging

import numpy as np
import pyamg
from scipy import sparse
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, cg, eigsh
from scipy.sparse.linalg import norm as spnorm

from app.errors import ConvergenceError

logger = logging.getLogger("linalg")

DENSE_LIMIT = 400
ROUNDING_FACTOR = 32


# ------------------ Finite-difference stencils ------------------
def second_difference(n: int, h: float) -> sparse.csr_matrix:
    """-d²/dx² on n interior nodes with homogeneous Dirichlet ends."""
    main = np.full(n, 2.0 / h ** 2)
    off = np.full(n - 1, -1.0 / h ** 2)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def central_difference(n: int, h: float) -> sparse.csr_matrix:
    off = np.full(n - 1, 0.5 / h)
    return sparse.diags([-off, off], [-1, 1], format="csr")


def forward_difference(n: int, h: float) -> sparse.csr_matrix:
    """(n+1) x n map from interior values to cell differences, zero ends."""
    return ((sparse.eye(n + 1, n) - sparse.eye(n + 1, n, k=-1)) / h).tocsr()


def midpoint_average(n: int) -> sparse.csr_matrix:
    """(n+1) x n map from interior values to cell midpoints, zero ends."""
    return (0.5 * (sparse.eye(n + 1, n) + sparse.eye(n + 1, n, k=-1))).tocsr()


def masked_laplacian(mask: np.ndarray, h: float) -> sparse.csr_matrix:
    """5-point (or 3-point) -Δ on the True nodes of ``mask``; the others are
    Dirichlet nodes."""
    mask = np.asarray(mask, dtype=bool)
    blocks = [second_difference(n, h) for n in mask.shape]
    if mask.ndim == 1:
        full = blocks[0]
    else:
        full = sparse.kron(blocks[0], sparse.eye(mask.shape[1])) + sparse.kron(
            sparse.eye(mask.shape[0]), blocks[1]
        )
    idx = np.flatnonzero(mask.ravel())
    return full.tocsr()[idx][:, idx].tocsr()


def masked_gradient(mask: np.ndarray, h: float, axis: int) -> sparse.csr_matrix:
    """Central difference along ``axis`` restricted to the True nodes of a 2D mask."""
    mask = np.asarray(mask, dtype=bool)
    d = central_difference(mask.shape[axis], h)
    other = sparse.eye(mask.shape[1 - axis])
    full = sparse.kron(d, other) if axis == 0 else sparse.kron(other, d)
    idx = np.flatnonzero(mask.ravel())
    return full.tocsr()[idx][:, idx].tocsr()


# ------------------ Symmetric forms ------------------
def symmetrize(matrix: sparse.spmatrix) -> sparse.csr_matrix:
    """Bit-exact symmetric part; floating addition commutes."""
    return (0.5 * (matrix + matrix.T)).tocsr()


def weighted_similarity(stiffness: sparse.spmatrix, weights: np.ndarray) -> sparse.csr_matrix:
    """D^{-1/2} K D^{-1/2} for a diagonal mass D, returned exactly symmetric."""
    scale = sparse.diags(1.0 / np.sqrt(weights))
    return symmetrize(scale @ stiffness @ scale)


# ------------------ Eigensolvers ------------------
def tridiagonal_eigenpairs(diagonal: np.ndarray, offdiagonal: np.ndarray, n_eigs: int):
    """Lowest eigenpairs of a symmetric tridiagonal matrix by bisection and
    inverse iteration (LAPACK stebz/stein)."""
    n = len(diagonal)
    n_eigs = min(n_eigs, n)
    values, vectors = eigh_tridiagonal(
        diagonal, offdiagonal, select="i", select_range=(0, n_eigs - 1), lapack_driver="stebz"
    )
    applied = diagonal[:, None] * vectors
    applied[:-1] += offdiagonal[:, None] * vectors[1:]
    applied[1:] += offdiagonal[:, None] * vectors[:-1]
    scale = np.max(np.abs(diagonal)) + 2.0 * (np.max(np.abs(offdiagonal)) if n > 1 else 0.0)
    residuals = _relative_residuals(applied, values, vectors, scale)
    return values, vectors, residuals


def lowest_eigenpairs(matrix: sparse.spmatrix, n_eigs: int, tol: float = 1e-12):
    """Lowest eigenpairs of a sparse symmetric positive matrix via shift-invert
    Lanczos about zero; small systems go through a dense solve."""
    n = matrix.shape[0]
    n_eigs = min(n_eigs, n)
    if n <= DENSE_LIMIT or n_eigs >= n - 1:
        values, vectors = eigh(matrix.toarray(), subset_by_index=(0, n_eigs - 1))
    else:
        try:
            values, vectors = eigsh(
                matrix.tocsc(), k=n_eigs, sigma=0.0, which="LM", v0=np.ones(n), tol=tol
            )
        except ArpackNoConvergence as e:
            logger.error(f"❌ Shift-invert Lanczos stalled on n={n}: {e}")
            raise ConvergenceError(f"shift-invert Lanczos did not converge for {n_eigs} eigenpairs") from e
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
    residuals = _relative_residuals(matrix @ vectors, values, vectors, spnorm(matrix, np.inf))
    logger.debug(f"Lowest {n_eigs} eigenvalues of n={n}: {values}")
    return values, vectors, residuals


def inverse_power_iteration(
    matrix: sparse.spmatrix,
    tol: float = 1e-10,
    max_iter: int = 500,
    inner_rtol: float = 1e-12,
):
    """Ground eigenpair of a symmetric positive definite matrix.

    Shift-zero inverse iteration; every step solves A y = x by conjugate
    gradients with an algebraic multigrid preconditioner. The returned residual
    is ‖Ax − λx‖ for the unit vector x; it must reach ``tol`` or the rounding
    level of A, whichever is larger.
    """
    matrix = matrix.tocsr()
    n = matrix.shape[0]
    floor = ROUNDING_FACTOR * np.finfo(float).eps * spnorm(matrix, np.inf)
    target = max(tol, floor)
    if floor > tol:
        logger.debug(f"Residual target {tol:.1e} is below the rounding level {floor:.1e} of n={n}")
    preconditioner = pyamg.smoothed_aggregation_solver(matrix).aspreconditioner(cycle="V")
    x = np.ones(n) / np.sqrt(n)
    Ax = matrix @ x
    lam = float(x @ Ax)
    residual = np.inf
    for it in range(1, max_iter + 1):
        y, info = cg(matrix, x, x0=x / lam, rtol=inner_rtol, atol=0.0, maxiter=2000, M=preconditioner)
        if info < 0:
            raise ConvergenceError(f"CG breakdown in inverse iteration step {it}")
        x = y / np.linalg.norm(y)
        Ax = matrix @ x
        lam = float(x @ Ax)
        residual = float(np.linalg.norm(Ax - lam * x))
        logger.debug(f"inverse iteration {it}: lambda={lam:.12g} residual={residual:.3e}")
        if residual <= target:
            logger.info(f"✅ Inverse iteration converged in {it} steps (n={n}, lambda={lam:.10g})")
            return lam, x, residual
    logger.error(f"❌ Inverse iteration stalled after {max_iter} steps")
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps", residual)


def _relative_residuals(applied, values, vectors, scale: float) -> np.ndarray:
    """‖Av − λv‖ / (‖A‖ ‖v‖) per column."""
    return np.linalg.norm(applied - vectors * values, axis=0) / (
        max(float(scale), np.finfo(float).tiny) * np.linalg.norm(vectors, axis=0)
    )

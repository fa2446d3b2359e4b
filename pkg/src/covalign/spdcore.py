"""Symmetric positive definite matrix algebra.

Eigendecomposition-based matrix functions (square root, inverse square root,
log, exp), the affine-invariant distance and the arithmetic / geometric
(Karcher) means used for covariance recentering. Everything operates on
plain float64 arrays; the eigen-solver is a cyclic Jacobi sweep, which is
unconditionally convergent for symmetric input and keeps eigenvectors
orthogonal to machine precision at the matrix sizes used here.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NotSpdError",
    "NearSingularError",
    "ConvergenceError",
    "check_symmetric",
    "check_spd",
    "sym_eig",
    "sqrtm",
    "invsqrtm",
    "logm",
    "expm",
    "affine_distance",
    "arithmetic_mean",
    "karcher_mean",
]

SYMMETRY_TOL = 1e-10
# Eigenvalues at or below RANK_EPS * lambda_max are treated as numerically
# zero; matrix functions refuse such input rather than regularise silently.
RANK_EPS = 1e-12


class NotSpdError(ValueError):
    """Input is not symmetric positive definite."""


class NearSingularError(ValueError):
    """Matrix is numerically rank deficient (eigenvalue <= eps * lambda_max)."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its iteration budget."""


def check_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate that ``a`` is a square symmetric float matrix.

    Returns the symmetrised copy ``(a + a.T) / 2`` in float64. Raises
    NotSpdError when the input is not square or the asymmetry exceeds
    ``tol`` relative to the largest entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSpdError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotSpdError("matrix contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise NotSpdError("matrix is not symmetric")
    return (a + a.T) / 2.0


def check_spd(a: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate symmetry and positive definiteness (via Cholesky).

    Cheap entry guard used by routines whose math requires SPD input; the
    eigenvalue-based functions additionally apply the RANK_EPS cutoff.
    """
    a = check_symmetric(a, tol)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotSpdError("matrix is not positive definite") from None
    return a


def sym_eig(a: np.ndarray, *, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    a : (n, n) array
        Symmetric matrix. Positive definiteness is not required here; the
        caller-facing matrix functions enforce it where needed.

    Returns
    -------
    w : (n,) array
        Eigenvalues in descending order.
    v : (n, n) array
        Orthonormal eigenvectors, ``v[:, i]`` pairs with ``w[i]`` so that
        ``a = v @ diag(w) @ v.T``.

    Raises
    ------
    ConvergenceError
        If the off-diagonal mass has not vanished after ``max_sweeps``
        cyclic sweeps. Does not happen for symmetric input in practice;
        Jacobi converges quadratically once sweeps start landing.
    """
    a = check_symmetric(a)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    work = a.copy()
    norm = float(np.linalg.norm(work))
    # Zero matrix: nothing to rotate.
    if norm == 0.0:
        return np.zeros(n), v

    off_tol = 1e-14 * norm
    skip_tol = 1e-18 * norm
    resid = np.empty_like(work)
    for _ in range(max_sweeps):
        # Off-diagonal Frobenius mass, summed directly: the textbook
        # ||A||^2 - ||diag||^2 form cancels catastrophically near convergence.
        np.copyto(resid, work)
        np.fill_diagonal(resid, 0.0)
        off = float(np.linalg.norm(resid))
        if off <= off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                if abs(apq) <= skip_tol:
                    continue
                # Symmetric Schur rotation choosing the smaller angle.
                tau = (work[q, q] - work[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                work[:, [p, q]] = work[:, [p, q]] @ rot
                work[[p, q], :] = rot.T @ work[[p, q], :]
                work[p, q] = work[q, p] = 0.0
                v[:, [p, q]] = v[:, [p, q]] @ rot
    else:
        raise ConvergenceError(f"Jacobi sweep did not converge in {max_sweeps} sweeps")

    w = work.diagonal().copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _eig_pd(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with the positive-definiteness / rank guard applied."""
    w, v = sym_eig(a)
    if w[0] <= 0.0:
        raise NotSpdError(f"{what}: matrix is not positive definite")
    if w[-1] <= RANK_EPS * w[0]:
        raise NearSingularError(
            f"{what}: eigenvalue {w[-1]:.3e} below {RANK_EPS:.0e} * lambda_max; "
            "matrix is numerically rank deficient"
        )
    return w, v


def _assemble(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = (v * w) @ v.T
    return (out + out.T) / 2.0


def sqrtm(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix."""
    w, v = _eig_pd(a, "sqrtm")
    return _assemble(v, np.sqrt(w))


def invsqrtm(a: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root of an SPD matrix.

    This is the whitening transform: for a covariance R the matrix
    ``invsqrtm(R)`` maps data with covariance R to identity covariance.
    """
    w, v = _eig_pd(a, "invsqrtm")
    return _assemble(v, 1.0 / np.sqrt(w))


def logm(a: np.ndarray) -> np.ndarray:
    """Matrix logarithm of an SPD matrix (symmetric result)."""
    w, v = _eig_pd(a, "logm")
    return _assemble(v, np.log(w))


def expm(s: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (SPD result)."""
    w, v = sym_eig(s)
    return _assemble(v, np.exp(w))


def affine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Affine-invariant Riemannian distance between SPD matrices.

    delta(A, B) = || log(A^{-1/2} B A^{-1/2}) ||_F. Symmetric in its
    arguments and invariant under congruence: delta(A, B) equals
    delta(W A W^T, W B W^T) for any invertible W.
    """
    b = check_spd(b)
    wa = invsqrtm(a)
    inner = wa @ b @ wa
    return float(np.linalg.norm(logm((inner + inner.T) / 2.0)))


def _check_stack(covs) -> np.ndarray:
    mats = [check_spd(c) for c in covs]
    if not mats:
        raise ValueError("need at least one matrix")
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise ValueError("matrices have mismatched shapes")
    return np.stack(mats)


def arithmetic_mean(covs) -> np.ndarray:
    """Elementwise mean of SPD matrices (SPD by convexity of the cone)."""
    stack = _check_stack(covs)
    mean = stack.mean(axis=0)
    return (mean + mean.T) / 2.0


def karcher_mean(covs, tol: float = 1e-9, max_iter: int = 50) -> np.ndarray:
    """Geometric (Karcher) mean of SPD matrices under the affine metric.

    Fixed-point iteration
        M <- M^{1/2} exp( mean_i log(M^{-1/2} C_i M^{-1/2}) ) M^{1/2}
    started from the arithmetic mean. Returns once the Frobenius norm of
    the mean log (the Riemannian gradient) drops below ``tol``.

    Raises
    ------
    ConvergenceError
        If the gradient norm is still above ``tol`` after ``max_iter``
        iterations.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    stack = _check_stack(covs)
    if len(stack) == 1:
        return stack[0].copy()

    m = arithmetic_mean(stack)
    for _ in range(max_iter):
        w, v = _eig_pd(m, "karcher_mean")
        m_isqrt = _assemble(v, 1.0 / np.sqrt(w))
        tangent = np.zeros_like(m)
        for c in stack:
            inner = m_isqrt @ c @ m_isqrt
            tangent += logm((inner + inner.T) / 2.0)
        tangent /= len(stack)
        if np.linalg.norm(tangent) < tol:
            return m
        m_sqrt = _assemble(v, np.sqrt(w))
        m = m_sqrt @ expm(tangent) @ m_sqrt
        m = (m + m.T) / 2.0
    raise ConvergenceError(f"Karcher mean did not reach tol={tol} in {max_iter} iterations")

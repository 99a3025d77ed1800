"""Spectral kernel for nonnegative and Metzler matrices.

Provides the Perron root/vector machinery the rest of the package leans on:
irreducibility testing, power iteration with a dense fallback, resolvent
inverses of Hurwitz Metzler matrices, and the rank-one adjugate identity at
the rightmost eigenvalue (diagonal cofactors proportional to the product of
the right and left Perron vectors).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NoConvergence, RankTestFailure, SingularMatrix

# Numerical policy knobs. Matrices in scope are small (k <= 64), so the
# defaults favour robustness over speed.
POWER_TOL = 1e-12
POWER_MAXITER = 10000
DENSE_FALLBACK_MAX = 64
MINV_RESIDUAL_TOL = 1e-10
MINV_SIGN_TOL = 1e-12
DET_SINGULAR_TOL = 1e-12
ADJ_MINOR_MAX = 10
ADJ_RANK_TOL = 1e-7
COFACTOR_REL_TOL = 1e-7


class SpectralData(NamedTuple):
    """Perron data of a nonnegative or Metzler matrix.

    rho is the spectral radius, s_abs the spectral abscissa (rightmost real
    part). w_right and pi_left are the eigenvectors attached to the Perron
    eigenvalue (s_abs for Metzler input, equal to rho when the matrix is
    nonnegative). w_right sums to one; pi_left is scaled so pi_left@w_right
    equals one when the matrix is irreducible, otherwise to unit sum.
    """

    rho: float
    s_abs: float
    w_right: np.ndarray
    pi_left: np.ndarray
    irreducible: bool


class KirchhoffData(NamedTuple):
    """Rank-one adjugate data at the rightmost eigenvalue of a Metzler matrix.

    cofactors holds the diagonal cofactors of (lambda_P*Id - J); scale is the
    computed proportionality constant c in adj(lambda_P*Id - J) = c*w*pi.
    Its sign is reported, never assumed.
    """

    lambda_P: float
    w: np.ndarray
    pi: np.ndarray
    cofactors: np.ndarray
    scale: float


def is_metzler(M: np.ndarray, tol: float = 0.0) -> bool:
    """True when all off-diagonal entries of M are >= -tol."""
    M = np.asarray(M, dtype=float)
    off = M - np.diag(np.diag(M))
    return bool(np.min(off) >= -tol)


def spectral_abscissa(M: np.ndarray) -> float:
    """Rightmost real part of the spectrum, by dense eigendecomposition."""
    return float(np.max(np.linalg.eigvals(np.asarray(M, dtype=float)).real))


def is_hurwitz(M: np.ndarray, tol: float = 1e-9) -> bool:
    """True when the spectral abscissa is below -tol."""
    return spectral_abscissa(M) < -tol


def is_irreducible(M: np.ndarray) -> bool:
    """Strong connectivity of the digraph with an edge i->j iff M[j, i] != 0.

    Diagonal entries are ignored. A 1x1 matrix counts as irreducible.
    """
    M = np.asarray(M, dtype=float)
    k = M.shape[0]
    if k == 1:
        return True
    mask = M != 0.0
    np.fill_diagonal(mask, False)
    return _reaches_all(mask, 0) and _reaches_all(mask.T, 0)


def _reaches_all(adj: np.ndarray, start: int) -> bool:
    # adj[j, i] True means an edge i -> j; BFS over columns.
    k = adj.shape[0]
    seen = np.zeros(k, dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(adj[:, i]):
                if not seen[j]:
                    seen[j] = True
                    nxt.append(j)
        frontier = nxt
    return bool(seen.all())


def _power_iteration(M: np.ndarray, tol: float, maxiter: int):
    """Dominant eigenpair of a nonnegative matrix by power iteration.

    Returns (eigenvalue, vector) or None when the iteration fails to settle.
    The caller guarantees M has a strictly positive diagonal, which makes
    every irreducible input primitive and the iteration convergent.
    """
    k = M.shape[0]
    v = np.full(k, 1.0 / k)
    lam = 0.0
    for _ in range(maxiter):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v  # nilpotent-like direction; eigenvalue 0
        w = w / norm
        # Perron vectors of nonnegative matrices are sign-constant; keep +.
        if w.sum() < 0:
            w = -w
        lam = float(w @ M @ w)
        if np.linalg.norm(w - v) < tol * max(1.0, np.linalg.norm(w)):
            return lam, w
        v = w
    return None


def _dense_perron(M: np.ndarray):
    """Dominant-real-part eigenpair by dense decomposition (fallback path)."""
    vals, vecs = np.linalg.eig(M)
    idx = int(np.argmax(vals.real))
    lam = float(vals[idx].real)
    v = vecs[:, idx].real
    if v.sum() < 0:
        v = -v
    return lam, v


def perron(M: np.ndarray, tol: float = POWER_TOL, maxiter: int = POWER_MAXITER) -> SpectralData:
    """Perron root and left/right vectors of a nonnegative or Metzler matrix.

    The matrix is shifted by c*Id with c = max(0, -min diagonal) + 1, which is
    nonnegative with a strictly positive diagonal, so power iteration converges
    whenever the matrix is irreducible. On iteration failure the computation
    falls back to a dense eigendecomposition for sizes up to 64 and raises
    NoConvergence above that.

    For reducible input rho and s_abs are still correct (taken from the full
    spectrum) but the vectors may have zero entries.

    Parameters
    ----------
    M : ndarray
        Square matrix with nonnegative off-diagonal entries.
    tol : float
        Relative change threshold on the iterated vector.
    maxiter : int
        Power iteration cap before the dense fallback.

    Returns
    -------
    SpectralData
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("perron expects a square matrix")
    off = M - np.diag(np.diag(M))
    if np.min(off) < 0:
        raise ValueError("matrix has a negative off-diagonal entry; not Metzler")
    k = M.shape[0]
    nonneg = bool(np.min(M) >= 0.0)
    shift = max(0.0, -float(np.min(np.diag(M)))) + 1.0
    Ms = M + shift * np.eye(k)

    right = _power_iteration(Ms, tol, maxiter)
    left = _power_iteration(Ms.T, tol, maxiter)
    if right is None or left is None:
        if k > DENSE_FALLBACK_MAX:
            raise NoConvergence(
                f"power iteration did not converge in {maxiter} steps for size {k}"
            )
        right = _dense_perron(Ms)
        left = _dense_perron(Ms.T)
    lam_s, w = right
    _, pi = left

    s_abs = lam_s - shift
    if nonneg:
        rho = s_abs
    else:
        # The spectral radius of a Metzler matrix with negative diagonal can
        # sit on an eigenvalue other than the rightmost one; read it off the
        # full spectrum (sizes in scope are tiny).
        if k > DENSE_FALLBACK_MAX:
            raise NoConvergence(
                f"spectral radius of a non-nonnegative Metzler matrix needs a dense "
                f"solve, unsupported above size {DENSE_FALLBACK_MAX} (got {k})"
            )
        rho = float(np.max(np.abs(np.linalg.eigvals(M))))

    irr = is_irreducible(M)
    w = np.where(np.abs(w) < 10 * tol * np.max(np.abs(w)), 0.0, w)
    pi = np.where(np.abs(pi) < 10 * tol * np.max(np.abs(pi)), 0.0, pi)
    wsum = w.sum()
    if wsum != 0.0:
        w = w / wsum
    dot = float(pi @ w)
    if irr and dot > 0.0:
        pi = pi / dot
    elif pi.sum() != 0.0:
        pi = pi / pi.sum()
    return SpectralData(rho=rho, s_abs=s_abs, w_right=w, pi_left=pi, irreducible=irr)


def m_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of -A for a Hurwitz Metzler matrix A.

    The result of (-A)^{-1} is entrywise nonnegative for such A; this is
    asserted up to roundoff, along with the inversion residual.

    Raises
    ------
    SingularMatrix
        When |det A| is below 1e-12 relative to the Hadamard bound of A
        (the Hurwitz property has failed numerically).
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    det = float(np.linalg.det(A))
    hadamard = float(np.prod(np.linalg.norm(A, axis=1))) if k else 1.0
    if abs(det) <= DET_SINGULAR_TOL * max(hadamard, 1e-300):
        raise SingularMatrix(f"matrix is singular to tolerance (det={det:.3e})")
    out = np.linalg.solve(-A, np.eye(k))
    scale = max(1.0, float(np.max(np.abs(out))))
    assert float(np.min(out)) >= -MINV_SIGN_TOL * scale, "(-A)^{-1} has a negative entry"
    residual = float(np.max(np.abs((-A) @ out - np.eye(k))))
    if residual > MINV_RESIDUAL_TOL * max(1.0, float(np.max(np.abs(A)))):
        raise SingularMatrix(f"inversion residual {residual:.3e} too large")
    return out


def adjugate(M: np.ndarray) -> np.ndarray:
    """Adjugate (transposed cofactor matrix), adj(M) @ M = det(M) * Id.

    Uses explicit minors up to size 10. Above that, for numerically singular
    M of nullity one, the adjugate is reconstructed as a scaled outer product
    of the SVD null vectors, anchored to one explicitly computed cofactor.
    """
    M = np.asarray(M, dtype=float)
    k = M.shape[0]
    if k == 0:
        return np.zeros((0, 0))
    if k == 1:
        return np.array([[1.0]])
    if k <= ADJ_MINOR_MAX:
        out = np.empty((k, k))
        idx = np.arange(k)
        for i in range(k):
            rows = idx[idx != i]
            for j in range(k):
                cols = idx[idx != j]
                minor = M[np.ix_(rows, cols)]
                # adj(M)[j, i] = (-1)^{i+j} det(M with row i, col j removed)
                out[j, i] = ((-1.0) ** (i + j)) * np.linalg.det(minor)
        return out
    # Large singular case: adj(M) = c * w @ pi with M w = 0 and pi M = 0.
    U, s, Vt = np.linalg.svd(M)
    if s[-1] > 1e-9 * s[0]:
        raise RankTestFailure("large-matrix adjugate path requires a singular matrix")
    w = Vt[-1, :]
    pi = U[:, -1]
    outer = np.outer(w, pi)  # adj columns span ker(M), rows span ker(M^T)
    rows = np.arange(1, k)
    cols = np.arange(1, k)
    c00 = np.linalg.det(M[np.ix_(rows, cols)])  # cofactor (0,0), sign +
    if outer[0, 0] == 0.0:
        raise RankTestFailure("null-vector outer product vanished at the anchor entry")
    return outer * (c00 / outer[0, 0])


def kirchhoff_perron(J: np.ndarray, rel_tol: float = COFACTOR_REL_TOL) -> KirchhoffData:
    """Rank-one adjugate identity at the rightmost eigenvalue of Metzler J.

    For irreducible Metzler J with rightmost (simple) eigenvalue lambda_P, the
    adjugate of N = lambda_P*Id - J has rank one and factors as c * w * pi
    where J w = lambda_P w and pi J = lambda_P pi. In particular the diagonal
    cofactors of N are proportional to w_k * pi_k entrywise; when J has zero
    row sums this reduces to the classical tree-weight formula for the
    stationary distribution.

    Returns the eigenvalue, both eigenvectors (w normalized to unit sum,
    pi to pi @ w = 1), the diagonal cofactors of N, and the constant c.

    Raises
    ------
    RankTestFailure
        When the adjugate is not numerically rank one, or the cofactors are
        not proportional to w_k * pi_k within rel_tol.
    """
    J = np.asarray(J, dtype=float)
    k = J.shape[0]
    if k == 1:
        lam = float(J[0, 0])
        one = np.array([1.0])
        return KirchhoffData(lam, one, one, np.array([1.0]), 1.0)
    sd = perron(J)
    lam = sd.s_abs
    N = lam * np.eye(k) - J
    adj = adjugate(N)

    # Rank-one factor check via the dominant singular triplet.
    U, s, Vt = np.linalg.svd(adj)
    if s[0] == 0.0:
        raise RankTestFailure("adjugate vanished; eigenvalue is not simple")
    if k > 1 and s[1] > ADJ_RANK_TOL * s[0]:
        raise RankTestFailure(
            f"adjugate is not rank one (sigma2/sigma1 = {s[1] / s[0]:.3e})"
        )
    w = U[:, 0]
    pi = Vt[0, :]
    if w.sum() < 0:
        w = -w
    if pi.sum() < 0:
        pi = -pi
    w = w / w.sum()
    dot = float(pi @ w)
    if dot == 0.0:
        raise RankTestFailure("left and right null vectors are orthogonal")
    pi = pi / dot
    # Constant c with respect to the normalized pair.
    wp = np.outer(w, pi)
    mask = np.abs(wp) > 1e-13 * np.max(np.abs(wp))
    c = float(np.mean(adj[mask] / wp[mask]))

    cof = np.diag(adj).copy()
    target = w * pi
    scale = np.max(np.abs(cof))
    if scale > 0:
        ratios = cof[np.abs(target) > 1e-13] / target[np.abs(target) > 1e-13]
        spread = float(np.max(ratios) - np.min(ratios))
        mean = float(np.mean(np.abs(ratios)))
        if mean == 0.0 or spread > rel_tol * mean:
            raise RankTestFailure(
                f"diagonal cofactors not proportional to w*pi (spread {spread:.3e})"
            )
    return KirchhoffData(lambda_P=lam, w=w, pi=pi, cofactors=cof, scale=c)

"""Elementary symmetric polynomials and the Hessian-quotient operator.

The operator acting on a Hermitian matrix ``A`` (relative to a positive
definite metric ``g``) is

    F(A) = (S_n(lam) / S_{n-alpha}(lam)) ** (1/alpha),

with ``lam`` the generalized eigenvalues of ``A`` with respect to ``g``.

Index conventions used throughout the package:

* lower-index matrices ``A[..., i, j] = A_{i jbar}``;
* upper-index matrices ``B[..., i, j] = B^{i jbar}`` are paired with lower ones
  by ``sum_ij B[i, j] * A[i, j]`` (real for Hermitian arguments).  In matrix
  language this pairing is ``trace(B.T @ A)``, so ``g^{i jbar}`` is stored as
  ``conj(inv(g))``.

Indices passed to ``sym_deleted`` are zero-based.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from hessquot import kernels
from hessquot.errors import AdmissibilityError, DomainError

DEGENERATE_GAP = 1e-8


def binom(n, k):
    return comb(n, k)


def problem_scale(lam):
    """Tolerance scale max(1, |lam|_inf)^n for a spectrum ``lam``."""
    lam = np.asarray(lam, dtype=float)
    return max(1.0, float(np.max(np.abs(lam)))) ** lam.shape[-1]


def _rows(lam):
    lam = np.asarray(lam, dtype=np.float64)
    return lam.reshape(-1, lam.shape[-1]), lam.shape[:-1]


def esym_all(lam):
    """S_0..S_n along the last axis of ``lam``; shape ``lam.shape[:-1] + (n+1,)``."""
    rows, lead = _rows(lam)
    return kernels.esym(rows).reshape(lead + (rows.shape[1] + 1,))


def esym_deleted_all(lam):
    """S_{k;i} for every i; shape ``lead + (n, n+1)`` indexed ``[..., i, k]``."""
    rows, lead = _rows(lam)
    n = rows.shape[1]
    return kernels.esym_deleted(rows).reshape(lead + (n, n + 1))


def esym_deleted2_all(lam):
    """S_{k;ij} for every pair; shape ``lead + (n, n, n+1)``.

    The diagonal ``[..., i, i, :]`` removes entry i once, i.e. equals
    ``S_{k;i}``.  Sums over distinct pairs must skip it explicitly.
    """
    rows, lead = _rows(lam)
    n = rows.shape[1]
    return kernels.esym_deleted2(rows).reshape(lead + (n, n, n + 1))


def _pick(table, k):
    """Index the trailing S_k axis, treating k < 0 as the zero polynomial."""
    if k < 0:
        return np.zeros(table.shape[:-1])
    return table[..., k]


def elementary_symmetric(lam, k):
    """S_k(lam) for a single real vector.

    Uses the coefficient recurrence of prod(x + lam_i), never monomial
    enumeration.

    >>> elementary_symmetric([1.0, 2.0, 3.0], 3)
    6.0
    """
    lam = np.asarray(lam, dtype=float).ravel()
    n = lam.size
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}")
    return float(kernels.esym(lam[None, :])[0, k])


def sym_deleted(lam, k, deleted):
    """S_k with the entries listed in ``deleted`` (at most two, distinct) zeroed."""
    lam = np.asarray(lam, dtype=float).ravel()
    n = lam.size
    deleted = tuple(int(i) for i in deleted)
    if len(deleted) > 2:
        raise DomainError("at most two deleted indices are supported")
    if len(set(deleted)) != len(deleted):
        raise DomainError(f"duplicate deleted indices {deleted}")
    if any(not 0 <= i < n for i in deleted):
        raise DomainError(f"deleted indices {deleted} out of range for n={n}")
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}")
    masked = lam.copy()
    masked[list(deleted)] = 0.0
    return float(kernels.esym(masked[None, :])[0, k])


@dataclass(frozen=True)
class EigenSpectrum:
    """Ascending eigenvalues ``lam`` and unitary eigenvectors ``basis``.

    For a generalized problem ``whiten`` is ``inv(chol(g))``, so that
    ``whiten @ A @ whiten^H = basis @ diag(lam) @ basis^H``.
    """

    lam: np.ndarray
    basis: np.ndarray
    whiten: np.ndarray | None = None

    def reconstruct(self):
        return (self.basis * self.lam[..., None, :]) @ np.conj(np.swapaxes(self.basis, -1, -2))


def _eigh2(a):
    """Closed-form eigen-decomposition of batched Hermitian 2 x 2 matrices."""
    p, d = a[..., 0, 0].real, a[..., 1, 1].real
    b = a[..., 0, 1]
    m = 0.5 * (p + d)
    half = 0.5 * (p - d)
    r = np.hypot(half, np.abs(b))
    lam = np.stack([m - r, m + r], axis=-1)
    # eigenvector of the larger eigenvalue, from the better-conditioned row
    top = half >= 0
    v0 = np.where(top, half + r, b)
    v1 = np.where(top, np.conj(b), r - half)
    nrm = np.sqrt(np.abs(v0) ** 2 + np.abs(v1) ** 2)
    flat = nrm == 0
    nrm = np.where(flat, 1.0, nrm)
    v0 = np.where(flat, 0.0, v0 / nrm)
    v1 = np.where(flat, 1.0, v1 / nrm)
    basis = np.empty(a.shape, dtype=complex)
    basis[..., 0, 1] = v0
    basis[..., 1, 1] = v1
    basis[..., 0, 0] = -np.conj(v1)
    basis[..., 1, 0] = np.conj(v0)
    return lam, basis


def _eigh(a):
    if a.shape[-1] == 2:
        return _eigh2(a)
    return np.linalg.eigh(a)


def generalized_eigh(matrix, metric=None):
    """Batched generalized Hermitian eigenproblem via Cholesky reduction.

    Returns an :class:`EigenSpectrum` whose arrays carry the leading batch
    dimensions of ``matrix``.
    """
    a = np.asarray(matrix)
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    if metric is None:
        lam, basis = _eigh(a)
        return EigenSpectrum(lam, basis, None)
    g = np.asarray(metric)
    chol = np.linalg.cholesky(g)
    eye = np.broadcast_to(np.eye(g.shape[-1], dtype=chol.dtype), chol.shape)
    whiten = np.linalg.solve(chol, eye)
    reduced = whiten @ a @ np.conj(np.swapaxes(whiten, -1, -2))
    reduced = 0.5 * (reduced + np.conj(np.swapaxes(reduced, -1, -2)))
    lam, basis = _eigh(reduced)
    return EigenSpectrum(lam, basis, whiten)


spectrum = generalized_eigh


def _check_alpha(alpha, n):
    if not 1 <= alpha <= n:
        raise DomainError(f"alpha={alpha} outside 1..{n}")


def _require_admissible(lam):
    lo = float(np.min(lam))
    if not lo > 0.0:
        raise AdmissibilityError(
            f"matrix not admissible: minimum generalized eigenvalue {lo:.6g}", min_eigenvalue=lo
        )


def quotient_from_eigs(lam, alpha):
    """F and its eigenvalue gradient for positive spectra ``lam[..., n]``."""
    rows, lead = _rows(lam)
    f, df = kernels.quotient_grad(rows, int(alpha))
    return f.reshape(lead), df.reshape(lead + (rows.shape[1],))


def _upper_from_eigs(spec, weights):
    """Upper-index tensor sum_k w_k dlam_k/dA in the original coordinates."""
    u = spec.basis
    m = (u * weights[..., None, :]) @ np.conj(np.swapaxes(u, -1, -2))
    if spec.whiten is not None:
        w = spec.whiten
        m = np.conj(np.swapaxes(w, -1, -2)) @ m @ w
    # pairing is sum_ij B[i,j] A[i,j] = trace(M A) with B = M^T
    return np.swapaxes(m, -1, -2)


def quotient_field(matrix, metric, alpha, gradient=True):
    """Batched F (and F^{i jbar}) over leading axes.

    Returns ``(F, grad, spec)``; ``grad`` is None when not requested.  Raises
    :class:`AdmissibilityError` if any generalized eigenvalue is non-positive.
    """
    a = np.asarray(matrix)
    n = a.shape[-1]
    _check_alpha(alpha, n)
    spec = generalized_eigh(a, metric)
    _require_admissible(spec.lam)
    f, df = quotient_from_eigs(spec.lam, alpha)
    grad = _upper_from_eigs(spec, df) if gradient else None
    return f, grad, spec


def quotient_F(matrix, metric=None, alpha=1):
    """(S_n / S_{n-alpha})^(1/alpha) of the generalized eigenvalues."""
    f, _, _ = quotient_field(np.asarray(matrix)[None], None if metric is None else np.asarray(metric)[None], alpha, gradient=False)
    return float(f[0])


def quotient_F_gradient(matrix, metric=None, alpha=1):
    """Upper-index gradient F^{i jbar} = dF / dA_{i jbar}, positive definite."""
    _, grad, _ = quotient_field(np.asarray(matrix)[None], None if metric is None else np.asarray(metric)[None], alpha)
    return grad[0]


def quotient_F_gradient_dual(matrix, metric=None, alpha=1):
    """Same gradient through the reciprocal form C_n^alpha / psi = S_alpha(1/lam).

    With mu = 1/lam, F^{-alpha} = S_alpha(mu) gives
    dF/dlam_i = F^(alpha+1) / alpha * S_{alpha-1;i}(mu) * mu_i^2.
    """
    a = np.asarray(matrix)[None]
    g = None if metric is None else np.asarray(metric)[None]
    n = a.shape[-1]
    _check_alpha(alpha, n)
    spec = generalized_eigh(a, g)
    _require_admissible(spec.lam)
    mu = 1.0 / spec.lam
    s_mu = esym_all(mu)
    s1_mu = esym_deleted_all(mu)
    f = s_mu[..., alpha] ** (-1.0 / alpha)
    df = (f ** (alpha + 1) / alpha)[..., None] * s1_mu[..., alpha - 1] * mu**2
    return _upper_from_eigs(spec, df)[0]


def eigen_hessian(lam, alpha):
    """Second partials d2f/dlam_i dlam_j of f = (S_n/S_{n-alpha})^(1/alpha)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    s = esym_all(lam)
    s1 = esym_deleted_all(lam)
    s2 = esym_deleted2_all(lam)
    top, bot = s[..., n], s[..., n - alpha]
    offdiag = 1.0 - np.eye(n)
    dtop = s1[..., n - 1] / top[..., None]
    dbot = _pick(s1, n - alpha - 1) / bot[..., None]
    phi_i = (dtop - dbot) / alpha
    h_top = _pick(s2, n - 2) * offdiag / top[..., None, None] - dtop[..., :, None] * dtop[..., None, :]
    h_bot = _pick(s2, n - alpha - 2) * offdiag / bot[..., None, None] - dbot[..., :, None] * dbot[..., None, :]
    phi_ij = (h_top - h_bot) / alpha
    f = (top / bot) ** (1.0 / alpha)
    return f[..., None, None] * (phi_i[..., :, None] * phi_i[..., None, :] + phi_ij)


def quotient_F_second_derivative(matrix, metric, alpha, direction):
    """d^2/ds^2 F(A + s H) at s = 0 for one matrix ``A`` and direction ``H``.

    Off-diagonal eigen-couplings use divided differences of the gradient;
    pairs closer than ``DEGENERATE_GAP * max|lam|`` use the analytic limit
    f_ii - f_ij evaluated with both eigenvalues moved to their midpoint.
    """
    a = np.asarray(matrix)
    n = a.shape[-1]
    _check_alpha(alpha, n)
    spec = generalized_eigh(a, metric)
    lam = spec.lam
    _require_admissible(lam)
    h = np.asarray(direction)
    if spec.whiten is not None:
        h = spec.whiten @ h @ np.conj(spec.whiten.T)
    ht = np.conj(spec.basis.T) @ h @ spec.basis
    _, df = quotient_from_eigs(lam, alpha)
    fij = eigen_hessian(lam, alpha)
    d = np.real(np.diag(ht))
    total = float(d @ fij @ d)
    tol = DEGENERATE_GAP * float(np.max(np.abs(lam)))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gap = lam[i] - lam[j]
            if abs(gap) < tol:
                mid = lam.copy()
                mid[i] = mid[j] = 0.5 * (lam[i] + lam[j])
                hm = eigen_hessian(mid, alpha)
                dd = hm[i, i] - hm[i, j]
            else:
                dd = (df[i] - df[j]) / gap
            total += dd * abs(ht[i, j]) ** 2
    return total


def duality_product(lam, alpha):
    """S_n/S_{n-alpha}(lam) * S_alpha(1/lam); identically 1 for lam > 0."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    s = esym_all(lam)
    s_inv = esym_all(1.0 / lam)
    return s[..., n] / s[..., n - alpha] * s_inv[..., alpha]


def glz_terms(lam, xi, alpha):
    """Batched (lhs, middle) of the GLZ chain lhs >= middle >= 0.

    lhs = sum_i S_{a-1;i}/lam_i |xi_i|^2 + sum_{i != j} S_{a-2;ij} xi_i conj(xi_j)
    middle = |sum_i S_{a-1;i} xi_i|^2 / S_a
    """
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=complex)
    n = lam.shape[-1]
    if not 2 <= alpha <= n:
        raise DomainError(f"alpha={alpha} outside 2..{n}")
    if np.any(lam <= 0):
        raise DomainError("GLZ inequality needs strictly positive lambda")
    s = esym_all(lam)
    s1 = esym_deleted_all(lam)[..., alpha - 1]
    s2 = esym_deleted2_all(lam)[..., alpha - 2] * (1.0 - np.eye(n))
    lhs = np.sum(s1 / lam * np.abs(xi) ** 2, axis=-1)
    lhs = lhs + np.real(np.einsum("...ij,...i,...j->...", s2, xi, np.conj(xi)))
    middle = np.abs(np.sum(s1 * xi, axis=-1)) ** 2 / s[..., alpha]
    return lhs, middle


def glz_scale(lam, xi):
    """Tolerance scale for GLZ: max(1,|lam|)^n * max(1,|xi|^2) * max(1, 1/min lam)."""
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi)
    n = lam.shape[-1]
    big = np.maximum(1.0, np.max(np.abs(lam), axis=-1)) ** n
    return big * np.maximum(1.0, np.max(np.abs(xi), axis=-1) ** 2) * np.maximum(1.0, 1.0 / np.min(lam, axis=-1))


def glz_inequality_gap(lam, xi, alpha):
    """(lhs - middle, middle) for one draw; both are non-negative."""
    lhs, middle = glz_terms(np.asarray(lam, dtype=float)[None], np.asarray(xi)[None], alpha)
    return float(lhs[0] - middle[0]), float(middle[0])


def c2_consequence(g_diag, dg, alpha):
    """Sum over l of the GLZ left side at lam_i = 1/g_ii, xi_i = lam_i^2 dg[i, l].

    ``g_diag`` holds the diagonal entries g_{i ibar} of the diagonalised
    matrix, ``dg[..., i, l]`` its first derivatives g_{i ibar l}.  The result
    is non-negative (it dominates the middle GLZ term for every l).
    """
    g_diag = np.asarray(g_diag, dtype=float)
    dg = np.asarray(dg, dtype=complex)
    lam = 1.0 / g_diag
    n = lam.shape[-1]
    s1 = esym_deleted_all(lam)[..., alpha - 1]
    s2 = esym_deleted2_all(lam)[..., alpha - 2] * (1.0 - np.eye(n))
    first = np.sum(s1[..., :, None] * lam[..., :, None] ** 3 * np.abs(dg) ** 2, axis=(-1, -2))
    w = lam[..., :, None] ** 2 * dg
    second = np.real(np.einsum("...ij,...il,...jl->...", s2, w, np.conj(w)))
    return first + second


def equation_first_derivative_residual(g_diag, dg_l, dpsi_inv_l, alpha):
    """C_n^alpha d_l(1/psi) + sum_i S_{a-1;i}(g^{i ibar}) (g^{i ibar})^2 g_{i ibar l}.

    Inputs are in a frame where the metric is the identity and the matrix is
    diagonal with entries ``g_diag``; ``dg_l[i]`` is g_{i ibar l} and
    ``dpsi_inv_l`` is d_l(1/psi).  Zero when psi and the matrix are linked by
    the equation.
    """
    g_diag = np.asarray(g_diag, dtype=float).ravel()
    dg_l = np.asarray(dg_l, dtype=complex).ravel()
    if g_diag.shape != dg_l.shape:
        raise DomainError(f"dimension mismatch {g_diag.shape} vs {dg_l.shape}")
    n = g_diag.size
    _check_alpha(alpha, n)
    mu = 1.0 / g_diag
    s1 = _pick(esym_deleted_all(mu), alpha - 1)
    return binom(n, alpha) * dpsi_inv_l + complex(np.sum(s1 * mu**2 * dg_l))

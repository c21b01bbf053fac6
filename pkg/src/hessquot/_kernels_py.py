"""Pure numpy implementations of the batched symmetric-function kernels.

Every function takes a C-contiguous ``(m, n)`` float64 array of eigenvalue
rows and works on all rows at once.  The compiled module ``_kernels`` exposes
the same four functions with identical signatures and results.
"""

import numpy as np


def esym(lam):
    """S_0..S_n of every row, by expanding prod(1 + lam_i x)."""
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    m, n = lam.shape
    out = np.zeros((m, n + 1))
    out[:, 0] = 1.0
    for i in range(n):
        x = lam[:, i:i + 1]
        # right-hand side is materialised first, so old coefficients are used
        out[:, 1:i + 2] += x * out[:, 0:i + 1]
    return out


def esym_deleted(lam):
    """S_{k;i}: out[r, i, k] is S_k of row r with entry i set to zero."""
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    m, n = lam.shape
    out = np.empty((m, n, n + 1))
    for i in range(n):
        masked = lam.copy()
        masked[:, i] = 0.0
        out[:, i, :] = esym(masked)
    return out


def esym_deleted2(lam):
    """S_{k;ij}: entries i and j zeroed; on the diagonal i is zeroed once."""
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    m, n = lam.shape
    out = np.empty((m, n, n, n + 1))
    for i in range(n):
        for j in range(i, n):
            masked = lam.copy()
            masked[:, i] = 0.0
            masked[:, j] = 0.0
            s = esym(masked)
            out[:, i, j, :] = s
            out[:, j, i, :] = s
    return out


def quotient_grad(lam, alpha):
    """Value and eigenvalue gradient of f = (S_n / S_{n-alpha})^(1/alpha).

    Returns ``(f, df)`` with shapes ``(m,)`` and ``(m, n)``.  Rows must be
    strictly positive; no check is made here.
    """
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    m, n = lam.shape
    s = esym(lam)
    s1 = esym_deleted(lam)
    top = s[:, n]
    bot = s[:, n - alpha]
    f = (top / bot) ** (1.0 / alpha)
    grad_log = s1[:, :, n - 1] / top[:, None]
    if n - alpha - 1 >= 0:
        grad_log = grad_log - s1[:, :, n - alpha - 1] / bot[:, None]
    df = (f / alpha)[:, None] * grad_log
    return f, df

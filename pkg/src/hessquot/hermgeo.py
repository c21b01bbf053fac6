"""Hermitian metric geometry on grid domains.

Conventions (lower-index storage ``g[..., i, j] = g_{i jbar}``):

* ``Gamma[..., k, i, j] = Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}``
* ``T[..., k, i, j] = Gamma^k_{ij} - Gamma^k_{ji}``
* ``R[..., i, j, k, l] = R_{i jbar k lbar}
  = -d_i dbar_j g_{k lbar} + g^{p qbar} d_i g_{k qbar} dbar_j g_{p lbar}``

Upper-index tensors are stored as ``g^{p qbar} = conj(inv(g))[p, q]``.
Derivative jets use ``dg[..., k, i, j] = d_k g_{i jbar}`` and
``ddg[..., k, l, i, j] = d_k dbar_l g_{i jbar}``.
"""

from dataclasses import dataclass

import numpy as np

from hessquot.discretization import Domain, complex_hessian
from hessquot.errors import ConfigurationError, ValidationError


def _ghost_domain(domain, layers=1):
    """Box covering ``domain`` plus ``layers`` extra nodes on each side."""
    h = domain.h
    return Domain.box(domain.n, domain.resolution + 2 * layers, domain.lower - layers * h, domain.upper + layers * h)


def _pad_field(domain, f, trailing):
    """Ghost layer for a field with ``trailing`` tensor axes (periodic or NaN)."""
    width = [(1, 1)] * domain.dim + [(0, 0)] * trailing
    if domain.periodic:
        return np.pad(f, width, mode="wrap")
    return np.pad(f.astype(complex), width, constant_values=np.nan)


def _crop(f, dim, layers=1):
    sl = tuple(slice(layers, -layers) for _ in range(dim))
    return f[sl]


def _real_first(p, domain, a):
    """Central first difference along real axis a of a padded array."""
    res = domain.resolution
    hi = [slice(1, 1 + res)] * domain.dim
    lo = [slice(1, 1 + res)] * domain.dim
    hi[a] = slice(2, 2 + res)
    lo[a] = slice(0, res)
    return (p[tuple(hi)] - p[tuple(lo)]) / (2 * domain.h[a])


def _dz_padded(p, domain, k, bar=False):
    dx = _real_first(p, domain, 2 * k)
    dy = _real_first(p, domain, 2 * k + 1)
    return 0.5 * (dx + 1j * dy) if bar else 0.5 * (dx - 1j * dy)


def dz(f, domain, trailing=0):
    """d_k f for every k; returns shape ``grid + (n,) + tensor``, NaN off-stencil."""
    p = _pad_field(domain, np.asarray(f, dtype=complex), trailing)
    return np.stack([_dz_padded(p, domain, k) for k in range(domain.n)], axis=domain.dim)


def dzbar(f, domain, trailing=0):
    """dbar_k f for every k; same layout as :func:`dz`."""
    p = _pad_field(domain, np.asarray(f, dtype=complex), trailing)
    return np.stack([_dz_padded(p, domain, k, bar=True) for k in range(domain.n)], axis=domain.dim)


class MetricField:
    """Grid field of Hermitian positive definite matrices g_{i jbar}.

    The field is stored with one ghost layer (``g_padded``) so that first and
    second differences exist at every grid node.  Optional analytic jets
    ``jets(z) -> (dg, ddg)`` allow exact connection data.
    """

    def __init__(self, domain, g_padded, jets=None, eps_floor=0.0):
        self.domain = domain
        n = domain.n
        g_padded = np.asarray(g_padded, dtype=complex)
        expect = tuple(r + 2 for r in domain.shape) + (n, n)
        if g_padded.shape != expect:
            raise ConfigurationError(f"metric field has shape {g_padded.shape}, expected {expect}")
        self.g_padded = 0.5 * (g_padded + np.conj(np.swapaxes(g_padded, -1, -2)))
        self.jets = jets
        self.g = _crop(self.g_padded, domain.dim)
        self.g_inv = np.linalg.inv(self.g)
        self.g_upper = np.conj(self.g_inv)
        lam = np.linalg.eigvalsh(self.g)
        self.min_eigenvalue = float(lam[..., 0].min())
        # lets callers skip the Cholesky reduction on flat metrics
        self.identity = bool(np.all(self.g == np.eye(n)))
        if not self.min_eigenvalue > eps_floor:
            raise ValidationError(f"metric not positive definite: minimum eigenvalue {self.min_eigenvalue:.3g}")

    @property
    def h(self):
        return self.domain.h

    @classmethod
    def from_function(cls, domain, func, jets=None):
        """Sample ``func(z)`` (z of shape ``(n,) + grid``) on the grid plus ghosts."""
        if domain.periodic:
            g = np.asarray(func(domain.z()), dtype=complex)
            return cls(domain, _pad_field(domain, g, 2), jets)
        ghost = _ghost_domain(domain)
        return cls(domain, np.asarray(func(ghost.z()), dtype=complex), jets)

    @classmethod
    def from_samples(cls, domain, g):
        """Tabulated field on the grid; ghosts by wrap or quadratic extrapolation."""
        g = np.asarray(g, dtype=complex)
        if domain.periodic:
            return cls(domain, _pad_field(domain, g, 2))
        p = g
        for a in range(domain.dim):
            take = lambda i: np.take(p, [i], axis=a)
            lo = 3 * take(0) - 3 * take(1) + take(2)
            hi = 3 * take(-1) - 3 * take(-2) + take(-3)
            p = np.concatenate([lo, p, hi], axis=a)
        return cls(domain, p)

    @classmethod
    def flat(cls, domain):
        n = domain.n

        def func(z):
            return np.broadcast_to(np.eye(n, dtype=complex), z.shape[1:] + (n, n)).copy()

        def jets(z):
            shp = z.shape[1:]
            return np.zeros(shp + (n, n, n), complex), np.zeros(shp + (n, n, n, n), complex)

        return cls.from_function(domain, func, jets)

    @classmethod
    def conformal(cls, domain, weight=1.0):
        """g = exp(weight |z|^2) delta, non-Kaehler for n >= 2."""
        n = domain.n
        eye = np.eye(n)

        def func(z):
            e = np.exp(weight * np.sum(np.abs(z) ** 2, axis=0))
            return e[..., None, None] * eye

        def jets(z):
            e = np.exp(weight * np.sum(np.abs(z) ** 2, axis=0))
            zb = np.moveaxis(np.conj(z), 0, -1)
            zz = np.moveaxis(z, 0, -1)
            dg = weight * (e[..., None] * zb)[..., :, None, None] * eye
            inner = weight * eye + weight**2 * zb[..., :, None] * zz[..., None, :]
            ddg = (e[..., None, None] * inner)[..., :, :, None, None] * eye
            return dg, ddg

        return cls.from_function(domain, func, jets)

    @classmethod
    def kahler_quartic(cls, domain, c=0.1):
        """Kaehler metric of the potential |z|^2 + c |z|^4."""
        n = domain.n
        eye = np.eye(n)

        def func(z):
            r2 = np.sum(np.abs(z) ** 2, axis=0)
            zb = np.moveaxis(np.conj(z), 0, -1)
            zz = np.moveaxis(z, 0, -1)
            return (1 + 2 * c * r2)[..., None, None] * eye + 2 * c * zb[..., :, None] * zz[..., None, :]

        def jets(z):
            zb = np.moveaxis(np.conj(z), 0, -1)
            shp = z.shape[1:]
            dg = np.zeros(shp + (n, n, n), complex)
            for k in range(n):
                for i in range(n):
                    dg[..., k, i, i] += 2 * c * zb[..., k]
                    dg[..., k, i, k] += 2 * c * zb[..., i]
            ddg = np.zeros(shp + (n, n, n, n), complex)
            for k in range(n):
                for i in range(n):
                    ddg[..., k, k, i, i] += 2 * c
                    ddg[..., k, i, i, k] += 2 * c
            return dg, ddg

        return cls.from_function(domain, func, jets)

    @classmethod
    def kahler_exponential(cls, domain, c=0.2):
        """Kaehler metric of the potential |z|^2 + c exp(|z|^2).

        g_{i jbar} = delta_ij + c e^{|z|^2} (delta_ij + zbar_i z_j).
        """
        n = domain.n
        eye = np.eye(n)

        def parts(z):
            e = c * np.exp(np.sum(np.abs(z) ** 2, axis=0))
            zb = np.moveaxis(np.conj(z), 0, -1)
            zz = np.moveaxis(z, 0, -1)
            return e, zb, zz

        def func(z):
            e, zb, zz = parts(z)
            inner = eye + zb[..., :, None] * zz[..., None, :]
            return eye + e[..., None, None] * inner

        def jets(z):
            e, zb, zz = parts(z)
            inner = eye + zb[..., :, None] * zz[..., None, :]  # [i, j]
            # d_k of e*inner: e (zbar_k inner_ij + zbar_i delta_jk)
            a = zb[..., :, None, None] * inner[..., None, :, :] + zb[..., None, :, None] * eye[:, None, :]
            dg = e[..., None, None, None] * a
            # dbar_l of the bracket above, plus z_l times it
            b = (
                zz[..., None, :, None, None] * a[..., :, None, :, :]
                + eye[:, :, None, None] * inner[..., None, None, :, :]
                + zb[..., :, None, None, None] * eye[None, :, :, None] * zz[..., None, None, None, :]
                + eye[None, :, :, None] * eye[:, None, None, :]
            )
            ddg = e[..., None, None, None, None] * b
            return dg, ddg

        return cls.from_function(domain, func, jets)

    def jet_fields(self):
        """Finite-difference (dg, ddg) on the grid, 2nd-order central."""
        d = self.domain
        n = d.n
        p = self.g_padded
        dg = np.stack([_dz_padded(p, d, k) for k in range(n)], axis=d.dim)
        ddg = np.empty(d.shape + (n, n, n, n), dtype=complex)
        for k in range(n):
            for l in range(n):
                xk, yk, xl, yl = 2 * k, 2 * k + 1, 2 * l, 2 * l + 1
                D = lambda a, b: _second_tensor(p, d, a, b)
                ddg[..., k, l, :, :] = 0.25 * ((D(xk, xl) + D(yk, yl)) + 1j * (D(xk, yl) - D(yk, xl)))
        return dg, ddg

    def analytic_jets(self):
        if self.jets is None:
            return None
        return self.jets(self.domain.z())


def _second_tensor(p, dom, a, b):
    """real_second_derivative for arrays with two trailing tensor axes."""
    res = dom.resolution
    core = [slice(1, 1 + res)] * dom.dim

    def at(off):
        sl = list(core)
        for ax, o in off.items():
            sl[ax] = slice(1 + o, 1 + o + res)
        return p[tuple(sl)]

    h = dom.h
    if a == b:
        return (at({a: 1}) - 2 * at({}) + at({a: -1})) / h[a] ** 2
    return (at({a: 1, b: 1}) - at({a: 1, b: -1}) - at({a: -1, b: 1}) + at({a: -1, b: -1})) / (4 * h[a] * h[b])


@dataclass(frozen=True)
class ConnectionData:
    """Chern connection, torsion and curvature fields (see module conventions)."""

    gamma: np.ndarray
    torsion: np.ndarray
    curvature: np.ndarray
    g_upper: np.ndarray
    g: np.ndarray


def connection_from_jets(g, dg, ddg):
    """Connection data from a metric field and its derivative jets."""
    g_upper = np.conj(np.linalg.inv(g))
    gamma = np.einsum("...kl,...ijl->...kij", g_upper, dg)
    torsion = gamma - np.swapaxes(gamma, -1, -2)
    dbg = np.conj(np.swapaxes(dg, -1, -2))  # dbg[j, p, l] = dbar_j g_{p lbar}
    curvature = -ddg + np.einsum(
        "...pq,...ikq,...jpl->...ijkl", g_upper, dg, dbg
    )
    return ConnectionData(gamma, torsion, curvature, g_upper, g)


def build_connection(metric, analytic=False):
    """Gamma, T and R of the Chern connection.

    Derivatives of g come from 2nd-order central differences (using the
    ghost layer), or from the metric's analytic jets when ``analytic=True``.
    """
    d = metric.domain
    if d.resolution < 3:
        raise ConfigurationError("grid too small for the connection stencil")
    if analytic:
        jets = metric.analytic_jets()
        if jets is None:
            raise ConfigurationError("metric has no analytic jets")
        dg, ddg = jets
    else:
        dg, ddg = metric.jet_fields()
    return connection_from_jets(metric.g, dg, ddg)


def curvature_via_gamma(metric, conn):
    """Alternative R_{i jbar k lbar} = -g_{m lbar} dbar_j Gamma^m_{ik} (cross-check)."""
    d = metric.domain
    dbg = dzbar(conn.gamma, d, trailing=3)  # [..., j, m, i, k]
    return -np.einsum("...ml,...jmik->...ijkl", metric.g, dbg)


def covariant_hessian(u, metric):
    """u_{i jbar} = d_i dbar_j u (no connection term for scalars)."""
    return complex_hessian(u, metric.domain, mask_non_interior=False)


@dataclass
class CovariantJets:
    v2: np.ndarray  # v_{i jbar}
    v3: np.ndarray  # v_{i jbar k}
    v3b: np.ndarray  # v_{i jbar kbar}
    v4: np.ndarray  # v_{i jbar k lbar}
    v4b: np.ndarray  # v_{i jbar lbar k}, stored [i, j, l, k]


def covariant_jets(v, domain, conn):
    """Covariant derivatives of a scalar up to fourth order by finite differences."""
    d = domain.dim
    v2 = complex_hessian(np.asarray(v, dtype=float), domain, mask_non_interior=False)
    gam = conn.gamma
    cgam = np.conj(gam)
    dv2 = np.moveaxis(dz(v2, domain, trailing=2), d, -1)  # [i, j, k]
    v3 = dv2 - np.einsum("...lki,...lj->...ijk", gam, v2)
    dbv2 = np.moveaxis(dzbar(v2, domain, trailing=2), d, -1)
    v3b = dbv2 - np.einsum("...qkj,...iq->...ijk", cgam, v2)
    dbv3 = np.moveaxis(dzbar(v3, domain, trailing=3), d, -1)  # [i, j, k, l]
    v4 = dbv3 - np.einsum("...qlj,...iqk->...ijkl", cgam, v3)
    dv3b = np.moveaxis(dz(v3b, domain, trailing=3), d, -1)  # [i, j, l, k]
    v4b = dv3b - np.einsum("...pki,...pjl->...ijlk", gam, v3b)
    return CovariantJets(v2, v3, v3b, v4, v4b)


def interior_margin_mask(domain, margin):
    m = np.zeros(domain.shape, dtype=bool)
    if domain.periodic:
        m[:] = True
        return m
    sl = tuple(slice(margin, domain.resolution - margin) for _ in range(domain.dim))
    m[sl] = True
    return m & domain.active


def verify_commutation_identities(v, metric, rhs_connection=None, margin=3, region=None):
    """Max residuals of the first- and fourth-order commutation identities.

    Left sides use covariant derivatives built by finite differences with the
    finite-difference connection; right sides use ``rhs_connection``
    (default: analytic jets when the metric has them).  Residuals are taken
    over nodes at least ``margin`` cells from the box edge, where every
    stencil in the chain is complete.  ``region`` optionally restricts the
    maximum to nodes within that sup-distance of the grid centre, so that
    refinement studies compare the same physical set.
    """
    d = metric.domain
    fd = build_connection(metric)
    if rhs_connection is None:
        rhs_connection = build_connection(metric, analytic=metric.jets is not None)
    jets = covariant_jets(v, d, fd)
    T, R, G = rhs_connection.torsion, rhs_connection.curvature, rhs_connection.g_upper
    cT = np.conj(T)
    v2, v3, v3b, v4, v4b = jets.v2, jets.v3, jets.v3b, jets.v4, jets.v4b

    first = v3 - np.swapaxes(v3, -3, -1) - np.einsum("...lik,...lj->...ijk", T, v2)
    first_bar = v3b - np.swapaxes(v3b, -2, -1) - np.einsum("...ljk,...il->...ijk", cT, v2)
    rhs_a = np.einsum("...pq,...kliq,...pj->...ijkl", G, R, v2) - np.einsum("...pq,...klpj,...iq->...ijkl", G, R, v2)
    fourth_a = v4 - np.swapaxes(v4b, -1, -2) - rhs_a
    v4_swap = np.transpose(v4, tuple(range(v4.ndim - 4)) + tuple(v4.ndim - 4 + np.array([2, 3, 0, 1])))
    rhs_b = (
        np.einsum("...pq,...kliq,...pj->...ijkl", G, R, v2)
        - np.einsum("...pq,...ijkq,...pl->...ijkl", G, R, v2)
        + np.einsum("...pik,...pjl->...ijkl", T, v3b)
        + np.einsum("...qjl,...iqk->...ijkl", cT, v3)
        - np.einsum("...pik,...qjl,...pq->...ijkl", T, cT, v2)
    )
    fourth_b = v4 - v4_swap - rhs_b

    m1 = interior_margin_mask(d, max(margin - 1, 2))
    m4 = interior_margin_mask(d, margin)
    if region is not None:
        mid = 0.5 * (d.lower + d.upper)
        near = np.ones(d.shape, dtype=bool)
        for c, c0 in zip(d.open_coords(), mid):
            near = near & (np.abs(c - c0) <= region + 1e-12)
        m1 &= near
        m4 &= near

    def worst(res, mask):
        a = np.abs(res[mask])
        return float(np.nanmax(a)) if a.size else float("nan")

    return {
        "first": worst(first, m1),
        "first_conjugate": worst(first_bar, m1),
        "fourth": worst(fourth_a, m4),
        "fourth_swapped": worst(fourth_b, m4),
        "h": float(np.max(d.h)),
        "nodes": int(m4.sum()),
    }

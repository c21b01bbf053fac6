"""Structured grids in C^n, the complex Hessian stencil and field I/O.

Real coordinates are ordered ``(x_1, y_1, ..., x_n, y_n)`` with
``z_k = x_k + i y_k``; grid arrays have one axis per real coordinate.

Normalisation
-------------
``u_{i jbar} = d^2 u / dz_i dzbar_j`` is the raw complex Hessian, so that
``u = |z|^2`` gives the identity.  Background forms chi and omega are stored
as Hermitian matrix fields in the same convention.  The Laplacian is
``Delta u = 2 g^{i jbar} u_{i jbar}`` (so ``Delta |z|^2 = 2n`` on the flat
metric, ``LAPLACIAN_NORM = 1``) and the gradient norm is
``|grad u|^2 = 4 g^{i jbar} u_i u_jbar``, which is the Euclidean norm on the
flat metric.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from hessquot.errors import ConfigurationError, StencilError, UnsupportedOperationError

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2
LAPLACIAN_NORM = 1.0
GRADIENT_FACTOR = 4.0


def _stencil_offsets(dim):
    """Offsets of the 2nd-order stencil: centre, +-e_a, and +-e_a +- e_b for a < b."""
    offs = [np.zeros(dim, dtype=int)]
    for a in range(dim):
        for s in (1, -1):
            o = np.zeros(dim, dtype=int)
            o[a] = s
            offs.append(o)
    for a in range(dim):
        for b in range(a + 1, dim):
            for sa in (1, -1):
                for sb in (1, -1):
                    o = np.zeros(dim, dtype=int)
                    o[a], o[b] = sa, sb
                    offs.append(o)
    return np.array(offs)


@dataclass
class Domain:
    """Uniform grid over a box, ball or flat torus in C^n.

    ``lower``/``upper`` are per real axis.  Box and ball grids include both
    endpoints; torus grids are periodic with ``resolution`` points per
    period.  ``mask`` holds EXTERIOR / INTERIOR / BOUNDARY per node.
    """

    kind: str
    n: int
    resolution: int
    lower: np.ndarray
    upper: np.ndarray
    radius: float | None = None
    center: np.ndarray | None = None
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("box", "ball", "torus"):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.n < 1:
            raise ConfigurationError("complex dimension must be positive")
        if self.resolution < 3:
            raise ConfigurationError(f"resolution {self.resolution} too small for the stencil")
        self.lower = np.asarray(self.lower, dtype=float).reshape(2 * self.n)
        self.upper = np.asarray(self.upper, dtype=float).reshape(2 * self.n)
        if np.any(self.upper <= self.lower):
            raise ConfigurationError("empty extent")
        self.mask = self._classify()

    # constructors
    @classmethod
    def box(cls, n, resolution, lower=-1.0, upper=1.0):
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (2 * n)).copy()
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (2 * n)).copy()
        return cls("box", n, resolution, lo, hi)

    @classmethod
    def ball(cls, n, resolution, radius=1.0, center=None):
        c = np.zeros(2 * n) if center is None else np.asarray(center, dtype=float).reshape(2 * n)
        return cls("ball", n, resolution, c - radius, c + radius, radius=float(radius), center=c)

    @classmethod
    def torus(cls, n, resolution, period=1.0):
        p = np.broadcast_to(np.asarray(period, dtype=float), (2 * n)).copy()
        return cls("torus", n, resolution, np.zeros(2 * n), p)

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        n = int(d["n"])
        res = int(d["resolution"])
        if kind == "box":
            return cls.box(n, res, d.get("lower", -1.0), d.get("upper", 1.0))
        if kind == "ball":
            return cls.ball(n, res, d.get("radius", 1.0), d.get("center"))
        if kind == "torus":
            return cls.torus(n, res, d.get("period", 1.0))
        raise ConfigurationError(f"unknown domain kind {kind!r}")

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "resolution": self.resolution}
        if self.kind == "box":
            d.update(lower=self.lower.tolist(), upper=self.upper.tolist())
        elif self.kind == "ball":
            d.update(radius=self.radius, center=self.center.tolist())
        else:
            d.update(period=(self.upper - self.lower).tolist())
        return d

    # geometry
    @property
    def dim(self):
        return 2 * self.n

    @property
    def periodic(self):
        return self.kind == "torus"

    @property
    def shape(self):
        return (self.resolution,) * self.dim

    @property
    def size(self):
        return self.resolution**self.dim

    @property
    def h(self):
        span = self.upper - self.lower
        return span / (self.resolution if self.periodic else self.resolution - 1)

    def axes(self):
        """1-d coordinate arrays, one per real axis."""
        return [self.lower[a] + self.h[a] * np.arange(self.resolution) for a in range(self.dim)]

    def open_coords(self):
        """Coordinate arrays shaped for broadcasting against grid fields."""
        out = []
        for a, ax in enumerate(self.axes()):
            shape = [1] * self.dim
            shape[a] = self.resolution
            out.append(ax.reshape(shape))
        return out

    def coords(self):
        """Dense real coordinates, shape ``(2n,) + grid``."""
        return np.stack(np.broadcast_arrays(*self.open_coords()))

    def z(self):
        """Complex coordinates, shape ``(n,) + grid``."""
        x = self.coords()
        return x[0::2] + 1j * x[1::2]

    def _classify(self):
        mask = np.full(self.shape, INTERIOR, dtype=np.int8)
        if self.kind == "box":
            for a in range(self.dim):
                idx = [slice(None)] * self.dim
                idx[a] = 0
                mask[tuple(idx)] = BOUNDARY
                idx[a] = -1
                mask[tuple(idx)] = BOUNDARY
        elif self.kind == "ball":
            r2 = sum((c - c0) ** 2 for c, c0 in zip(self.open_coords(), self.center))
            inside = r2 <= self.radius**2 * (1 + 1e-12)
            # a node is interior when every stencil neighbour is inside
            padded = np.pad(inside, 1, constant_values=False)
            full = np.ones(self.shape, dtype=bool)
            for off in _stencil_offsets(self.dim):
                sl = tuple(slice(1 + o, 1 + o + self.resolution) for o in off)
                full &= padded[sl]
            mask[:] = EXTERIOR
            mask[inside] = BOUNDARY
            mask[inside & full] = INTERIOR
        return mask

    @property
    def interior(self):
        return self.mask == INTERIOR

    @property
    def boundary(self):
        return self.mask == BOUNDARY

    @property
    def active(self):
        return self.mask != EXTERIOR

    def boundary_points(self):
        """Real coordinates where Dirichlet data is sampled, shape ``(2n,) + grid``.

        Equal to the node coordinates except on ball boundary nodes, which are
        projected radially onto the sphere.
        """
        x = self.coords()
        if self.kind != "ball":
            return x
        d = x - self.center.reshape((-1,) + (1,) * self.dim)
        r = np.sqrt(np.sum(d**2, axis=0))
        scale = np.where(self.boundary & (r > 0), self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center.reshape((-1,) + (1,) * self.dim) + d * scale

    def pad(self, u):
        """One ghost layer: periodic copy on the torus, NaN elsewhere."""
        u = np.asarray(u)
        if self.periodic:
            return np.pad(u, 1, mode="wrap")
        fill = np.nan if np.issubdtype(u.dtype, np.inexact) else 0
        return np.pad(u.astype(np.result_type(u.dtype, float)), 1, constant_values=fill)

    def node_coords(self, index):
        return self.lower + self.h * np.asarray(index)


def distance_to_boundary(domain):
    """Exact distance to the boundary; 0 on boundary nodes, NaN on exterior ones."""
    if domain.periodic:
        raise UnsupportedOperationError("a torus has no boundary")
    x = domain.open_coords()
    if domain.kind == "box":
        sigma = np.full(domain.shape, np.inf)
        for a in range(domain.dim):
            sigma = np.minimum(sigma, np.minimum(x[a] - domain.lower[a], domain.upper[a] - x[a]))
    else:
        r = np.sqrt(sum((c - c0) ** 2 for c, c0 in zip(x, domain.center)))
        sigma = np.broadcast_to(domain.radius - r, domain.shape).copy()
        sigma = np.maximum(sigma, 0.0)
    sigma[domain.boundary] = 0.0
    sigma[domain.mask == EXTERIOR] = np.nan
    return sigma


def _shifted(padded, off, res):
    return padded[tuple(slice(1 + o, 1 + o + res) for o in off)]


def real_second_derivative(u, domain, a, b, padded=None):
    """Central second difference d^2u / dx_a dx_b on the grid (NaN without stencil)."""
    p = domain.pad(u) if padded is None else padded
    res, h = domain.resolution, domain.h
    e = np.zeros(domain.dim, dtype=int)
    if a == b:
        e[a] = 1
        return (_shifted(p, e, res) - 2 * _shifted(p, 0 * e, res) + _shifted(p, -e, res)) / h[a] ** 2
    ea, eb = e.copy(), e.copy()
    ea[a], eb[b] = 1, 1
    return (
        _shifted(p, ea + eb, res) - _shifted(p, ea - eb, res) - _shifted(p, eb - ea, res) + _shifted(p, -ea - eb, res)
    ) / (4 * h[a] * h[b])


def complex_hessian(u, domain, mask_non_interior=True):
    """Complex Hessian u_{i jbar}, shape ``grid + (n, n)``.

    u_{i jbar} = 1/4 [(u_{x_i x_j} + u_{y_i y_j}) + i (u_{x_i y_j} - u_{y_i x_j})]
    with 2nd-order central differences.  Nodes without a full stencil
    (boundary and exterior) are NaN.  The result is Hermitian exactly.
    """
    u = np.asarray(u)
    n = domain.n
    p = domain.pad(u)
    d2 = {}

    def D(a, b):
        key = (min(a, b), max(a, b))
        if key not in d2:
            d2[key] = real_second_derivative(u, domain, *key, padded=p)
        return d2[key]

    out = np.empty(domain.shape + (n, n), dtype=complex)
    for i in range(n):
        xi, yi = 2 * i, 2 * i + 1
        out[..., i, i] = 0.25 * (D(xi, xi) + D(yi, yi))
        for j in range(i + 1, n):
            xj, yj = 2 * j, 2 * j + 1
            val = 0.25 * ((D(xi, xj) + D(yi, yj)) + 1j * (D(xi, yj) - D(yi, xj)))
            out[..., i, j] = val
            out[..., j, i] = np.conj(val)
    if mask_non_interior and not domain.periodic:
        out[~domain.interior] = np.nan
    return out


def hessian_at(u, domain, index):
    """Complex Hessian at one node; raises StencilError off the interior."""
    index = tuple(int(i) for i in index)
    if len(index) != domain.dim or any(not 0 <= i < domain.resolution for i in index):
        raise StencilError(f"node {index} is outside the grid")
    if not domain.periodic and domain.mask[index] != INTERIOR:
        raise StencilError(f"node {index} has no full stencil (not an interior node)")
    # small local window keeps this cheap
    lo = [i - 1 for i in index]
    u = np.asarray(u)
    if domain.periodic:
        take = np.ix_(*[np.arange(l, l + 3) % domain.resolution for l in lo])
    else:
        take = tuple(slice(l, l + 3) for l in lo)
    local = u[take]
    sub = Domain.box(domain.n, 3, 0.0, 2.0)
    sub.lower, sub.upper = np.zeros(domain.dim), 2 * domain.h
    sub.mask = sub._classify()
    return complex_hessian(local, sub)[(1,) * domain.dim]


def _one_sided_hessian(u, domain):
    """Complex Hessian from nested 2nd-order np.gradient (valid up to the box edge)."""
    h = domain.h
    n = domain.n
    first = np.gradient(u, *h, edge_order=2)
    d2 = {}
    for a in range(domain.dim):
        ga = np.gradient(first[a], *h, edge_order=2)
        for b in range(a, domain.dim):
            d2[(a, b)] = ga[b]
    D = lambda a, b: d2[(min(a, b), max(a, b))]
    out = np.empty(domain.shape + (n, n), dtype=complex)
    for i in range(n):
        xi, yi = 2 * i, 2 * i + 1
        for j in range(n):
            xj, yj = 2 * j, 2 * j + 1
            out[..., i, j] = 0.25 * ((D(xi, xj) + D(yi, yj)) + 1j * (D(xi, yj) - D(yi, xj)))
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def complex_gradient(u, domain):
    """u_i = du/dz_i = (u_x - i u_y)/2, shape ``grid + (n,)``.

    Central differences inside, 2nd-order one-sided at box edges (NaN next
    to exterior ball nodes).
    """
    u = np.asarray(u, dtype=float)
    if domain.periodic:
        p = domain.pad(u)
        grads = []
        for a in range(domain.dim):
            e = np.zeros(domain.dim, dtype=int)
            e[a] = 1
            grads.append((_shifted(p, e, domain.resolution) - _shifted(p, -e, domain.resolution)) / (2 * domain.h[a]))
    else:
        v = np.where(domain.active, u, np.nan)
        grads = np.gradient(v, *domain.h, edge_order=2)
    return np.stack([0.5 * (grads[2 * i] - 1j * grads[2 * i + 1]) for i in range(domain.n)], axis=-1)


def upper_inverse(g):
    """g^{i jbar} in the package's upper-index storage: conj(inv(g))."""
    return np.conj(np.linalg.inv(g))


def gradient_and_laplacian(u, domain, metric=None, boundary=True):
    """Pointwise |grad u| and Delta u = 2 g^{i jbar} u_{i jbar}.

    ``metric`` is a field ``grid + (n, n)`` or None for the flat metric.  With
    ``boundary=True`` box boundary nodes use one-sided differences so both
    fields are defined on the closed box; elsewhere non-interior nodes are NaN.
    """
    u = np.asarray(u, dtype=float)
    n = domain.n
    ui = complex_gradient(u, domain)
    hess = complex_hessian(u, domain)
    if boundary and domain.kind == "box":
        edge = ~domain.interior
        hess[edge] = _one_sided_hessian(u, domain)[edge]
    if metric is None:
        gsq = GRADIENT_FACTOR * np.sum(np.abs(ui) ** 2, axis=-1)
        lap = 2.0 * LAPLACIAN_NORM * np.real(np.trace(hess, axis1=-2, axis2=-1))
    else:
        gup = upper_inverse(np.broadcast_to(metric, domain.shape + (n, n)))
        gsq = GRADIENT_FACTOR * np.real(np.einsum("...ij,...i,...j->...", gup, ui, np.conj(ui)))
        lap = 2.0 * LAPLACIAN_NORM * np.real(np.einsum("...ij,...ij->...", gup, hess))
    grad = np.sqrt(np.maximum(gsq, 0.0))
    if not domain.periodic:
        grad[~domain.active] = np.nan
        lap[~domain.active] = np.nan
    return grad, lap


def real_coefficients(upper):
    """Real symmetric 2n x 2n coefficients A with sum_ab A_ab d_ab v = Re sum_ij B[i,j] v_{i jbar}.

    ``upper`` holds B = P + iQ in upper-index storage (Hermitian).  Blocks:
    A[x_i, x_j] = A[y_i, y_j] = P/4 and A[x_i, y_j] = A[y_j, x_i] = -Q/4.
    """
    b = np.asarray(upper)
    n = b.shape[-1]
    p, q = b.real, b.imag
    out = np.zeros(b.shape[:-2] + (2 * n, 2 * n))
    out[..., 0::2, 0::2] = 0.25 * p
    out[..., 1::2, 1::2] = 0.25 * p
    out[..., 0::2, 1::2] = -0.25 * q
    out[..., 1::2, 0::2] = -0.25 * np.swapaxes(q, -1, -2)
    return out


class StencilOperator:
    """Sparse assembly of L v = sum_ab A_ab(x) d_a d_b v over the unknown nodes.

    Unknowns are the interior nodes (all nodes on a torus, minus any pinned
    node).  Known nodes are eliminated: their columns are dropped, which is
    what a Newton correction with fixed Dirichlet data needs.  The sparsity
    pattern and the CSR permutation are computed once and reused by
    :meth:`matrix` for every new coefficient field.
    """

    def __init__(self, domain, pinned=()):
        self.domain = domain
        unknown = domain.interior.copy() if not domain.periodic else np.ones(domain.shape, dtype=bool)
        for node in pinned:
            unknown[tuple(node)] = False
        self.unknown = unknown
        self.flat_unknown = np.flatnonzero(unknown.ravel())
        self.m = self.flat_unknown.size
        number = np.full(domain.size, -1, dtype=np.int64)
        number[self.flat_unknown] = np.arange(self.m)
        self.offsets = _stencil_offsets(domain.dim)
        res = domain.resolution
        coords = np.array(np.unravel_index(self.flat_unknown, domain.shape))
        nslot = len(self.offsets)
        rows, cols, slots = [], [], []
        for s, off in enumerate(self.offsets):
            nb = coords + off[:, None]
            if domain.periodic:
                nb %= res
                ok = np.ones(self.m, dtype=bool)
            else:
                ok = np.all((nb >= 0) & (nb < res), axis=0)
            flat = np.full(self.m, -1, dtype=np.int64)
            flat[ok] = np.ravel_multi_index(nb[:, ok], domain.shape)
            col = np.where(flat >= 0, number[np.maximum(flat, 0)], -1)
            keep = np.flatnonzero(col >= 0)
            rows.append(keep.astype(np.int32))
            cols.append(col[keep].astype(np.int32))
            slots.append(np.full(keep.size, s, dtype=np.int8))
        del coords, number
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        slot = np.concatenate(slots)
        order = np.lexsort((cols, rows))
        take_dtype = np.int32 if self.m * nslot < 2**31 else np.int64
        # flat position in the (unknown, slot) weight table, already in CSR order
        self._take = (rows[order].astype(take_dtype) * nslot + slot[order]).astype(take_dtype)
        self._indices = cols[order]
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=self.m))]).astype(np.int64)

    @property
    def nnz(self):
        return self._indices.size

    def stencil_weights(self, coeffs):
        """Weights per (unknown node, stencil slot) for coefficients ``grid + (2n, 2n)``."""
        d = self.domain
        h = d.h
        a = np.asarray(coeffs).reshape((d.size, d.dim, d.dim))[self.flat_unknown]
        w = np.zeros((self.m, len(self.offsets)))
        s = 1
        for k in range(d.dim):
            c = a[:, k, k] / h[k] ** 2
            w[:, 0] -= 2 * c
            w[:, s] += c
            w[:, s + 1] += c
            s += 2
        for k in range(d.dim):
            for l in range(k + 1, d.dim):
                # both (k,l) and (l,k) terms of the symmetric sum
                c = 2 * a[:, k, l] / (4 * h[k] * h[l])
                w[:, s] += c
                w[:, s + 1] -= c
                w[:, s + 2] -= c
                w[:, s + 3] += c
                s += 4
        return w

    def matrix(self, coeffs):
        w = self.stencil_weights(coeffs)
        data = w.reshape(-1)[self._take]
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.m, self.m))

    def scatter(self, x, fill=0.0):
        """Place an unknown vector back on the grid."""
        out = np.full(self.domain.size, fill, dtype=np.asarray(x).dtype)
        out[self.flat_unknown] = x
        return out.reshape(self.domain.shape)

    def gather(self, field):
        return np.asarray(field).reshape(-1)[self.flat_unknown]


def apply_operator(v, upper, domain):
    """Matrix-free L v = Re sum_ij B^{i jbar} v_{i jbar} on the full grid."""
    hess = complex_hessian(v, domain)
    return np.real(np.einsum("...ij,...ij->...", upper, hess))


# ---------------------------------------------------------------- I/O

def write_csv(path, domain, values, name="value"):
    """Node coordinates plus values, one row per active node."""
    values = np.asarray(values)
    coords = domain.coords().reshape(domain.dim, -1)
    flat = values.reshape(-1)
    active = domain.active.reshape(-1)
    header = [f"{c}{k + 1}" for k in range(domain.n) for c in ("x", "y")]
    cplx = np.iscomplexobj(values)
    header += [f"{name}_re", f"{name}_im"] if cplx else [name]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for idx in np.flatnonzero(active):
            row = [repr(float(c)) for c in coords[:, idx]]
            v = flat[idx]
            row += [repr(float(v.real)), repr(float(v.imag))] if cplx else [repr(float(v))]
            w.writerow(row)


def read_csv(path, domain):
    """Inverse of :func:`write_csv`; inactive nodes come back as NaN."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    coords = body[:, : domain.dim]
    idx = np.rint((coords - domain.lower) / domain.h).astype(int)
    cplx = len(header) == domain.dim + 2
    out = np.full(domain.shape, np.nan, dtype=complex if cplx else float)
    vals = body[:, domain.dim] + 1j * body[:, domain.dim + 1] if cplx else body[:, domain.dim]
    out[tuple(idx.T)] = vals
    return out


def write_binary(path, domain, values, extra=None):
    """Raw little-endian block ``<path>.bin`` plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    base = path.with_suffix("")
    values = np.asarray(values)
    dtype = "<c16" if np.iscomplexobj(values) else "<f8"
    values.astype(dtype).tofile(base.with_suffix(".bin"))
    meta = {
        "dtype": dtype,
        "shape": list(values.shape),
        "domain": domain.to_dict(),
        "spacing": domain.h.tolist(),
        "order": "C",
        "laplacian_norm": LAPLACIAN_NORM,
        "gradient_factor": GRADIENT_FACTOR,
        "hessian_convention": "u_{i jbar} = d^2u/dz_i dzbar_j",
    }
    if extra:
        meta.update(extra)
    base.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return base.with_suffix(".bin"), base.with_suffix(".json")


def read_binary(path):
    """Return ``(domain, values, meta)`` from a binary block and its sidecar."""
    base = Path(path).with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text())
    values = np.fromfile(base.with_suffix(".bin"), dtype=meta["dtype"]).reshape(meta["shape"])
    return Domain.from_dict(meta["domain"]), values, meta

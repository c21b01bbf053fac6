"""Dirichlet problem data, validation checks and manufactured solutions.

A problem is the tuple (omega, chi, psi, phi, usub, alpha) on a domain.  The
equation solved at interior nodes is

    F(chi + u_{i jbar}; omega) = (psi / C(n, alpha)) ** (1/alpha).

Scalar data are built from analytic families (value plus closed-form complex
Hessian) or from tabulated fields.  Boundary data is read at
:meth:`Domain.boundary_points`, i.e. radially projected for ball domains
(see :func:`boundary_data`).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hessquot import symcalc
from hessquot.discretization import Domain, complex_hessian, read_binary
from hessquot.errors import AdmissibilityError, ProblemFileError, ValidationError
from hessquot.hermgeo import MetricField

# ---------------------------------------------------------------- families


def complex_from_real_hessian(d2):
    """Complex Hessian from real second derivatives ``d2[a, b, ...]``."""
    n = d2.shape[0] // 2
    out = np.empty(d2.shape[2:] + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
            out[..., i, j] = 0.25 * ((d2[xi, xj] + d2[yi, yj]) + 1j * (d2[xi, yj] - d2[yi, xj]))
    return out


def _zc(x):
    return x[0::2] + 1j * x[1::2]


class Family:
    """Analytic scalar field: ``value(x)`` and ``hessian(x)`` for x of shape (2n, ...)."""

    def value(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def __add__(self, other):
        return Sum([(1.0, self), (1.0, other)])

    def __mul__(self, c):
        return Sum([(float(c), self)])

    __rmul__ = __mul__


@dataclass
class Constant(Family):
    c: float = 0.0

    def value(self, x):
        return np.full(x.shape[1:], float(self.c))

    def hessian(self, x):
        n = x.shape[0] // 2
        return np.zeros(x.shape[1:] + (n, n), dtype=complex)


@dataclass
class Quadratic(Family):
    """u = z^H P z + Re(z^T Q z) + Re(b . z) + c, with P Hermitian.

    The complex Hessian is the constant P^T; the Q and b parts are
    pluriharmonic.
    """

    P: np.ndarray
    Q: np.ndarray | None = None
    b: np.ndarray | None = None
    c: float = 0.0

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=complex)
        n = self.P.shape[0]
        self.Q = np.zeros((n, n), complex) if self.Q is None else np.asarray(self.Q, dtype=complex)
        self.b = np.zeros(n, complex) if self.b is None else np.asarray(self.b, dtype=complex)

    def value(self, x):
        z = _zc(x)
        herm = np.real(np.einsum("i...,ij,j...->...", np.conj(z), self.P, z))
        hol = np.real(np.einsum("i...,ij,j...->...", z, self.Q, z))
        lin = np.real(np.einsum("i,i...->...", self.b, z))
        return herm + hol + lin + self.c

    def hessian(self, x):
        return np.broadcast_to(self.P.T, x.shape[1:] + self.P.shape).copy()


@dataclass
class Radial(Family):
    """u = sum_m coeffs[m] * (|z - z0|^2)^m."""

    coeffs: list
    center: np.ndarray | None = None

    def _r2(self, x):
        c = np.zeros(x.shape[0]) if self.center is None else np.asarray(self.center, dtype=float)
        d = x - c.reshape((-1,) + (1,) * (x.ndim - 1))
        return d, np.sum(d**2, axis=0)

    def value(self, x):
        _, r2 = self._r2(x)
        return sum(cm * r2**m for m, cm in enumerate(self.coeffs))

    def hessian(self, x):
        d, r2 = self._r2(x)
        f1 = sum(m * cm * r2 ** (m - 1) for m, cm in enumerate(self.coeffs) if m >= 1)
        f2 = sum(m * (m - 1) * cm * r2 ** (m - 2) for m, cm in enumerate(self.coeffs) if m >= 2)
        f1 = np.broadcast_to(f1, r2.shape)
        f2 = np.broadcast_to(f2, r2.shape)
        zd = _zc(d)
        n = zd.shape[0]
        zb = np.moveaxis(np.conj(zd), 0, -1)
        zz = np.moveaxis(zd, 0, -1)
        return f1[..., None, None] * np.eye(n) + f2[..., None, None] * zb[..., :, None] * zz[..., None, :]


@dataclass
class Trigonometric(Family):
    """u = amplitude * sin(k . x + phase) with a real wave vector k in R^{2n}."""

    amplitude: float
    wave: np.ndarray
    phase: float = 0.0

    def _theta(self, x):
        k = np.asarray(self.wave, dtype=float)
        return np.tensordot(k, x, axes=(0, 0)) + self.phase

    def value(self, x):
        return self.amplitude * np.sin(self._theta(x))

    def hessian(self, x):
        k = np.asarray(self.wave, dtype=float)
        s = -self.amplitude * np.sin(self._theta(x))
        d2 = k[:, None, None] * k[None, :, None] * s.reshape((1, 1, -1))
        return complex_from_real_hessian(d2.reshape((len(k), len(k)) + s.shape))


@dataclass
class ProductSine(Family):
    """u = amplitude * sin(x_a) * sin(x_b) for real axes a != b."""

    amplitude: float
    axes: tuple = (0, 3)

    def value(self, x):
        a, b = self.axes
        return self.amplitude * np.sin(x[a]) * np.sin(x[b])

    def hessian(self, x):
        a, b = self.axes
        dim = x.shape[0]
        d2 = np.zeros((dim, dim) + x.shape[1:])
        d2[a, a] = -self.amplitude * np.sin(x[a]) * np.sin(x[b])
        d2[b, b] = d2[a, a]
        d2[a, b] = d2[b, a] = self.amplitude * np.cos(x[a]) * np.cos(x[b])
        return complex_from_real_hessian(d2)


@dataclass
class BoxBump(Family):
    """Strictly psh function vanishing on the boundary of a box.

    q = -(sum_k 1/a_k)^(-1), a_k = p(s_{x_k}) p(s_{y_k}), p(t) = 1 - t^2, with
    s the coordinate rescaled to [-1, 1].  Zero on every face, negative and
    strictly plurisubharmonic inside.
    """

    lower: np.ndarray
    upper: np.ndarray

    def _parts(self, x):
        lo = np.asarray(self.lower, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
        hi = np.asarray(self.upper, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
        mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = (x - mid) / rad
        p = 1.0 - t**2
        dp = -2.0 * t / rad
        ddp = -2.0 / rad**2 * np.ones_like(t)
        return p, dp, ddp

    def value(self, x):
        p, _, _ = self._parts(x)
        a = p[0::2] * p[1::2]
        with np.errstate(divide="ignore"):
            s = np.sum(1.0 / a, axis=0)
        out = -1.0 / s
        out[np.any(a <= 0, axis=0)] = 0.0
        return out

    def hessian(self, x):
        p, dp, ddp = self._parts(x)
        dim = x.shape[0]
        n = dim // 2
        inside = np.all(p > 0, axis=0)
        p = np.where(inside, p, 1.0)
        s = np.zeros(x.shape[1:])
        s1 = np.zeros((dim,) + x.shape[1:])
        s2 = np.zeros((dim, dim) + x.shape[1:])
        for k in range(n):
            ax, ay = 2 * k, 2 * k + 1
            px, py = p[ax], p[ay]
            s += 1.0 / (px * py)
            s1[ax] = -dp[ax] / (px**2 * py)
            s1[ay] = -dp[ay] / (py**2 * px)
            s2[ax, ax] = (2 * dp[ax] ** 2 - px * ddp[ax]) / (px**3 * py)
            s2[ay, ay] = (2 * dp[ay] ** 2 - py * ddp[ay]) / (py**3 * px)
            s2[ax, ay] = s2[ay, ax] = dp[ax] * dp[ay] / (px**2 * py**2)
        d2 = s2 / s**2 - 2 * s1[:, None] * s1[None, :] / s**3
        out = complex_from_real_hessian(d2)
        out[~inside] = np.nan
        return out


@dataclass
class Sum(Family):
    terms: list

    def value(self, x):
        return sum(w * f.value(x) for w, f in self.terms)

    def hessian(self, x):
        return sum(w * f.hessian(x) for w, f in self.terms)


@dataclass
class Table(Family):
    """Tabulated grid field; the Hessian falls back to finite differences."""

    values: np.ndarray
    domain: Domain

    def value(self, x):
        return np.asarray(self.values, dtype=float)

    def hessian(self, x):
        return complex_hessian(self.values, self.domain)


def family_from_dict(d, n, base=None):
    """Build a :class:`Family` from its JSON description."""
    if isinstance(d, (int, float)):
        return Constant(float(d))
    kind = d.get("kind")
    try:
        if kind == "constant":
            return Constant(float(d.get("value", 0.0)))
        if kind == "quadratic":
            P = np.asarray(d.get("hermitian", np.eye(n).tolist()), dtype=complex)
            if P.ndim == 0:
                P = P * np.eye(n)
            Q = d.get("holomorphic")
            if Q is not None:
                Q = np.asarray(Q, dtype=complex)
                if Q.ndim == 0:
                    Q = Q * np.eye(n)
            b = d.get("linear")
            return Quadratic(P, Q, None if b is None else np.asarray(b, dtype=complex), float(d.get("constant", 0.0)))
        if kind == "radial":
            return Radial(list(d["coeffs"]), d.get("center"))
        if kind == "trigonometric":
            return Trigonometric(float(d["amplitude"]), np.asarray(d["wave"], dtype=float), float(d.get("phase", 0.0)))
        if kind == "product_sine":
            return ProductSine(float(d["amplitude"]), tuple(d.get("axes", (0, 3))))
        if kind == "box_bump":
            return BoxBump(np.asarray(d["lower"], dtype=float), np.asarray(d["upper"], dtype=float))
        if kind == "sum":
            return Sum([(float(t.get("weight", 1.0)), family_from_dict(t, n, base)) for t in d["terms"]])
        if kind == "table":
            path = Path(d["path"])
            if base is not None and not path.is_absolute():
                path = Path(base) / path
            dom, values, _ = read_binary(path)
            return Table(values, dom)
    except KeyError as exc:
        raise ProblemFileError(f"family {kind!r} is missing field {exc.args[0]!r}", field=exc.args[0]) from exc
    raise ProblemFileError(f"unknown scalar family {kind!r}", field="kind")


def sample(family, domain, project=False):
    """Values at nodes (NaN on exterior nodes).

    With ``project=True`` ball boundary nodes are evaluated at their radial
    projection onto the sphere.
    """
    out = np.asarray(family.value(domain.coords()), dtype=float)
    if domain.kind != "ball":
        return out
    if project:
        out = np.where(domain.boundary, family.value(domain.boundary_points()), out)
    out = np.array(out, dtype=float)
    out[domain.mask == 0] = np.nan
    return out


def boundary_data(phi, usub, domain):
    """Dirichlet values at boundary nodes.

    Box and torus nodes take phi at the node.  A ball boundary node lies up
    to sqrt(2) h inside the sphere, so phi is read at the radial projection
    and carried to the node along the subsolution:
    ``usub(node) + phi(proj) - usub(proj)``.  The result equals the
    subsolution exactly when usub = phi on the sphere, and it keeps the
    boundary layer as smooth as usub.  (Copying phi(proj) to the node
    instead puts an O(1/h) error into the discrete Hessian of the first
    interior layer.)
    """
    if domain.kind != "ball":
        return sample(phi, domain)
    p = domain.boundary_points()
    out = sample(usub, domain) + np.where(domain.boundary, phi.value(p) - usub.value(p), 0.0)
    return np.where(domain.boundary, out, sample(phi, domain))


# ---------------------------------------------------------------- problem


@dataclass
class ProblemSpec:
    """Full Dirichlet problem data.  Fields are arrays over the grid.

    ``chi`` has shape ``grid + (n, n)``; ``psi``, ``phi``, ``usub`` are scalar
    fields (``phi`` is only read at boundary nodes).  ``exact`` optionally
    carries a known solution for error reporting.
    """

    domain: Domain
    omega: MetricField
    chi: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    usub: np.ndarray
    alpha: int
    exact: np.ndarray | None = None
    name: str = ""
    usub_hessian: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.domain.n
        if not 1 <= self.alpha <= n:
            raise ValidationError(f"alpha={self.alpha} outside 1..{n}")
        active = self.domain.active
        psi = np.asarray(self.psi, dtype=float)
        bad = active & ~(psi > 0)
        if np.any(bad):
            node = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValidationError(f"psi must be positive (psi={psi[node]:.6g} at node {node})")
        if not self.domain.periodic:
            b = self.domain.boundary
            scale = max(1.0, float(np.nanmax(np.abs(self.phi[b]))))
            gap = np.abs(self.usub - self.phi)
            gap = np.where(b, gap, 0.0)
            if np.any(gap > 1e-12 * scale) or np.any(b & np.isnan(gap)):
                node = tuple(int(i) for i in np.unravel_index(np.nanargmax(gap), gap.shape))
                raise ValidationError(
                    f"subsolution differs from boundary data at boundary node {node} by {gap[node]:.3g}"
                )

    @property
    def n(self):
        return self.domain.n

    @property
    def target(self):
        """(psi / C(n, alpha))^(1/alpha), the right-hand side in F-form."""
        return (np.asarray(self.psi, dtype=float) / symcalc.binom(self.n, self.alpha)) ** (1.0 / self.alpha)

    @property
    def equation_nodes(self):
        """Nodes where the equation is imposed."""
        return np.ones(self.domain.shape, dtype=bool) if self.domain.periodic else self.domain.interior

    def hessian(self, u):
        return complex_hessian(u, self.domain)

    def sub_hessian(self, analytic=False):
        """Complex Hessian of the subsolution.

        The discrete Hessian (default) is what the solver sees; the analytic
        one is available when the subsolution came from a family.
        """
        if analytic and self.usub_hessian is not None:
            return self.usub_hessian
        return complex_hessian(self.usub, self.domain)

    def with_phi_scaled(self, s):
        """Copy with boundary data and subsolution multiplied by ``s``.

        Any stored exact solution is dropped since it no longer applies.
        """
        import copy

        out = copy.copy(self)
        out.phi = s * self.phi
        out.usub = s * self.usub
        out.exact = None
        if self.usub_hessian is not None:
            out.usub_hessian = s * self.usub_hessian
        return out


@dataclass
class AdmissibilityReport:
    margin: float
    node: tuple
    admissible: bool

    def to_dict(self):
        return {"margin": self.margin, "node": list(self.node), "admissible": self.admissible}


def _min_eig(chi_u, g, mask):
    spec = symcalc.generalized_eigh(chi_u[mask], g[mask])
    lam = spec.lam[:, 0]
    k = int(np.argmin(lam))
    return float(lam[k]), k, spec


def check_admissible(u, spec, hessian=None):
    """Minimum generalized eigenvalue of chi + u_{i jbar} over equation nodes."""
    hess = spec.hessian(u) if hessian is None else hessian
    mask = spec.equation_nodes
    lo, k, _ = _min_eig(spec.chi + hess, spec.omega.g, mask)
    node = tuple(int(i) for i in np.argwhere(mask)[k])
    return AdmissibilityReport(lo, node, lo > 0)


@dataclass
class SubsolutionReport:
    min_defect: float
    node: tuple
    tolerance: float
    is_subsolution: bool
    strict: bool
    eps_lower: float
    eps_upper: float
    defect: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "min_defect": self.min_defect,
            "node": list(self.node),
            "tolerance": self.tolerance,
            "is_subsolution": self.is_subsolution,
            "strict": self.strict,
            "eps": min(self.eps_lower, self.eps_upper),
            "lambda_min": self.eps_lower,
            "inverse_lambda_max": self.eps_upper,
        }


def subsolution_tolerance(spec):
    return 1e-9 * max(1.0, float(np.nanmax(spec.psi[spec.domain.active])) ** (1.0 / spec.alpha))


def check_subsolution(spec, usub=None, hessian=None):
    """Pointwise defect F(chi_usub) - (psi/C)^(1/alpha) at equation nodes.

    Also reports eps with eps*omega <= chi_usub <= omega/eps as the pair
    (lambda_min, 1/lambda_max).
    """
    if usub is None:
        hess = spec.sub_hessian() if hessian is None else hessian
    else:
        hess = spec.hessian(usub) if hessian is None else hessian
    mask = spec.equation_nodes
    chi_u = (spec.chi + hess)[mask]
    try:
        f, _, s = symcalc.quotient_field(chi_u, spec.omega.g[mask], spec.alpha, gradient=False)
    except AdmissibilityError as exc:
        raise AdmissibilityError(f"subsolution is not admissible: {exc}", min_eigenvalue=exc.min_eigenvalue) from exc
    defect = np.full(spec.domain.shape, np.nan)
    defect[mask] = f - spec.target[mask]
    k = int(np.argmin(defect[mask]))
    tol = subsolution_tolerance(spec)
    lo = float(s.lam[:, 0].min())
    hi = float(s.lam[:, -1].max())
    node = tuple(int(i) for i in np.argwhere(mask)[k])
    dmin = float(defect[mask][k])
    return SubsolutionReport(dmin, node, tol, dmin >= -tol, dmin > tol, lo, 1.0 / hi, defect)


@dataclass
class ConeReport:
    min_slack: float
    node: tuple
    index: int
    certified: bool
    reason: str = ""
    min_eigenvalue: float = float("nan")

    def to_dict(self):
        return {
            "min_slack": self.min_slack,
            "node": list(self.node),
            "index": self.index,
            "certified": self.certified,
            "reason": self.reason,
            "min_eigenvalue": self.min_eigenvalue,
        }


CONE_STRICTNESS = 1e-9


def cone_slack(lam, psi, alpha):
    """S_{n-1;i}(lam) - psi / C(n, alpha) * S_{n-alpha-1;i}(lam), shape (..., n)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    s1 = symcalc.esym_deleted_all(lam)
    low = s1[..., n - alpha - 1] if n - alpha - 1 >= 0 else 0.0
    return s1[..., n - 1] - (np.asarray(psi)[..., None] / symcalc.binom(n, alpha)) * low


def check_cone_membership(potential, spec, hessian=None):
    """Certify the cone condition with the witness chi' = chi + d dbar potential."""
    hess = spec.hessian(potential) if hessian is None else hessian
    mask = spec.equation_nodes
    s = symcalc.generalized_eigh((spec.chi + hess)[mask], spec.omega.g[mask])
    nodes = np.argwhere(mask)
    lo = float(s.lam[:, 0].min())
    if not lo > 0:
        k = int(np.argmin(s.lam[:, 0]))
        return ConeReport(float("nan"), tuple(int(i) for i in nodes[k]), -1, False, "witness is not positive", lo)
    slack = cone_slack(s.lam, spec.psi[mask], spec.alpha)
    flat = int(np.argmin(slack))
    k, i = divmod(flat, spec.n)
    val = float(slack[k, i])
    ok = val > CONE_STRICTNESS
    return ConeReport(val, tuple(int(v) for v in nodes[k]), i, ok, "" if ok else "slack not strictly positive", lo)


# ---------------------------------------------------------------- assembly


def manufactured_psi(chi, hess, g, alpha):
    """psi = C(n, alpha) * S_n / S_{n-alpha} of lambda(chi + hess; g)."""
    f, _, _ = symcalc.quotient_field(chi + hess, g, alpha, gradient=False)
    n = chi.shape[-1]
    return symcalc.binom(n, alpha) * f**alpha


def manufacture_solution(u_star, domain, alpha, omega=None, chi=None, usub=None, name="manufactured"):
    """Problem whose exact solution is ``u_star`` (a Family).

    psi is computed from the analytic Hessian of ``u_star`` at every active
    node and phi := u_star.  The subsolution defaults to u_star itself;
    pass a Family (equal to u_star on the boundary) for a strict one.
    """
    omega = MetricField.flat(domain) if omega is None else omega
    n = domain.n
    chi = np.zeros(domain.shape + (n, n), complex) if chi is None else np.broadcast_to(chi, domain.shape + (n, n))
    x = domain.coords()
    hess = np.asarray(u_star.hessian(x))
    if domain.kind == "ball":
        hess = np.where(domain.active[..., None, None], hess, np.eye(n))
    try:
        psi = manufactured_psi(chi, hess, omega.g, alpha)
    except AdmissibilityError as exc:
        raise AdmissibilityError(f"u_star is not admissible: {exc}", min_eigenvalue=exc.min_eigenvalue) from exc
    if domain.kind == "ball":
        psi = np.where(domain.active, psi, np.nan)
    exact = sample(u_star, domain)
    sub = u_star if usub is None else usub
    usub_vals = sample(sub, domain)
    sub_hess = np.asarray(sub.hessian(x))
    phi = boundary_data(u_star, sub, domain)
    return ProblemSpec(domain, omega, chi, psi, phi, usub_vals, alpha, exact=exact, name=name, usub_hessian=sub_hess)


def problem_from_families(domain, alpha, psi, phi, usub, omega=None, chi=None, exact=None, name=""):
    """Assemble a problem from analytic families (``psi`` may be a Family or array)."""
    omega = MetricField.flat(domain) if omega is None else omega
    n = domain.n
    chi = np.zeros(domain.shape + (n, n), complex) if chi is None else np.broadcast_to(chi, domain.shape + (n, n))
    psi_vals = psi if isinstance(psi, np.ndarray) else sample(psi, domain)
    usub_vals = sample(usub, domain)
    x = domain.coords()
    return ProblemSpec(
        domain,
        omega,
        chi,
        np.asarray(psi_vals, dtype=float),
        boundary_data(phi, usub, domain),
        usub_vals,
        alpha,
        exact=None if exact is None else sample(exact, domain),
        name=name,
        usub_hessian=np.asarray(usub.hessian(x)) if not isinstance(usub, Table) else None,
    )


def _metric_from_dict(d, domain, base):
    kind = (d or {"kind": "flat"}).get("kind", "flat")
    if kind == "flat":
        return MetricField.flat(domain)
    if kind == "conformal":
        return MetricField.conformal(domain, float(d.get("weight", 1.0)))
    if kind == "kahler_exponential":
        return MetricField.kahler_exponential(domain, float(d.get("c", 0.2)))
    if kind == "table":
        path = Path(d["path"])
        if base is not None and not path.is_absolute():
            path = Path(base) / path
        _, values, _ = read_binary(path)
        return MetricField.from_samples(domain, values)
    raise ProblemFileError(f"unknown metric kind {kind!r}", field="omega.kind")


def _chi_from_dict(d, domain, omega, base):
    n = domain.n
    kind = (d or {"kind": "zero"}).get("kind", "zero")
    if kind == "zero":
        return np.zeros(domain.shape + (n, n), complex)
    if kind == "omega":
        return omega.g.copy()
    if kind == "scaled":
        return float(d["value"]) * np.broadcast_to(np.eye(n, dtype=complex), domain.shape + (n, n)).copy()
    if kind == "table":
        path = Path(d["path"])
        if base is not None and not path.is_absolute():
            path = Path(base) / path
        _, values, _ = read_binary(path)
        return np.asarray(values, dtype=complex)
    raise ProblemFileError(f"unknown chi kind {kind!r}", field="chi.kind")


def problem_from_dict(doc, base=None, resolution=None, alpha=None, check_memory=True):
    """Build a :class:`ProblemSpec` from a parsed problem document.

    ``psi`` may be ``{"kind": "manufactured"}``, in which case ``exact`` is
    required and psi is derived from it.  With ``check_memory`` a grid whose
    solve cannot fit in available memory raises ResourceError before any
    field is sampled.
    """
    for key in ("n", "alpha", "domain", "phi", "usub", "psi"):
        if key not in doc:
            raise ProblemFileError(f"problem file is missing field {key!r}", field=key)
    n = int(doc["n"])
    a = int(doc["alpha"] if alpha is None else alpha)
    dd = dict(doc["domain"])
    dd["n"] = n
    if resolution is not None:
        dd["resolution"] = int(resolution)
    try:
        domain = Domain.from_dict(dd)
    except KeyError as exc:
        raise ProblemFileError(f"domain is missing field {exc.args[0]!r}", field=f"domain.{exc.args[0]}") from exc
    if check_memory:
        from hessquot.solver import preflight

        preflight(domain)
    omega = _metric_from_dict(doc.get("omega"), domain, base)
    chi = _chi_from_dict(doc.get("chi"), domain, omega, base)
    phi = family_from_dict(doc["phi"], n, base)
    usub = family_from_dict(doc["usub"], n, base)
    exact = family_from_dict(doc["exact"], n, base) if "exact" in doc else None
    psi_doc = doc["psi"]
    name = doc.get("name", "")
    if isinstance(psi_doc, dict) and psi_doc.get("kind") == "manufactured":
        if exact is None:
            raise ProblemFileError("manufactured psi needs an 'exact' field", field="exact")
        spec = manufacture_solution(exact, domain, a, omega=omega, chi=chi, usub=usub, name=name)
        spec.phi = boundary_data(phi, usub, domain)
        spec.__post_init__()
        return spec
    if isinstance(psi_doc, dict) and psi_doc.get("kind") == "table":
        psi = family_from_dict(psi_doc, n, base).value(None)
    else:
        psi = family_from_dict(psi_doc, n, base)
    return problem_from_families(domain, a, psi, phi, usub, omega=omega, chi=chi, exact=exact, name=name)


def load_problem(path, resolution=None, alpha=None, check_memory=True):
    """Parse a JSON problem file; errors carry the offending line or field."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno}: {exc.msg}", field=f"line {exc.lineno}") from exc
    return problem_from_dict(doc, base=path.parent, resolution=resolution, alpha=alpha, check_memory=check_memory)

"""Continuity-path damped Newton solver for the discrete Dirichlet problem.

At equation nodes the residual is ``r = F(chi + u_{i jbar}; omega) - f_t``
with the target path ``f_t = (1 - t) F(chi_usub) + t (psi/C)^(1/alpha)``, so
``u = usub`` solves ``t = 0`` exactly.  Each Newton step solves
``L delta = -r`` where ``L v = Re sum F^{i jbar} v_{i jbar}`` is assembled
with the same stencil as the residual.  Because F depends on u only through
the discrete Hessian, this L is the exact Jacobian of the discrete residual.
"""

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from hessquot import symcalc
from hessquot.discretization import StencilOperator, complex_hessian, real_coefficients
from hessquot.errors import (
    AdmissibilityError,
    NonconvergenceError,
    ResourceError,
    StepFailure,
    ValidationError,
)

log = logging.getLogger(__name__)

KAPPA = 0.1
MARGIN_FLOOR = 1e-10
MIN_STEP = 2.0**-20
MAX_DT = 0.25
STALL_DT = 1e-6
CHUNK = 1 << 17


@dataclass
class SolverOptions:
    tol: float | None = None  # absolute; default 1e-8 * max|f_1|
    path_tol: float = 1e-3  # relative tolerance at intermediate t
    max_newton: int = 25
    t_step: float = MAX_DT
    linear_rtol: float = 1e-10
    direct_limit: int = 6000
    memory_budget: float | None = None  # bytes; default from the OS
    check_memory: bool = True


def available_memory():
    """Bytes of memory currently available (Linux /proc, else physical pages)."""
    try:
        with open("/proc/meminfo") as fh:
            for line in fh:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")


def estimate_memory(domain):
    """Rough peak bytes for a solve on ``domain``.

    Calibrated on 4-d runs: about 90 bytes per matrix nonzero for the matrix
    plus multigrid hierarchy and Krylov space, and about 700 bytes per grid
    node for fields, eigen-decompositions and temporaries.
    """
    unknowns = int(domain.interior.sum()) if not domain.periodic else domain.size
    dim = domain.dim
    stencil = 1 + 2 * dim + 2 * dim * (dim - 1)
    return 90.0 * stencil * unknowns + 700.0 * domain.size


def preflight(domain, budget=None):
    need = estimate_memory(domain)
    have = available_memory() if budget is None else budget
    if need > have:
        raise ResourceError(
            f"solve on {domain.kind} n={domain.n} resolution {domain.resolution} needs about "
            f"{need / 2**30:.1f} GiB, only {have / 2**30:.1f} GiB available"
        )
    return need


def _metric_or_none(spec, mask):
    return None if spec.omega.identity else spec.omega.g[mask]


def evaluate(spec, hess, gradient=False):
    """F, optional F^{i jbar}, and min eigenvalue at the equation nodes (chunked).

    Returns arrays over equation nodes in C order.  Raises AdmissibilityError
    carrying the minimum eigenvalue if the matrix field is not admissible.
    """
    mask = spec.equation_nodes
    a = (spec.chi + hess)[mask]
    g = _metric_or_none(spec, mask)
    m = a.shape[0]
    f = np.empty(m)
    lam_min = np.empty(m)
    grad = np.empty((m, spec.n, spec.n), complex) if gradient else None
    for s in range(0, m, CHUNK):
        sl = slice(s, min(m, s + CHUNK))
        sp = symcalc.generalized_eigh(a[sl], None if g is None else g[sl])
        lo = sp.lam[:, 0]
        lam_min[sl] = lo
        if not np.all(lo > 0):
            k = s + int(np.argmin(lo))
            node = tuple(int(i) for i in np.argwhere(mask)[k])
            raise AdmissibilityError(
                f"iterate left the admissible cone at node {node}", min_eigenvalue=float(lo.min()), node=node
            )
        fv, df = symcalc.quotient_from_eigs(sp.lam, spec.alpha)
        f[sl] = fv
        if gradient:
            grad[sl] = symcalc._upper_from_eigs(sp, df)
    return f, grad, lam_min


@dataclass
class ContinuityPath:
    """Targets f_t = (1 - t) f0 + t f1 over the equation nodes."""

    f0: np.ndarray
    f1: np.ndarray
    t: float = 0.0
    dt: float = MAX_DT

    def target(self, t):
        return (1.0 - t) * self.f0 + t * self.f1

    @property
    def scale(self):
        return float(np.max(np.abs(self.f1)))


@dataclass
class SolverState:
    """Current iterate on the full grid plus its residual and margin."""

    u: np.ndarray
    t: float
    residual: np.ndarray  # over equation nodes
    margin: float
    f: np.ndarray = field(repr=False)
    newton_iterations: int = 0
    history: list = field(default_factory=list)
    grad_min_eig: float = float("nan")

    @property
    def residual_norm(self):
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


class LinearizedOperator:
    """L v = Re sum_ij F^{i jbar} v_{i jbar}, frozen at one iterate.

    ``matrix`` is the sparse restriction to the unknowns; :meth:`apply` is the
    matrix-free version on full grid fields (known nodes enter with their
    values, so L applied to a constant is zero at every equation node).
    """

    def __init__(self, spec, upper, stencil):
        self.spec = spec
        self.stencil = stencil
        self.upper = np.zeros(spec.domain.shape + (spec.n, spec.n), complex)
        self.upper[spec.equation_nodes] = upper
        self._matrix = None

    @property
    def matrix(self):
        if self._matrix is None:
            coeffs = real_coefficients(self.upper)
            self._matrix = self.stencil.matrix(coeffs)
        return self._matrix

    def apply(self, v):
        hess = complex_hessian(v, self.spec.domain)
        out = np.real(np.einsum("...ij,...ij->...", self.upper, hess))
        out[~self.spec.equation_nodes] = 0.0
        return out


def linearized_operator(spec, state, stencil=None):
    """Build L at ``state``; raises AdmissibilityError for inadmissible iterates."""
    hess = complex_hessian(state.u, spec.domain)
    _, grad, _ = evaluate(spec, hess, gradient=True)
    if stencil is None:
        stencil = StencilOperator(spec.domain, pinned=_pins(spec))
    return LinearizedOperator(spec, grad, stencil)


class LinearSolver:
    """Direct LU on small systems, else GMRES with a reusable AMG preconditioner."""

    def __init__(self, rtol=1e-10, direct_limit=6000):
        self.rtol = rtol
        self.direct_limit = direct_limit
        self._ml = None
        self.rebuilds = 0
        self.last_iterations = 0

    def _build(self, a):
        import pyamg

        self._ml = pyamg.smoothed_aggregation_solver(a, symmetry="nonsymmetric", max_coarse=500)
        self.rebuilds += 1

    def solve(self, a, b):
        bn = float(np.linalg.norm(b))
        if bn == 0.0:
            return np.zeros_like(b)
        if a.shape[0] <= self.direct_limit:
            x = spla.splu(a.tocsc()).solve(b)
            self.last_iterations = 1
            return x
        for attempt in range(2):
            if self._ml is None or attempt == 1:
                self._build(a)
            count = [0]

            def cb(_):
                count[0] += 1

            x, info = spla.gmres(
                a, b, M=self._ml.aspreconditioner(), rtol=self.rtol, atol=0.0, restart=60, maxiter=6,
                callback=cb, callback_type="pr_norm",
            )
            self.last_iterations = count[0]
            rel = float(np.linalg.norm(a @ x - b)) / bn
            if rel <= 10 * self.rtol:
                return x
            log.debug("linear solve reached %.2e after %d iterations; rebuilding", rel, count[0])
        raise StepFailure(f"linear solve stalled at relative residual {rel:.2e}")


def _pins(spec):
    return [(0,) * spec.domain.dim] if spec.domain.periodic else []


@dataclass
class SolveReport:
    u: np.ndarray
    converged: bool
    final_residual: float
    tolerance: float
    margin: float
    wall_time: float
    log: list
    t_iterations: list
    min_margin: float
    min_grad_eig: float
    sup_error: float | None = None
    state: SolverState | None = None

    def summary(self):
        return {
            "converged": self.converged,
            "final_residual": self.final_residual,
            "tolerance": self.tolerance,
            "admissibility_margin": self.margin,
            "min_margin_along_path": self.min_margin,
            "min_gradient_eigenvalue": self.min_grad_eig,
            "wall_time": self.wall_time,
            "newton_iterations": int(sum(k for _, k in self.t_iterations)),
            "t_iterations": [[t, k] for t, k in self.t_iterations],
            "sup_error": self.sup_error,
        }


class Newton:
    """Damped Newton iterations for one problem (shares stencil and AMG state)."""

    def __init__(self, spec, options=None):
        self.spec = spec
        self.opt = options or SolverOptions()
        self.stencil = StencilOperator(spec.domain, pinned=_pins(spec))
        self.linear = LinearSolver(self.opt.linear_rtol, self.opt.direct_limit)
        self.mask = spec.equation_nodes

    def state_at(self, u, target, t):
        hess = complex_hessian(u, self.spec.domain)
        f, _, lam = evaluate(self.spec, hess)
        return SolverState(u, t, f - target, float(lam.min()), f)

    def step(self, state, target):
        """One damped Newton step; raises StepFailure when the line search fails."""
        spec = self.spec
        r0 = state.residual_norm
        hess = complex_hessian(state.u, spec.domain)
        _, grad, _ = evaluate(spec, hess, gradient=True)
        state.grad_min_eig = float(np.linalg.eigvalsh(grad)[:, 0].min())
        op = LinearizedOperator(spec, grad, self.stencil)
        res_grid = np.zeros(spec.domain.shape)
        res_grid[self.mask] = state.residual
        rhs = -self.stencil.gather(res_grid)
        delta = self.stencil.scatter(self.linear.solve(op.matrix, rhs))
        s = 1.0
        floor = max(MARGIN_FLOOR, KAPPA * state.margin)
        while s >= MIN_STEP:
            trial = state.u + s * delta
            try:
                new = self.state_at(trial, target, state.t)
            except AdmissibilityError:
                s *= 0.5
                continue
            if new.margin >= floor and new.residual_norm <= (1.0 - s / 4.0) * r0:
                new.newton_iterations = state.newton_iterations + 1
                new.history = state.history
                new.history.append({"t": state.t, "residual": new.residual_norm, "margin": new.margin, "step": s})
                new.grad_min_eig = state.grad_min_eig
                return new
            s *= 0.5
        raise StepFailure(f"line search exhausted at t={state.t:.6g} (residual {r0:.3e})")

    def converge(self, state, target, tol):
        k = 0
        while state.residual_norm > tol:
            if k >= self.opt.max_newton:
                raise StepFailure(f"no convergence in {k} Newton steps at t={state.t:.6g}")
            state = self.step(state, target)
            k += 1
        return state, k


def newton_step(spec, state, path, options=None):
    """Single damped Newton step toward the target at ``state.t``."""
    return Newton(spec, options).step(state, path.target(state.t))


def initial_state(spec):
    """u = usub with boundary data imposed, plus the path anchored there."""
    u = np.array(spec.usub, dtype=float)
    if not spec.domain.periodic:
        b = spec.domain.boundary
        u[b] = spec.phi[b]
        u[~spec.domain.active] = np.nan
    hess = complex_hessian(u, spec.domain)
    try:
        f0, _, lam = evaluate(spec, hess)
    except AdmissibilityError as exc:
        raise ValidationError(f"subsolution is not admissible: {exc}") from exc
    path = ContinuityPath(f0, spec.target[spec.equation_nodes])
    state = SolverState(u, 0.0, np.zeros_like(f0), float(lam.min()), f0)
    return state, path


def solve_dirichlet(spec, options=None, initial=None):
    """Drive t from 0 to 1 along the continuity path.

    Returns a :class:`SolveReport`.  Raises NonconvergenceError when the step
    in t falls below 1e-6 and ResourceError when the grid cannot fit in
    memory.  ``initial`` optionally replaces usub as the starting iterate
    (same boundary values); the path is then anchored at that iterate.
    """
    opt = options or SolverOptions()
    if opt.check_memory:
        preflight(spec.domain, opt.memory_budget)
    start = time.perf_counter()
    state, path = initial_state(spec)
    if initial is not None:
        u0 = np.array(initial, dtype=float)
        if not spec.domain.periodic:
            u0[spec.domain.boundary] = spec.phi[spec.domain.boundary]
        hess = complex_hessian(u0, spec.domain)
        f0, _, lam = evaluate(spec, hess)
        path = ContinuityPath(f0, path.f1)
        state = SolverState(u0, 0.0, np.zeros_like(f0), float(lam.min()), f0)
    newton = Newton(spec, opt)
    tol = opt.tol if opt.tol is not None else 1e-8 * path.scale
    path_tol = max(tol, opt.path_tol * path.scale)
    dt = min(opt.t_step, MAX_DT)
    t = 0.0
    log_rows = [{"t": 0.0, "iter": 0, "residual": 0.0, "margin": state.margin, "step": 0.0}]
    t_iters = []
    min_margin = state.margin
    min_grad = float("inf")
    while t < 1.0:
        t_new = min(1.0, t + dt)
        target = path.target(t_new)
        trial = newton.state_at(state.u, target, t_new)
        trial.history = []
        try:
            trial, k = newton.converge(trial, target, tol if t_new == 1.0 else path_tol)
        except StepFailure as exc:
            dt *= 0.5
            log.info("t step %.3g -> %.3g failed (%s); dt=%.3g", t, t_new, exc, dt)
            if dt < STALL_DT:
                raise NonconvergenceError(
                    f"continuity path stalled at t={t:.6g}",
                    diagnostics={"t": t, "dt": dt, "log": log_rows, "reason": str(exc)},
                ) from exc
            continue
        for j, row in enumerate(trial.history, 1):
            log_rows.append({"t": t_new, "iter": j, **{k2: row[k2] for k2 in ("residual", "margin", "step")}})
            min_margin = min(min_margin, row["margin"])
        if k == 0:
            log_rows.append({"t": t_new, "iter": 0, "residual": trial.residual_norm, "margin": trial.margin, "step": 0.0})
        if np.isfinite(trial.grad_min_eig):
            min_grad = min(min_grad, trial.grad_min_eig)
        t_iters.append((t_new, k))
        state = trial
        t = t_new
        if k <= 2:
            dt = min(MAX_DT, opt.t_step, 1.5 * dt)
    if not np.isfinite(min_grad):
        hess = complex_hessian(state.u, spec.domain)
        _, grad, _ = evaluate(spec, hess, gradient=True)
        min_grad = float(np.linalg.eigvalsh(grad)[:, 0].min())
    err = None
    if spec.exact is not None:
        diff = state.u - spec.exact
        if spec.domain.periodic:
            diff = diff - diff.mean()
        err = float(np.nanmax(np.abs(diff[spec.equation_nodes])))
    wall = time.perf_counter() - start
    return SolveReport(
        u=state.u,
        converged=state.residual_norm <= tol,
        final_residual=state.residual_norm,
        tolerance=tol,
        margin=state.margin,
        wall_time=wall,
        log=log_rows,
        t_iterations=t_iters,
        min_margin=min_margin,
        min_grad_eig=min_grad,
        sup_error=err,
        state=state,
    )

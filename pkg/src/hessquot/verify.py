"""Numerical checks of the structural inequalities behind the a priori estimates.

Each check returns a :class:`LemmaReport` (or a plain dict for the scaling
and boundary-ratio studies) that serializes to JSON.  Randomized suites draw
per-batch generators from one root seed, so any witness can be replayed from
``(seed, batch, row)``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from hessquot import symcalc
from hessquot.discretization import (
    _one_sided_hessian,
    complex_hessian,
    distance_to_boundary,
    gradient_and_laplacian,
    upper_inverse,
)
from hessquot.errors import ConfigurationError, UnsupportedOperationError, ValidationError
from hessquot.problem import check_subsolution

GLZ_TOL = 1e-10
BLOCK_TOL = 1e-10
EQUIV_TOL = 1e-10
BATCH = 10_000


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return {"re": _jsonable(x.real), "im": _jsonable(x.imag)}
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class LemmaReport:
    """Outcome of one check: worst slack, the input that produced it, pass flag."""

    lemma: str
    trials: int
    worst_slack: float
    tolerance: float
    passed: bool
    seed: int | None = None
    witness: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class BarrierConfig:
    """Barrier v = (u - usub) + t_bar sigma - T_bar sigma^2 on the collar sigma < delta."""

    t_bar: float
    T_bar: float
    delta: float
    c0_target: float = 1e-6

    def __post_init__(self):
        if self.t_bar < 0 or self.T_bar < 0:
            raise ConfigurationError("t_bar and T_bar must be non-negative")
        if not self.delta > 0:
            raise ConfigurationError("collar width delta must be positive")
        if not self.c0_target > 0:
            raise ConfigurationError("c0_target must be positive")

    @property
    def ordering_only(self):
        return self.t_bar == 0 and self.T_bar == 0


def smooth_collar_width(domain):
    """Width delta0 of the collar on which the barrier is built.

    For a ball sigma is smooth up to the centre.  For a box sigma is the
    minimum of affine face distances: concave everywhere and smooth away from
    the bisecting planes, so the collar is capped at half the shortest side.
    """
    if domain.periodic:
        raise UnsupportedOperationError("a torus has no boundary collar")
    if domain.kind == "ball":
        return float(domain.radius)
    return 0.5 * float(np.min(domain.upper - domain.lower))


def smooth_sigma_nodes(domain):
    """Nodes whose full stencil lies where sigma is smooth.

    On a ball this is every active node off the centre.  On a box the nearest
    face must win by more than two grid spacings, since a diagonal stencil
    offset changes each face distance by at most one spacing.
    """
    if domain.kind == "ball":
        return domain.active & (distance_to_boundary(domain) < domain.radius - 2 * np.max(domain.h))
    x = domain.open_coords()
    d = []
    for a in range(domain.dim):
        d.append(np.broadcast_to(x[a] - domain.lower[a], domain.shape))
        d.append(np.broadcast_to(domain.upper[a] - x[a], domain.shape))
    d = np.sort(np.stack(d), axis=0)
    return (d[1] - d[0]) > 2.0 * np.max(domain.h) * (1 + 1e-9)


def _u_of(state):
    return np.asarray(state.u if hasattr(state, "u") else state, dtype=float)


def _batches(trials, batch=BATCH):
    sizes = [batch] * (trials // batch)
    if trials % batch:
        sizes.append(trials % batch)
    return sizes


def _run_batches(func, trials, seed, threads=1):
    """Run ``func(rng, size, index)`` over seeded batches; results in batch order."""
    sizes = _batches(trials)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(np.random.default_rng(s), m, k) for k, (s, m) in enumerate(zip(seqs, sizes))]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda j: func(*j), jobs))
    return [func(*j) for j in jobs]


# ------------------------------------------------------------------ GLZ


def check_glz(trials=10_000, seed=42, ns=(2, 3, 4, 5, 6), threads=1):
    """Both gaps of lhs >= middle >= 0 over random lam > 0 and complex xi.

    Trials are split over all (n, alpha) with 2 <= alpha <= n (the first
    ``trials % cases`` cases take one extra so the total is exact), each
    case drawing from its own generator seeded by ``(seed, n, alpha)``.  Gaps
    are compared against ``-GLZ_TOL * glz_scale``.
    """
    cases = [(n, a) for n in ns for a in range(2, n + 1)]
    if not cases:
        raise ConfigurationError("no (n, alpha) pairs with 2 <= alpha <= n")
    base, extra = divmod(trials, len(cases))

    def run(k):
        n, a = cases[k]
        per = max(1, base + (k < extra))
        rng = np.random.default_rng(np.random.SeedSequence([seed, n, a]))
        lam = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=(per, n)))
        xi = rng.normal(size=(per, n)) + 1j * rng.normal(size=(per, n))
        lhs, mid = symcalc.glz_terms(lam, xi, a)
        rel = np.minimum(lhs - mid, mid) / symcalc.glz_scale(lam, xi)
        i = int(np.argmin(rel))
        return n, a, per, float(rel[i]), {"lam": lam[i], "xi": xi[i], "row": i}

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(len(cases))))
    else:
        results = [run(k) for k in range(len(cases))]
    worst = min(results, key=lambda r: r[3])
    n, a, _, slack, wit = worst
    return LemmaReport(
        lemma="glz",
        trials=sum(r[2] for r in results),
        worst_slack=slack,
        tolerance=GLZ_TOL,
        passed=all(r[3] >= -GLZ_TOL for r in results),
        seed=seed,
        witness={"n": n, "alpha": a, **wit},
        details={"cases": [{"n": r[0], "alpha": r[1], "trials": r[2], "worst_relative_gap": r[3]} for r in results]},
    )


# ------------------------------------------------------------ key lemma


def _isqrt_metric(g):
    """Hermitian inverse square root of a batch of metrics."""
    s, v = np.linalg.eigh(g)
    return (v * (1.0 / np.sqrt(s))[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def key_lemma_terms(spec, u):
    """Per-node quantities for the key lemma at the equation nodes.

    Returns a dict with ``w`` (trace of chi_u), ``lhs`` = sum F^{i jbar}
    (usub - u)_{i jbar}, ``trace`` = sum F^{i jbar} g_{i jbar}, and the
    eigenframe versions ``lhs_frame``, ``trace_frame`` that use the weights
    S_{alpha-1;i}(1/lam) / lam_i^2 together with the normalization
    ``F^(alpha+1) / alpha`` that converts them.
    """
    mask = spec.equation_nodes
    hu = complex_hessian(u, spec.domain)[mask]
    hs = spec.sub_hessian()[mask]
    a = spec.chi[mask] + hu
    d = hs - hu
    g = spec.omega.g[mask]
    n, alpha = spec.n, spec.alpha

    f, grad, _ = symcalc.quotient_field(a, g, alpha)
    lhs = np.real(np.einsum("...ij,...ij->...", grad, d))
    trace = np.real(np.einsum("...ij,...ij->...", grad, g))
    w = np.real(np.einsum("...ij,...ij->...", upper_inverse(g), a))

    # independent frame: symmetric whitening and a plain eigh
    r = _isqrt_metric(g)
    lam, basis = np.linalg.eigh(r @ a @ r)
    dd = np.real(np.einsum("...ki,...kl,...li->...i", np.conj(basis), r @ d @ r, basis))
    mu = 1.0 / lam
    weight = symcalc.esym_deleted_all(mu)[..., alpha - 1] * mu**2
    norm = symcalc.esym_all(mu)[..., alpha] ** (-(alpha + 1.0) / alpha) / alpha
    return {
        "w": w,
        "lhs": lhs,
        "trace": trace,
        "lhs_frame": np.sum(weight * dd, axis=-1),
        "trace_frame": np.sum(weight, axis=-1),
        "abs_frame": np.sum(weight * np.abs(dd), axis=-1),
        "norm": norm,
        "F": f,
        "n": n,
    }


def _bisect_theta(lhs, den, iters=200):
    """Largest theta with min(lhs - theta * den) >= 0 (den > 0)."""
    if lhs.size == 0 or np.min(lhs) < 0:
        return 0.0
    lo, hi = 0.0, float(np.max(lhs / den)) + 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.min(lhs - mid * den) >= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo


def check_key_lemma(state, spec, N=None, theta=None):
    """Empirical constants (N, theta) for the subsolution alternative.

    At nodes with ``w >= N`` the slack is
    ``sum F^{i jbar}(usub - u)_{i jbar} - theta * (sum F^{i jbar} g_{i jbar} + 1)``.
    ``N`` defaults to the 90th percentile of ``w``; the largest admissible
    theta is found by bisection and ``theta`` defaults to half of it.  The
    report also records the per-node agreement between the coordinate form
    and the eigenframe form.
    """
    u = _u_of(state)
    t = key_lemma_terms(spec, u)
    w = t["w"]
    if N is None:
        N = float(np.percentile(w, 90))
    sel = w >= N
    report = LemmaReport(lemma="key-lemma", trials=int(sel.sum()), worst_slack=float("nan"),
                         tolerance=EQUIV_TOL, passed=False)
    report.details["N"] = float(N)
    if not np.any(sel):
        report.flags.append("empty: no nodes with w >= N")
        report.passed = True
        return report

    lhs, den = t["lhs"][sel], t["trace"][sel] + 1.0
    norm = t["norm"][sel]
    scale_lhs = np.maximum(norm * t["abs_frame"][sel], np.finfo(float).tiny)
    err_lhs = np.abs(norm * t["lhs_frame"][sel] - lhs) / scale_lhs
    err_tr = np.abs(norm * t["trace_frame"][sel] - t["trace"][sel]) / t["trace"][sel]
    equiv = float(max(err_lhs.max(), err_tr.max()))

    theta_max = _bisect_theta(lhs, den)
    if theta is None:
        theta = 0.5 * theta_max
    slack = lhs - theta * den
    k = int(np.argmin(slack))
    nodes = np.argwhere(spec.equation_nodes)[np.flatnonzero(sel)[k]]
    report.worst_slack = float(slack[k])
    report.witness = {"node": nodes, "w": float(w[sel][k]), "lhs": float(lhs[k]), "trace": float(t["trace"][sel][k])}
    report.details.update(
        theta=float(theta),
        theta_max=float(theta_max),
        equivalence_max_relative=equiv,
        w_range=[float(w.min()), float(w.max())],
    )
    if float(np.max(np.abs(t["lhs"]))) <= 1e-12 * max(1.0, float(np.max(t["trace"]))):
        report.flags.append("at subsolution, only theta -> 0 passes")
    report.passed = bool(theta_max > 0 and report.worst_slack >= 0 and equiv <= EQUIV_TOL)
    return report


# -------------------------------------------------------------- barrier


def barrier_field(state, spec, config):
    sigma = distance_to_boundary(spec.domain)
    v = _u_of(state) - spec.usub + config.t_bar * sigma - config.T_bar * sigma**2
    return v, sigma


def check_barrier_lemma(state, spec, config):
    """Check v >= 0 and sum F^{i jbar} v_{i jbar} <= -c0 (1 + sum F^{i jbar} g_{i jbar}) on the collar.

    ``v >= 0`` is checked on the whole collar.  The measured c0 is the
    minimum of ``-L v / (1 + tr_F g)`` over collar nodes where sigma is smooth
    (see :func:`smooth_sigma_nodes`); nodes near the kinks of a box distance
    are counted but not tested.  With ``t_bar = T_bar = 0`` only the ordering
    ``u >= usub`` is checked.
    """
    dom = spec.domain
    if dom.periodic:
        raise UnsupportedOperationError("barrier check needs a domain with boundary")
    delta0 = smooth_collar_width(dom)
    if config.delta >= delta0:
        raise ConfigurationError(f"collar width {config.delta} must be below {delta0}")
    u = _u_of(state)
    v, sigma = barrier_field(u, spec, config)
    collar = dom.interior & (sigma < config.delta)
    report = LemmaReport(lemma="barrier", trials=int(collar.sum()), worst_slack=float("nan"),
                         tolerance=config.c0_target, passed=False, details={"config": asdict(config)})
    if not np.any(collar):
        report.flags.append("empty collar: no interior nodes with sigma < delta")
        return report

    scale = max(1.0, float(np.nanmax(np.abs(u))))
    vmin = float(np.min(v[collar]))
    order_ok = vmin >= -1e-10 * scale
    report.details["min_v"] = vmin
    if config.ordering_only:
        report.worst_slack = vmin
        report.passed = bool(order_ok)
        report.flags.append("ordering only")
        return report

    smooth = collar & smooth_sigma_nodes(dom)
    report.details["kink_nodes_skipped"] = int(collar.sum() - smooth.sum())
    if not np.any(smooth):
        report.flags.append("no collar nodes where sigma is smooth")
        return report
    a = spec.chi[smooth] + complex_hessian(u, dom)[smooth]
    g = spec.omega.g[smooth]
    _, grad, _ = symcalc.quotient_field(a, g, spec.alpha)
    lv = np.real(np.einsum("...ij,...ij->...", grad, complex_hessian(v, dom)[smooth]))
    den = 1.0 + np.real(np.einsum("...ij,...ij->...", grad, g))
    c0 = -lv / den
    k = int(np.argmin(c0))
    report.worst_slack = float(c0[k] - config.c0_target)
    report.witness = {"node": np.argwhere(smooth)[k], "sigma": float(sigma[smooth][k]), "Lv": float(lv[k])}
    report.details["c0"] = float(c0[k])
    report.passed = bool(order_ok and c0[k] >= config.c0_target)
    return report


def sweep_barrier(state, spec, t_values=None, T_values=None, deltas=None, c0_target=1e-6):
    """Evaluate :func:`check_barrier_lemma` on a (t, T, delta) grid.

    Defaults use collars of 1.5, 2.5 and 4.5 grid spacings.  Returns a dict
    with every configuration and the feasible subset.
    """
    h = float(np.max(spec.domain.h))
    t_values = (0.1, 1.0, 10.0) if t_values is None else t_values
    T_values = (1.0, 10.0, 100.0) if T_values is None else T_values
    deltas = (1.5 * h, 2.5 * h, 4.5 * h) if deltas is None else deltas
    delta0 = smooth_collar_width(spec.domain)
    rows = []
    for d in deltas:
        if d >= delta0:
            continue
        for T in T_values:
            for t in t_values:
                r = check_barrier_lemma(state, spec, BarrierConfig(t, T, d, c0_target))
                rows.append({"t": t, "T": T, "delta": d, "passed": r.passed,
                             "c0": r.details.get("c0"), "min_v": r.details.get("min_v"), "collar_nodes": r.trials})
    feasible = [r for r in rows if r["passed"]]
    return {"configurations": rows, "feasible": feasible, "nonempty": bool(feasible)}


# ---------------------------------------------------------- block lemma


def random_pd_hermitian(rng, size, n, bounds):
    """Random Hermitian matrices with spectrum uniform in ``bounds``."""
    z = rng.normal(size=(size, n, n)) + 1j * rng.normal(size=(size, n, n))
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r, axis1=-2, axis2=-1)
    q = q * (ph / np.abs(ph))[..., None, :]
    lam = rng.uniform(bounds[0], bounds[1], size=(size, n))
    a = (q * lam[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def block_lemma_terms(a, alpha):
    """Per-matrix determinant identity error, Schur chain slack and ratio.

    ``a`` has shape ``(..., n, n)``; B is the leading (n-1) block.  The ratio
    is ``G^alpha(B) S_{n-alpha}(A) / S_n(A)`` with
    ``G^alpha(B) = S_{n-1}(B) / S_{n-alpha-1}(B)``.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if not 1 <= alpha <= n - 1:
        raise ConfigurationError(f"alpha={alpha} outside 1..{n - 1}")
    b = a[..., :-1, :-1]
    c = a[..., :-1, -1]
    ann = a[..., -1, -1].real
    schur = ann - np.real(np.einsum("...i,...i->...", np.conj(c), np.linalg.solve(b, c[..., None])[..., 0]))
    det_a = np.real(np.linalg.det(a))
    det_b = np.real(np.linalg.det(b))
    det_err = np.abs(det_a - schur * det_b) / np.abs(det_a)

    sa = symcalc.esym_all(np.linalg.eigvalsh(a))
    sb = symcalc.esym_all(np.linalg.eigvalsh(b))
    m = n - alpha
    chain_rhs = schur * sb[..., m - 1] + sb[..., m]
    chain = sa[..., m] - chain_rhs
    chain_scale = np.maximum(1.0, np.abs(sa[..., m]))
    ratio = sb[..., n - 1] / sb[..., m - 1] * sa[..., m] / sa[..., n]
    return {"det_error": det_err, "chain_slack": chain / chain_scale, "ratio": ratio, "schur": schur}


def check_block_lemma(trials=100_000, n=3, alpha=1, eigenvalue_bounds=(0.5, 2.0), seed=42, threads=1):
    """Random test of the determinant identity, Schur chain and ratio bound.

    Reports the largest c0 with ``ratio >= 1 + c0`` across all trials.
    Worst slack is the most negative of the three margins (det identity
    against its tolerance, chain slack, ratio - 1).
    """
    lo, hi = eigenvalue_bounds
    if not 0 < lo <= hi:
        raise ConfigurationError(f"eigenvalue bounds {eigenvalue_bounds} must satisfy 0 < m <= M")

    def batch(rng, m, k):
        a = random_pd_hermitian(rng, m, n, (lo, hi))
        t = block_lemma_terms(a, alpha)
        i = int(np.argmin(t["ratio"]))
        j = int(np.argmin(t["chain_slack"]))
        return {
            "det": float(t["det_error"].max()),
            "chain": float(t["chain_slack"][j]),
            "ratio": float(t["ratio"][i]),
            "ratio_witness": {"A": a[i], "batch": k, "row": i},
            "chain_witness": {"A": a[j], "batch": k, "row": j},
        }

    parts = _run_batches(batch, trials, seed, threads)
    det = max(p["det"] for p in parts)
    chain = min(p["chain"] for p in parts)
    best = min(parts, key=lambda p: p["ratio"])
    c0 = best["ratio"] - 1.0
    worst = min(BLOCK_TOL - det, chain + BLOCK_TOL, c0)
    return LemmaReport(
        lemma="block-lemma",
        trials=trials,
        worst_slack=float(worst),
        tolerance=BLOCK_TOL,
        passed=bool(det <= BLOCK_TOL and chain >= -BLOCK_TOL and c0 > 0),
        seed=seed,
        witness={"n": n, "alpha": alpha, **best["ratio_witness"]},
        details={"c0": c0, "det_error_max": det, "chain_slack_min": chain,
                 "eigenvalue_bounds": [lo, hi], "min_ratio": best["ratio"]},
    )


def block_lemma_suite(trials=100_000, ns=(3, 4, 5), eigenvalue_bounds=(0.5, 2.0), seed=42, threads=1):
    """:func:`check_block_lemma` for every n in ``ns`` and 1 <= alpha <= n-1, merged."""
    cases = []
    for n in ns:
        for a in range(1, n):
            r = check_block_lemma(trials, n, a, eigenvalue_bounds, seed=seed + 1000 * n + a, threads=threads)
            cases.append(r)
    worst = min(cases, key=lambda r: r.worst_slack)
    return LemmaReport(
        lemma="block-lemma",
        trials=sum(r.trials for r in cases),
        worst_slack=worst.worst_slack,
        tolerance=BLOCK_TOL,
        passed=all(r.passed for r in cases),
        seed=seed,
        witness={**worst.witness, "case_seed": worst.seed},
        details={"cases": [{"n": r.witness["n"], "alpha": r.witness["alpha"], "seed": r.seed, "passed": r.passed,
                            **r.details} for r in cases]},
    )


# ------------------------------------------------------ estimate scaling


def _sup_fields(spec, u):
    dom = spec.domain
    metric = None if spec.omega.identity else spec.omega.g
    grad, lap = gradient_and_laplacian(u, dom, metric=metric)
    if dom.periodic:
        return {"sup_grad": float(np.max(grad)), "sup_lap": float(np.max(lap)), "sup_abs_lap": float(np.max(np.abs(lap)))}
    act, bnd = dom.active, dom.boundary
    if dom.kind == "ball":
        # boundary nodes of a ball sit off the sphere; use the first interior layer
        from scipy.ndimage import binary_dilation

        bnd = dom.interior & binary_dilation(~dom.interior, iterations=1)
    return {
        "sup_grad": float(np.nanmax(grad[act])),
        "sup_boundary_grad": float(np.nanmax(grad[bnd])),
        "sup_lap": float(np.nanmax(lap[act])),
        "sup_boundary_lap": float(np.nanmax(lap[bnd])),
    }


def check_estimate_scalings(instances, bound=1.5):
    """Empirical gradient and Laplacian ratios across a solved family.

    ``instances`` is a sequence of ``(spec, solution)`` pairs where the
    solution is a SolveReport, SolverState or array.  Boundary-value
    instances report ``R_grad = sup|grad u| / (1 + sup_bdry |grad u|)`` and
    ``R_lap = sup Delta u / (1 + sup_bdry Delta u)`` and pass when the last
    to first ratio of each is at most ``bound``.  Torus instances report the
    sup values directly.
    """
    instances = list(instances)
    if len(instances) < 1:
        raise ConfigurationError("need at least one instance")
    rows = []
    for spec, sol in instances:
        if getattr(sol, "converged", True) is False:
            raise ValidationError(f"instance {spec.name or '?'} is not solved")
        rows.append({"name": spec.name, **_sup_fields(spec, _u_of(sol))})
    if instances[0][0].domain.periodic:
        return {"closed": True, "instances": rows, "passed": True}
    for r in rows:
        r["R_grad"] = r["sup_grad"] / (1.0 + r["sup_boundary_grad"])
        r["R_lap"] = r["sup_lap"] / (1.0 + r["sup_boundary_lap"])
    g = rows[-1]["R_grad"] / rows[0]["R_grad"]
    lp = rows[-1]["R_lap"] / rows[0]["R_lap"]
    return {
        "closed": False,
        "instances": rows,
        "max_R_grad": max(r["R_grad"] for r in rows),
        "max_R_lap": max(r["R_lap"] for r in rows),
        "growth_grad": g,
        "growth_lap": lp,
        "bound": bound,
        "passed": bool(g <= bound and lp <= bound),
    }


# ------------------------------------------------------------------ m0


def _householder_complement(z):
    """Orthonormal bases (columns) of the Hermitian complement of each unit vector z."""
    z = np.asarray(z, dtype=complex)
    n = z.shape[-1]
    ph = np.where(np.abs(z[..., 0]) > 0, z[..., 0] / np.maximum(np.abs(z[..., 0]), 1e-300), 1.0)
    v = z.copy()
    v[..., 0] += ph
    vv = np.real(np.sum(np.conj(v) * v, axis=-1))
    h = np.eye(n) - 2.0 * v[..., :, None] * np.conj(v[..., None, :]) / vv[..., None, None]
    return h[..., :, 1:]


def _box_boundary_frames(dom):
    """Face nodes of a box (exactly one extreme real axis) and their tangent bases."""
    x = dom.open_coords()
    at = np.zeros(dom.shape, dtype=int)
    face = np.zeros(dom.shape, dtype=int)
    for a in range(dom.dim):
        on = np.isclose(x[a], dom.lower[a]) | np.isclose(x[a], dom.upper[a])
        at += on
        face = np.where(on, a, face)
    nodes = (at == 1) & dom.boundary
    k = face[nodes] // 2  # complex coordinate normal to the face
    n = dom.n
    eye = np.eye(n)
    frames = np.stack([eye[:, [j for j in range(n) if j != kk]] for kk in range(n)])[k]
    return nodes, frames.astype(complex)


def _ball_boundary_frames(dom):
    from scipy.ndimage import binary_dilation

    nodes = dom.interior & binary_dilation(~dom.interior, iterations=1)
    c = np.asarray(dom.center)
    zc = np.moveaxis(dom.z(), 0, -1) - (c[0::2] + 1j * c[1::2])
    zn = zc[nodes]
    zn = zn / np.linalg.norm(zn, axis=-1, keepdims=True)
    return nodes, _householder_complement(zn)


def boundary_tangential_data(u, spec):
    """Boundary nodes, full matrices chi_u, tangential blocks and restricted metrics."""
    dom = spec.domain
    if dom.periodic:
        raise UnsupportedOperationError("m0 needs a domain with boundary")
    if dom.kind == "box":
        nodes, frames = _box_boundary_frames(dom)
        hess = _one_sided_hessian(u, dom)
    else:
        nodes, frames = _ball_boundary_frames(dom)
        hess = complex_hessian(u, dom)
    a = spec.chi[nodes] + hess[nodes]
    g = spec.omega.g[nodes]
    # restriction of a lower-index form to xi = T eta is T^T A conj(T)
    tt = np.swapaxes(frames, -1, -2)
    at = tt @ a @ np.conj(frames)
    gt = tt @ g @ np.conj(frames)
    return nodes, a, g, at, gt


def check_tangential_quantity_m0(state, spec, psi_scale=1.0, link=True, trials=20_000, seed=42, pad=0.1):
    """Minimum over the boundary of (C/psi) S_{n-1}/S_{n-alpha-1} of the tangential block.

    With ``link=True`` the result is compared with ``1 + c0`` where c0 comes
    from :func:`check_block_lemma` on the realized eigenvalue range of chi_u
    at the boundary, widened by the relative ``pad``.
    """
    u = _u_of(state)
    n, alpha = spec.n, spec.alpha
    nodes, a, g, at, gt = boundary_tangential_data(u, spec)
    out = {"alpha": alpha, "n": n, "psi_scale": psi_scale, "nodes": int(nodes.sum())}
    if alpha == n:
        out.update(m0=float("inf"), passed=True, note="S_{n-alpha-1} vanishes for alpha = n")
        return out
    lam_t = symcalc.generalized_eigh(at, gt).lam
    st = symcalc.esym_all(lam_t)
    psi = np.asarray(spec.psi, dtype=float)[nodes] * psi_scale
    m0_nodes = symcalc.binom(n, alpha) / psi * st[..., n - 1] / st[..., n - alpha - 1]
    k = int(np.argmin(m0_nodes))
    out.update(m0=float(m0_nodes[k]), node=np.argwhere(nodes)[k].tolist(), passed=bool(m0_nodes[k] > 1.0))
    if link:
        lam = symcalc.generalized_eigh(a, g).lam
        lo, hi = float(lam.min()), float(lam.max())
        bounds = (lo * (1.0 - pad), hi * (1.0 + pad))
        blk = check_block_lemma(trials, n, alpha, bounds, seed=seed)
        out["block_c0"] = blk.details["c0"]
        out["eigenvalue_bounds"] = list(bounds)
        out["link_holds"] = bool(out["m0"] >= 1.0 + blk.details["c0"])
    return out


def m0_psi_probe(state, spec, scales=(1.0, 1.5, 2.0, 4.0)):
    """m0 and subsolution strictness as psi is scaled up."""
    rows = []
    for s in scales:
        r = check_tangential_quantity_m0(state, spec, psi_scale=s, link=False)
        try:
            strict = check_subsolution(replace(spec, psi=s * np.asarray(spec.psi))).strict
        except ValidationError:
            strict = False
        rows.append({"scale": s, "m0": r["m0"], "subsolution_strict": bool(strict)})
    return rows


def flat_ball_m0(n, alpha):
    """Closed-form m0 for u = |z|^2 on the flat ball (psi = 1): n / (n - alpha)."""
    return n / (n - alpha) if alpha < n else float("inf")

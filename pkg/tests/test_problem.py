import json
from pathlib import Path

import numpy as np
import pytest
import sympy
from numpy.testing import assert_allclose

from hessquot.discretization import Domain, complex_hessian
from hessquot.errors import ProblemFileError, ValidationError
from hessquot.problem import (
    BoxBump,
    Constant,
    ProductSine,
    Quadratic,
    Radial,
    Trigonometric,
    boundary_data,
    check_admissible,
    check_cone_membership,
    check_subsolution,
    family_from_dict,
    load_problem,
    manufacture_solution,
    problem_from_dict,
    problem_from_families,
    sample,
)

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

X = sympy.symbols("x1 y1 x2 y2", real=True)


def symbolic_hessian(expr):
    xs, ys = X[0::2], X[1::2]
    out = []
    for i in range(2):
        row = []
        for j in range(2):
            dz = (sympy.diff(expr, xs[i]) - sympy.I * sympy.diff(expr, ys[i])) / 2
            e = (sympy.diff(dz, xs[j]) + sympy.I * sympy.diff(dz, ys[j])) / 2
            row.append(sympy.lambdify(X, e, "numpy"))
        out.append(row)
    return out


def check_family(fam, expr, pts):
    val = sympy.lambdify(X, expr, "numpy")(*pts)
    assert_allclose(fam.value(pts), val, rtol=1e-12, atol=1e-12)
    ref = symbolic_hessian(expr)
    h = fam.hessian(pts)
    for i in range(2):
        for j in range(2):
            assert_allclose(h[..., i, j], np.broadcast_to(ref[i][j](*pts), pts.shape[1:]), rtol=1e-10, atol=1e-12)


@pytest.fixture
def pts(rng):
    return rng.uniform(-0.9, 0.9, (4, 25))


def test_quadratic_family_symbolic(pts):
    p = np.array([[2.0, 0.5 + 0.25j], [0.5 - 0.25j, 1.0]])
    q = np.array([[0.3, 0.1j], [0.1j, -0.2]])
    fam = Quadratic(p, q, np.array([1.0, 2j]), 0.5)
    x1, y1, x2, y2 = X
    z = [x1 + sympy.I * y1, x2 + sympy.I * y2]
    zb = [sympy.conjugate(w) for w in z]
    herm = sum(zb[i] * sympy.nsimplify(complex(p[i, j])) * z[j] for i in range(2) for j in range(2))
    hol = sum(z[i] * sympy.nsimplify(complex(q[i, j])) * z[j] for i in range(2) for j in range(2))
    expr = sympy.re(sympy.expand(herm + hol + z[0] + 2 * sympy.I * z[1])) + sympy.Rational(1, 2)
    check_family(fam, expr, pts)


def test_radial_family_symbolic(pts):
    x1, y1, x2, y2 = X
    r2 = (x1 - 0.1) ** 2 + y1**2 + x2**2 + (y2 + 0.2) ** 2
    fam = Radial([0.5, 1.0, 0.25, -0.1], center=[0.1, 0, 0, -0.2])
    check_family(fam, 0.5 + r2 + 0.25 * r2**2 - 0.1 * r2**3, pts)


def test_trig_and_product_sine_symbolic(pts):
    x1, y1, x2, y2 = X
    k = [1.0, -0.5, 2.0, 0.3]
    fam = Trigonometric(0.7, np.array(k), 0.2)
    check_family(fam, 0.7 * sympy.sin(k[0] * x1 + k[1] * y1 + k[2] * x2 + k[3] * y2 + 0.2), pts)
    check_family(ProductSine(0.05, (0, 3)), 0.05 * sympy.sin(x1) * sympy.sin(y2), pts)


def test_box_bump_symbolic_and_shape(pts):
    x1, y1, x2, y2 = X
    p = lambda t: 1 - t**2
    expr = -1 / (1 / (p(x1) * p(y1)) + 1 / (p(x2) * p(y2)))
    fam = BoxBump(-np.ones(4), np.ones(4))
    check_family(fam, expr, pts)
    d = Domain.box(2, 9)
    v = sample(fam, d)
    assert np.all(v[d.boundary] == 0)
    assert np.all(v[d.interior] < 0)
    lam = np.linalg.eigvalsh(fam.hessian(d.coords())[d.interior])
    assert lam.min() > 0


def test_sum_and_constant_algebra(pts):
    f = 2 * Constant(1.5) + Radial([0, 1])
    assert_allclose(f.value(pts), 3 + np.sum(pts**2, 0))
    assert_allclose(f.hessian(pts)[..., 0, 0], 1.0)


def test_family_parser_errors():
    with pytest.raises(ProblemFileError, match="amplitude"):
        family_from_dict({"kind": "trigonometric", "wave": [1, 0, 0, 0]}, 2)
    with pytest.raises(ProblemFileError):
        family_from_dict({"kind": "spline"}, 2)
    assert isinstance(family_from_dict(3.0, 2), Constant)


def test_manufactured_psi_for_flat_quadratic():
    # chi_u = I for |z|^2 + pluriharmonic: S_2/S_1 = 1/2, psi = C(2,1)/2 = 1
    d = Domain.box(2, 5)
    u = Quadratic(np.eye(2), np.array([[0.1, 0], [0, 0]]))
    spec = manufacture_solution(u, d, 1)
    assert_allclose(spec.psi, 1.0)
    assert_allclose(spec.target, 0.5)
    # the exact quadratic is also a discrete solution
    chk = check_subsolution(spec, usub=spec.exact)
    assert abs(chk.min_defect) < 1e-12
    assert check_admissible(spec.exact, spec).admissible


def test_box_problem_has_strict_subsolution():
    spec = load_problem(PROBLEMS / "box_manufactured.json", resolution=9)
    rep = check_subsolution(spec)
    assert rep.is_subsolution and rep.strict
    assert rep.eps_lower > 0
    assert spec.exact is not None


def test_ball_boundary_data_follows_subsolution():
    d = Domain.ball(2, 13)
    phi = Radial([0, 1.0, 0.25])
    usub = Radial([0, 1.0, 0.25]) + 0.1 * Radial([-1.0, 1.0])
    vals = boundary_data(phi, usub, d)
    # usub equals phi on the sphere, so the carried data is usub at the node
    assert_allclose(vals[d.boundary], sample(usub, d)[d.boundary], atol=1e-14)
    raw = sample(phi, d, project=True)
    assert np.abs(raw - vals)[d.boundary].max() > 1e-3


def test_ball_problem_subsolution_admissible():
    spec = load_problem(PROBLEMS / "ball_ma.json", resolution=13)
    assert check_admissible(spec.usub, spec).admissible
    assert check_subsolution(spec).is_subsolution


def test_spec_validation_errors():
    d = Domain.box(1, 5)
    u = Radial([0, 1])
    with pytest.raises(ValidationError, match="psi"):
        problem_from_families(d, 1, Constant(-1.0), u, u)
    with pytest.raises(ValidationError, match="boundary"):
        problem_from_families(d, 1, Constant(1.0), u, Radial([1, 1]))
    with pytest.raises(ValidationError, match="alpha"):
        problem_from_families(d, 2, Constant(1.0), u, u)


def test_with_phi_scaled_drops_exact():
    spec = load_problem(PROBLEMS / "box_manufactured.json", resolution=5)
    s = spec.with_phi_scaled(2.0)
    assert s.exact is None
    assert_allclose(s.phi, 2 * spec.phi)
    assert_allclose(s.usub_hessian, 2 * spec.usub_hessian)
    assert spec.exact is not None


def test_admissibility_detects_concave_function():
    d = Domain.box(2, 5)
    spec = manufacture_solution(Radial([0, 1]), d, 2)
    rep = check_admissible(-sample(Radial([0, 1]), d), spec)
    assert not rep.admissible and rep.margin < 0


def test_cone_membership_with_flat_witness():
    d = Domain.box(2, 5)
    spec = manufacture_solution(Radial([0, 1]), d, 1)
    rep = check_cone_membership(sample(Radial([0, 1]), d), spec)
    # S_{1;i}(1,1) - psi/2 * S_{0;i} = 1 - 1/2
    assert rep.certified
    assert_allclose(rep.min_slack, 0.5, atol=1e-12)
    bad = check_cone_membership(-sample(Radial([0, 1]), d), spec)
    assert not bad.certified


def test_problem_file_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"n": 2,\n "alpha": 1,\n oops}')
    with pytest.raises(ProblemFileError, match="line 3"):
        load_problem(p)
    doc = json.loads((PROBLEMS / "box_manufactured.json").read_text())
    del doc["usub"]
    with pytest.raises(ProblemFileError) as info:
        problem_from_dict(doc)
    assert info.value.field == "usub"
    doc = json.loads((PROBLEMS / "box_manufactured.json").read_text())
    del doc["exact"]
    with pytest.raises(ProblemFileError, match="exact"):
        problem_from_dict(doc)
    with pytest.raises(ProblemFileError):
        load_problem(tmp_path / "missing.json")


def test_shipped_problems_load():
    for name in ("ball_ma", "box_manufactured", "box_sine", "torus_identity"):
        spec = load_problem(PROBLEMS / f"{name}.json", resolution=7)
        assert spec.domain.resolution == 7
        assert check_admissible(spec.usub, spec).admissible


def test_family_hessian_matches_stencil_on_quadratic():
    d = Domain.box(2, 7)
    fam = Quadratic(np.array([[1.0, 0.2j], [-0.2j, 2.0]]), np.eye(2) * 0.3)
    h = complex_hessian(sample(fam, d), d)
    assert_allclose(h[d.interior], fam.hessian(d.coords())[d.interior], atol=1e-12)


def test_load_checks_memory_before_sampling(monkeypatch):
    from hessquot import solver
    from hessquot.errors import ResourceError

    monkeypatch.setattr(solver, "available_memory", lambda: 1024)
    with pytest.raises(ResourceError, match="GiB"):
        load_problem(PROBLEMS / "box_manufactured.json", resolution=5)
    spec = load_problem(PROBLEMS / "box_manufactured.json", resolution=5, check_memory=False)
    assert spec.domain.resolution == 5

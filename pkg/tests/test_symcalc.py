from itertools import combinations
from math import comb, prod

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hessquot import symcalc
from hessquot.errors import AdmissibilityError, DomainError
from conftest import random_hermitian, random_hermitian_pd


def enum_esym(lam, k):
    return sum(prod(c) for c in combinations(lam, k)) if k else 1.0


positive = st.lists(st.floats(0.05, 20.0), min_size=1, max_size=7)


def test_elementary_symmetric_examples():
    assert symcalc.elementary_symmetric([1, 1, 1], 2) == 3
    assert symcalc.elementary_symmetric([1, 2, 3], 3) == enum_esym([1, 2, 3], 3) == 6
    assert symcalc.elementary_symmetric([2, 5], 0) == 1


def test_elementary_symmetric_rejects_bad_k():
    with pytest.raises(DomainError):
        symcalc.elementary_symmetric([1.0, 2.0], 3)
    with pytest.raises(DomainError):
        symcalc.elementary_symmetric([1.0, 2.0], -1)


def test_sym_deleted_examples():
    # indices are zero-based
    assert symcalc.sym_deleted([1, 2, 3], 2, [0]) == 6
    assert symcalc.sym_deleted([1, 2, 3], 1, [1, 2]) == 1
    assert symcalc.sym_deleted([4, 7], 0, [0]) == 1


def test_sym_deleted_errors():
    with pytest.raises(DomainError):
        symcalc.sym_deleted([1, 2, 3], 1, [1, 1])
    with pytest.raises(DomainError):
        symcalc.sym_deleted([1, 2, 3], 1, [5])
    with pytest.raises(DomainError):
        symcalc.sym_deleted([1, 2, 3], 1, [0, 1, 2])


@settings(max_examples=200, deadline=None)
@given(lam=st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_esym_matches_enumeration(lam):
    s = symcalc.esym_all(np.array(lam))
    for k in range(len(lam) + 1):
        ref = enum_esym(lam, k)
        assert abs(s[k] - ref) <= 1e-10 * max(1.0, symcalc.problem_scale(lam))


def test_backends_agree_with_oracle(backend, rng):
    lam = rng.uniform(-2, 3, size=(50, 5))
    s = backend.esym(lam)
    s1 = backend.esym_deleted(lam)
    s2 = backend.esym_deleted2(lam)
    for r in range(0, 50, 7):
        for k in range(6):
            assert_allclose(s[r, k], enum_esym(lam[r], k), rtol=1e-12, atol=1e-12)
            for i in range(5):
                rest = np.delete(lam[r], i)
                assert_allclose(s1[r, i, k], enum_esym(rest, k), rtol=1e-12, atol=1e-12)
                for j in range(5):
                    rest2 = np.delete(lam[r], sorted({i, j}))
                    assert_allclose(s2[r, i, j, k], enum_esym(rest2, k), rtol=1e-12, atol=1e-12)


def test_backend_quotient_grad_agree(rng):
    from hessquot import kernels

    mods = kernels.available_backends()
    lam = rng.uniform(0.1, 4, size=(200, 4))
    for alpha in range(1, 5):
        outs = [m.quotient_grad(lam, alpha) for m in mods.values()]
        for f, df in outs[1:]:
            assert_allclose(f, outs[0][0], rtol=1e-14)
            assert_allclose(df, outs[0][1], rtol=1e-13)


def test_deleted_recurrence_exact_on_integers():
    lam = np.array([3.0, -1.0, 2.0, 5.0, 1.0])
    s = symcalc.esym_all(lam)
    s1 = symcalc.esym_deleted_all(lam)
    for i in range(5):
        for k in range(1, 6):
            assert s1[i, k] == s[k] - lam[i] * s1[i, k - 1]


@settings(max_examples=100, deadline=None)
@given(lam=positive)
def test_deleted_recurrence_float(lam):
    lam = np.array(lam)
    s = symcalc.esym_all(lam)
    s1 = symcalc.esym_deleted_all(lam)
    for i in range(lam.size):
        for k in range(1, lam.size + 1):
            assert abs(s1[i, k] - (s[k] - lam[i] * s1[i, k - 1])) <= 1e-12 * max(1.0, abs(s[k]))


def test_deleted2_symmetric_and_diagonal_convention(rng):
    lam = rng.uniform(0.1, 2, 5)
    s1 = symcalc.esym_deleted_all(lam)
    s2 = symcalc.esym_deleted2_all(lam)
    assert_allclose(s2, np.swapaxes(s2, 0, 1))
    for i in range(5):
        assert_allclose(s2[i, i], s1[i])


def test_quotient_F_examples():
    assert_allclose(symcalc.quotient_F(np.eye(3), np.eye(3), 2), (1 / 3) ** 0.5, rtol=1e-14)
    assert_allclose(symcalc.quotient_F(np.diag([2.0, 3.0]), np.eye(2), 2), 6**0.5, rtol=1e-14)
    # monomial oracle for a generic spectrum
    lam = [0.7, 1.3, 2.2, 0.4]
    for alpha in range(1, 5):
        ref = (enum_esym(lam, 4) / enum_esym(lam, 4 - alpha)) ** (1 / alpha)
        assert_allclose(symcalc.quotient_F(np.diag(lam), None, alpha), ref, rtol=1e-13)


def test_quotient_F_generalized_eigenvalues(rng):
    a = random_hermitian_pd(rng, 3)
    g = random_hermitian_pd(rng, 3)
    lam = np.linalg.eigvals(np.linalg.solve(g, a)).real
    ref = (enum_esym(lam, 3) / enum_esym(lam, 1)) ** 0.5
    assert_allclose(symcalc.quotient_F(a, g, 2), ref, rtol=1e-12)


def test_quotient_F_rejects_inadmissible():
    with pytest.raises(AdmissibilityError) as info:
        symcalc.quotient_F(np.diag([1.0, -0.5]), None, 1)
    assert info.value.min_eigenvalue == pytest.approx(-0.5)
    with pytest.raises(DomainError):
        symcalc.quotient_F(np.eye(2), None, 3)


def test_dual_form_of_F(rng):
    for n in range(2, 6):
        for alpha in range(1, n + 1):
            lam = rng.uniform(0.2, 3, n)
            f = symcalc.quotient_F(np.diag(lam), None, alpha)
            # C / psi = S_alpha(1/lam) with psi = C F^alpha
            assert_allclose(f ** (-alpha), symcalc.elementary_symmetric(1 / lam, alpha), rtol=1e-12)


def test_homogeneity(rng):
    for _ in range(200):
        n = rng.integers(2, 7)
        alpha = rng.integers(1, n + 1)
        a = random_hermitian_pd(rng, n, 0.1, 5)
        t = rng.uniform(1e-3, 10)
        f = symcalc.quotient_F(a, None, alpha)
        assert abs(symcalc.quotient_F(t * a, None, alpha) - t * f) <= 1e-12 * t * f


def test_segment_concavity(rng):
    for _ in range(300):
        n = rng.integers(2, 7)
        alpha = rng.integers(1, n + 1)
        g = random_hermitian_pd(rng, n)
        a, b = random_hermitian_pd(rng, n, 0.1, 5, size=2)
        th = rng.uniform()
        fa, fb = symcalc.quotient_F(a, g, alpha), symcalc.quotient_F(b, g, alpha)
        mid = symcalc.quotient_F(th * a + (1 - th) * b, g, alpha)
        assert mid >= th * fa + (1 - th) * fb - 1e-10 * max(fa, fb)


def test_gradient_isotropic_at_identity():
    for n in range(2, 6):
        for alpha in range(1, n + 1):
            grad = symcalc.quotient_F_gradient(np.eye(n), np.eye(n), alpha)
            c = symcalc.quotient_F(np.eye(n), None, alpha) / n
            assert_allclose(grad, c * np.eye(n), atol=1e-14)
            # finite-difference value of c along the identity direction
            e = 1e-6
            fd = (symcalc.quotient_F((1 + e) * np.eye(n), None, alpha) - symcalc.quotient_F((1 - e) * np.eye(n), None, alpha)) / (2 * e)
            assert_allclose(n * c, fd, rtol=1e-8)


def _fd_directional(a, g, alpha, h, step=1e-5):
    return (symcalc.quotient_F(a + step * h, g, alpha) - symcalc.quotient_F(a - step * h, g, alpha)) / (2 * step)


def test_gradient_matches_finite_differences(rng):
    for _ in range(200):
        n = rng.integers(2, 6)
        alpha = rng.integers(1, n + 1)
        a = random_hermitian_pd(rng, n)
        g = random_hermitian_pd(rng, n)
        h = random_hermitian(rng, n)
        grad = symcalc.quotient_F_gradient(a, g, alpha)
        pair = np.sum(grad * h).real
        assert abs(pair - _fd_directional(a, g, alpha, h)) <= 1e-6 * max(1.0, abs(pair))


def test_gradient_positive_definite_and_hermitian(rng):
    a = random_hermitian_pd(rng, 4, 0.05, 8, size=1000)
    g = random_hermitian_pd(rng, 4, size=1000)
    for alpha in (1, 2, 4):
        _, grad, _ = symcalc.quotient_field(a, g, alpha)
        assert_allclose(grad, np.conj(np.swapaxes(grad, -1, -2)), atol=1e-12)
        assert np.linalg.eigvalsh(grad)[:, 0].min() > 0


def test_gradient_dual_route_agrees(rng):
    for _ in range(50):
        n = rng.integers(2, 6)
        alpha = rng.integers(1, n + 1)
        a = random_hermitian_pd(rng, n)
        g = random_hermitian_pd(rng, n)
        assert_allclose(
            symcalc.quotient_F_gradient_dual(a, g, alpha), symcalc.quotient_F_gradient(a, g, alpha), rtol=1e-10, atol=1e-12
        )


def test_gradient_near_degenerate_spectrum(rng):
    # clustered eigenvalues: spectral gradient still matches differences
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    lam = np.array([1.0, 1.0 + 1e-11, 2.0, 2.0])
    a = (q * lam) @ q.conj().T
    h = random_hermitian(rng, 4)
    for alpha in (1, 3):
        pair = np.sum(symcalc.quotient_F_gradient(a, None, alpha) * h).real
        assert abs(pair - _fd_directional(a, None, alpha, h)) <= 1e-6 * max(1.0, abs(pair))


def test_second_derivative_matches_finite_differences(rng):
    for _ in range(60):
        n = rng.integers(2, 5)
        alpha = rng.integers(1, n + 1)
        a = random_hermitian_pd(rng, n)
        g = random_hermitian_pd(rng, n)
        h = random_hermitian(rng, n)
        d2 = symcalc.quotient_F_second_derivative(a, g, alpha, h)
        e = 1e-4
        fd = (symcalc.quotient_F(a + e * h, g, alpha) - 2 * symcalc.quotient_F(a, g, alpha) + symcalc.quotient_F(a - e * h, g, alpha)) / e**2
        assert abs(d2 - fd) <= 1e-4 * max(1.0, abs(d2))
        assert d2 <= 1e-12


def test_second_derivative_degenerate_rule(rng):
    # at a repeated eigenvalue the midpoint rule must give the same value as a tiny split
    lam = np.array([1.5, 1.5, 0.7])
    h = random_hermitian(rng, 3)
    exact = symcalc.quotient_F_second_derivative(np.diag(lam), None, 2, h)
    split = symcalc.quotient_F_second_derivative(np.diag(lam + [0, 1e-5, 0]), None, 2, h)
    assert_allclose(exact, split, rtol=1e-4)


@settings(max_examples=200, deadline=None)
@given(lam=positive, data=st.data())
def test_duality_identity(lam, data):
    lam = np.array(lam)
    alpha = data.draw(st.integers(1, lam.size))
    assert_allclose(symcalc.duality_product(lam, alpha), 1.0, rtol=1e-12)


def test_glz_hand_example():
    gap, middle = symcalc.glz_inequality_gap([1.0, 1.0], [1.0, 1.0], 2)
    # lhs = (1 + 1) + (1 + 1) = 4, middle = |1 + 1|^2 / 1 = 4
    assert gap == pytest.approx(0.0, abs=1e-15)
    assert middle == pytest.approx(4.0)


def test_glz_unit_lambda_middle(rng):
    for n in range(2, 6):
        for alpha in range(2, n + 1):
            xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            _, middle = symcalc.glz_inequality_gap(np.ones(n), xi, alpha)
            ref = comb(n - 1, alpha - 1) ** 2 / comb(n, alpha) * abs(xi.sum()) ** 2
            assert_allclose(middle, ref, rtol=1e-12)


def test_glz_random_sweep(rng):
    for n in range(2, 7):
        for alpha in range(2, n + 1):
            lam = rng.uniform(0.01, 10, (400, n))
            xi = rng.standard_normal((400, n)) + 1j * rng.standard_normal((400, n))
            lhs, middle = symcalc.glz_terms(lam, xi, alpha)
            tol = 1e-10 * symcalc.glz_scale(lam, xi)
            assert np.all(lhs - middle >= -tol)
            assert np.all(middle >= -tol)


def test_glz_rejects_nonpositive_lambda():
    with pytest.raises(DomainError):
        symcalc.glz_inequality_gap([1.0, 0.0], [1.0, 1.0], 2)
    with pytest.raises(DomainError):
        symcalc.glz_inequality_gap([1.0, 1.0], [1.0, 1.0], 1)


def test_c2_consequence_nonnegative(rng):
    for n in range(2, 6):
        for alpha in range(2, n + 1):
            gd = rng.uniform(0.1, 5, (300, n))
            dg = rng.standard_normal((300, n, n)) + 1j * rng.standard_normal((300, n, n))
            val = symcalc.c2_consequence(gd, dg, alpha)
            lam = 1 / gd
            scale = np.maximum(1, lam.max(-1)) ** n * np.maximum(1, (lam.max(-1) ** 2 * np.abs(dg).max((-1, -2))) ** 2) * np.maximum(1, gd.max(-1))
            assert np.all(val >= -1e-10 * scale)


def test_first_derivative_residual_constant():
    assert symcalc.equation_first_derivative_residual([1.0, 2.0], [0, 0], 0.0, 1) == 0


def test_first_derivative_residual_hand_family():
    # g(s) = diag(1 + s, 1), alpha = 1: 1/psi = (1/(1+s) + 1) / 2
    for s in (0.0, 0.3, 1.7):
        dpsi_inv = -1.0 / (2 * (1 + s) ** 2)
        res = symcalc.equation_first_derivative_residual([1 + s, 1.0], [1.0, 0.0], dpsi_inv, 1)
        assert abs(res) < 1e-15


def test_first_derivative_residual_random_family(rng):
    for _ in range(30):
        n = rng.integers(2, 6)
        alpha = rng.integers(1, n + 1)
        base = rng.uniform(0.5, 2, n)
        vel = rng.standard_normal(n)
        gd = lambda s: base * np.exp(vel * s)
        psi_inv = lambda s: symcalc.elementary_symmetric(1 / gd(s), alpha) / comb(n, alpha)
        e = 1e-5
        dpsi = (psi_inv(e) - psi_inv(-e)) / (2 * e)
        res = symcalc.equation_first_derivative_residual(gd(0), base * vel, dpsi, alpha)
        assert abs(res) < 1e-6


def test_first_derivative_residual_dimension_mismatch():
    with pytest.raises(DomainError):
        symcalc.equation_first_derivative_residual([1.0, 2.0], [1.0], 0.0, 1)


def test_eigen_spectrum_invariants(rng):
    a = random_hermitian(rng, 5)
    s = symcalc.generalized_eigh(a)
    assert np.all(np.diff(s.lam) >= 0)
    assert_allclose(s.basis.conj().T @ s.basis, np.eye(5), atol=1e-12)
    assert_allclose(s.reconstruct(), a, atol=1e-12 * np.abs(a).max())

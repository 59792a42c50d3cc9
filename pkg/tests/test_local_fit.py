import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdd import (
    KernelSpec,
    SingularSupport,
    WeakInstrument,
    local_iv_fit,
    local_poly_fit,
    residualize,
    scaled_basis,
    sided_weights,
)

TRIANGLE = KernelSpec("triangle")
WINDOW = KernelSpec("window")


def _setup(d, cutoff, h, side, kernel=WINDOW, degree=1):
    d = np.asarray(d, dtype=float)
    return (
        sided_weights(d, cutoff, h, side, kernel),
        scaled_basis(d, cutoff, h, degree),
    )


def test_degree_one_exactness():
    d = np.array([0.05, 0.2, 0.33, 0.41, 0.6])
    h = 0.8
    s = 2.0 + 3.0 * d  # cutoff at 0, so s = 2 + 3(d - cutoff)
    w, basis = _setup(d, 0.0, h, "right", TRIANGLE)
    fit = local_poly_fit(s, w, basis)
    assert_allclose(fit.intercept, 2.0, rtol=1e-12)
    assert_allclose(fit.coef_scaled[1], 3.0 * h, rtol=1e-12)


def test_constant_fit():
    d = np.array([0.1, 0.3, 0.5, 0.9])
    for kernel in (WINDOW, TRIANGLE, KernelSpec("gaussian")):
        w, basis = _setup(d, 0.0, 1.0, "right", kernel)
        fit = local_poly_fit(np.full(4, 5.0), w, basis)
        assert_allclose(fit.coef_scaled, [5.0, 0.0], atol=1e-12)


def test_five_point_oracle():
    # Window kernel, h=1, right side: weights are all 1, so the fit solves the
    # plain normal equations. Expected values computed from the explicit
    # 2x2 solve (exact rationals): intercept -1/10, scaled slope 9.
    d = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    s = np.array([1.0, 2.0, 2.0, 3.0, 5.0])
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    fit = local_poly_fit(s, w, basis)
    assert_allclose(fit.coef_scaled, [-0.1, 9.0], rtol=1e-12, atol=1e-12)
    # independent oracle, recomputed here from raw normal equations
    R = np.column_stack([np.ones(5), d])
    oracle = np.linalg.inv(R.T @ R) @ (R.T @ s)
    assert_allclose(fit.coef_scaled, oracle, rtol=1e-12)


def test_five_point_residuals_oracle():
    d = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    s = np.array([1.0, 2.0, 2.0, 3.0, 5.0])
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    resid = residualize(s, w, basis)
    assert_allclose(resid, [0.2, 0.3, -0.6, -0.5, 0.6], rtol=1e-12, atol=1e-12)


def test_residualize_linear_and_constant_are_zero():
    d = np.linspace(0.01, 0.9, 15)
    w, basis = _setup(d, 0.0, 1.0, "right", TRIANGLE)
    assert_allclose(residualize(1.5 - 2.0 * d, w, basis), 0.0, atol=1e-12)
    assert_allclose(residualize(np.full(15, 3.3), w, basis), 0.0, atol=1e-12)


def test_residualize_zero_weight_entries_flagged_zero():
    d = np.array([-0.5, -0.2, 0.1, 0.2, 0.3])
    s = np.array([10.0, -3.0, 1.0, 4.0, 2.0])
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    resid = residualize(s, w, basis)
    assert resid[0] == 0.0 and resid[1] == 0.0
    assert not w.positive[0] and not w.positive[1]


def test_weighted_residual_orthogonality(rng):
    for trial in range(20):
        d = rng.uniform(-1.0, 1.0, 80)
        s = rng.standard_normal(80)
        side = "left" if trial % 2 else "right"
        kernel = (WINDOW, TRIANGLE, KernelSpec("gaussian"))[trial % 3]
        w, basis = _setup(d, 0.0, rng.uniform(0.3, 1.0), side, kernel)
        resid = residualize(s, w, basis)
        moments = (basis.rows * w.weights[:, None]).T @ resid
        scale = max(1.0, float(np.abs(s).max()))
        assert np.all(np.abs(moments) < 1e-10 * scale)


def test_gram_is_spd_and_reported():
    d = np.linspace(0.05, 1.0, 12)
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    fit = local_poly_fit(d * 2.0, w, basis)
    eigenvalues = np.linalg.eigvalsh(fit.gram)
    assert np.all(eigenvalues > 0.0)
    expected = (basis.rows * w.weights[:, None]).T @ basis.rows / (12 * 1.0)
    assert_allclose(fit.gram, expected, rtol=1e-12)
    assert 0.0 < fit.gram_rcond <= 1.0
    assert fit.n_effective == 12


def test_singular_support_too_few_points():
    d = np.array([0.2, 0.2, 0.2, -0.4])
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    with pytest.raises(SingularSupport):
        local_poly_fit(np.ones(4), w, basis)


def test_singular_support_quadratic_needs_three():
    d = np.array([0.1, 0.1, 0.4, 0.4])
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW, degree=2)
    with pytest.raises(SingularSupport):
        local_poly_fit(np.ones(4), w, basis)


def test_iv_equals_joint_ols_when_instrument_is_regressor(rng):
    n = 60
    d = rng.uniform(0.0, 1.0, n)
    W = rng.standard_normal((n, 2))
    y = rng.standard_normal(n)
    w, basis = _setup(d, 0.0, 1.0, "right", TRIANGLE)
    fit = local_iv_fit(y, W, W, w, basis)
    X = np.column_stack([basis.rows, W])
    Xw = X * w.weights[:, None]
    ols = np.linalg.solve(Xw.T @ X, Xw.T @ y)
    assert_allclose([fit.alpha0, fit.alpha1_scaled], ols[:2], rtol=1e-10)
    assert_allclose(fit.gamma, ols[2:], rtol=1e-10)


def test_iv_exact_on_noiseless_partially_linear_data(rng):
    n = 50
    d = rng.uniform(0.0, 1.0, n)
    h = 0.9
    W = rng.standard_normal(n)
    Z = W + 0.3 * rng.standard_normal(n)  # correlated instrument
    y = 1.0 + 2.0 * d + 3.0 * W
    w, basis = _setup(d, 0.0, h, "right", TRIANGLE)
    fit = local_iv_fit(y, W[:, None], Z[:, None], w, basis)
    assert_allclose(fit.alpha0, 1.0, rtol=1e-9)
    assert_allclose(fit.alpha1_scaled, 2.0 * h, rtol=1e-9)
    assert_allclose(fit.gamma, [3.0], rtol=1e-9)


def test_six_point_iv_oracle():
    # Window kernel, h=1: the 3x3 stacked system solved exactly (rationals
    # 530834/701945, 64894/140389, 145890/140389).
    d = np.array([0.05, 0.15, 0.3, 0.45, 0.6, 0.8])
    y = np.array([1.2, 0.7, 1.9, 2.4, 1.1, 3.0])
    W = np.array([0.5, -0.2, 0.9, 1.4, 0.1, 1.8])[:, None]
    Z = np.array([0.4, -0.1, 1.1, 1.2, 0.3, 1.5])[:, None]
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    fit = local_iv_fit(y, W, Z, w, basis)
    assert_allclose(fit.alpha0, 0.7562330382009986, rtol=1e-12)
    assert_allclose(fit.alpha1_scaled, 0.4622441929210978, rtol=1e-12)
    assert_allclose(fit.gamma, [1.039183981650984], rtol=1e-12)


def test_iv_solves_first_order_condition(rng):
    n = 80
    d = rng.uniform(-1.0, 1.0, n)
    W = rng.standard_normal((n, 2))
    Z = W + 0.5 * rng.standard_normal((n, 2))
    y = rng.standard_normal(n)
    w, basis = _setup(d, 0.0, 0.8, "left", TRIANGLE)
    fit = local_iv_fit(y, W, Z, w, basis)
    nu = np.concatenate([[fit.alpha0, fit.alpha1_scaled], fit.gamma])
    resid = y - basis.rows @ nu[:2] - W @ nu[2:]
    stacked = np.column_stack([basis.rows, Z])
    moments = (stacked * w.weights[:, None]).T @ resid
    assert np.all(np.abs(moments) < 1e-9)


def test_gamma_block_matches_residualized_formula(rng):
    for _ in range(25):
        n = 120
        d = rng.uniform(-1.0, 1.0, n)
        factors = rng.standard_normal((n, 2))
        W = factors + 0.3 * rng.standard_normal((n, 2))
        Z = factors + 0.3 * rng.standard_normal((n, 2))
        y = rng.standard_normal(n) + factors.sum(axis=1)
        h = rng.uniform(0.5, 1.2)
        w, basis = _setup(d, 0.0, h, "left", TRIANGLE)
        fit = local_iv_fit(y, W, Z, w, basis)
        W_perp = np.column_stack(
            [residualize(W[:, j], w, basis) for j in range(2)]
        )
        y_perp = residualize(y, w, basis)
        lhs = (Z * w.weights[:, None]).T @ W_perp
        rhs = (Z * w.weights[:, None]).T @ y_perp
        oracle = np.linalg.solve(lhs, rhs)
        assert_allclose(fit.gamma, oracle, rtol=1e-10, atol=1e-12)


def test_weak_instrument_detected():
    # A placebo outcome that is an exact linear function of d leaves nothing
    # after residualisation, so the instrumented cross-moment is singular.
    d = np.linspace(0.05, 1.0, 30)
    W = (2.0 * d)[:, None]
    Z = np.linspace(-1.0, 1.0, 30)[:, None]
    y = np.ones(30)
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    with pytest.raises(WeakInstrument):
        local_iv_fit(y, W, Z, w, basis)


def test_iv_needs_enough_support():
    d = np.array([0.1, 0.2, -0.5, -0.6])
    w, basis = _setup(d, 0.0, 1.0, "right", WINDOW)
    with pytest.raises(SingularSupport):
        local_iv_fit(np.ones(4), np.ones((4, 1)), np.ones((4, 1)), w, basis)


def test_kernel_scaling_leaves_fit_invariant(rng):
    from dataclasses import replace

    d = rng.uniform(0.0, 1.0, 40)
    s = rng.standard_normal(40)
    w, basis = _setup(d, 0.0, 0.7, "right", TRIANGLE)
    scaled = replace(w, weights=w.weights * 7.5)
    base = local_poly_fit(s, w, basis)
    other = local_poly_fit(s, scaled, basis)
    assert_allclose(base.coef_scaled, other.coef_scaled, rtol=1e-12)

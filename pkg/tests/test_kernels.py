import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdd import KernelSpec, SingularSupport, kernel_value, scaled_basis, sided_weights


def test_closed_forms():
    assert kernel_value(KernelSpec("triangle"), 0.0) == 1.0
    assert kernel_value(KernelSpec("window"), 0.5) == 1.0
    assert kernel_value(KernelSpec("triangle"), 2.0) == 0.0
    assert kernel_value(KernelSpec("window"), 1.0) == 1.0
    assert kernel_value(KernelSpec("window"), 1.0 + 1e-12) == 0.0
    assert_allclose(
        kernel_value(KernelSpec("gaussian"), 0.0), 1.0 / np.sqrt(2.0 * np.pi)
    )
    assert_allclose(
        kernel_value(KernelSpec("gaussian", scale=4.0), 2.0),
        np.exp(-0.5) / np.sqrt(8.0 * np.pi),
    )


def test_kernel_nonnegative_and_support():
    u = np.linspace(0.0, 5.0, 101)
    for kind in ("window", "triangle", "gaussian"):
        values = kernel_value(KernelSpec(kind), u)
        assert np.all(values >= 0.0)
        if kind != "gaussian":
            assert np.all(values[u > 1.0] == 0.0)
        else:
            assert np.all(values > 0.0)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        kernel_value(KernelSpec("triangle"), -0.1)
    with pytest.raises(ValueError):
        kernel_value(KernelSpec("window"), np.array([0.2, -0.3]))


def test_bad_spec_rejected():
    with pytest.raises(ValueError):
        KernelSpec("epanechnikov")
    with pytest.raises(ValueError):
        KernelSpec("gaussian", scale=0.0)


def test_cutoff_point_is_right_side():
    d = np.array([2.0])
    right = sided_weights(d, 2.0, 1.0, "right", KernelSpec("triangle"))
    left = sided_weights(d, 2.0, 1.0, "left", KernelSpec("triangle"))
    assert_allclose(right.weights, [1.0])
    assert_allclose(left.weights, [0.0])
    assert right.n_positive == 1 and left.n_positive == 0


def test_two_point_triangle_weights():
    d = np.array([-0.5, 0.5])
    w = sided_weights(d, 0.0, 1.0, "right", KernelSpec("triangle"))
    assert_allclose(w.weights, [0.0, 0.5])


def test_weight_formula_matches_definition(rng):
    d = rng.normal(size=60)
    h = 0.7
    for side in ("left", "right"):
        for kind in ("window", "triangle", "gaussian"):
            kernel = KernelSpec(kind)
            w = sided_weights(d, 0.1, h, side, kernel)
            on_side = d >= 0.1 if side == "right" else d < 0.1
            expected = np.where(
                on_side, kernel_value(kernel, np.abs(d - 0.1) / h) / h, 0.0
            )
            assert_allclose(w.weights, expected)
            assert np.all(w.weights[~on_side] == 0.0)


def test_window_large_bandwidth_reduces_to_side_indicator(rng):
    d = rng.uniform(-1.0, 1.0, 40)
    h = 10.0
    w = sided_weights(d, 0.0, h, "right", KernelSpec("window"))
    assert_allclose(w.weights, (d >= 0.0) / h)


def test_effective_support_counts_gaussian():
    d = np.array([0.1, 0.2, 500.0])
    w = sided_weights(d, 0.0, 1.0, "right", KernelSpec("gaussian"))
    # the far point underflows to zero weight relative to the near ones
    assert w.n_positive >= 2
    assert w.n_effective == 2


def test_min_positive_raises():
    d = np.array([-1.0, -2.0, 1.0])
    with pytest.raises(SingularSupport):
        sided_weights(d, 0.0, 0.5, "right", KernelSpec("triangle"), min_positive=2)


def test_basis_rows_and_scaling():
    d = np.array([0.0, 0.5, 2.0])
    basis = scaled_basis(d, 0.5, 2.0, degree=2)
    u = (d - 0.5) / 2.0
    assert_allclose(basis.rows[:, 0], 1.0)
    assert_allclose(basis.rows[:, 1], u)
    assert_allclose(basis.rows[:, 2], u**2)
    assert_allclose(basis.scaling, np.diag([1.0, 2.0, 4.0]))
    with pytest.raises(ValueError):
        scaled_basis(d, 0.5, 2.0, degree=3)
    with pytest.raises(ValueError):
        scaled_basis(d, 0.5, 0.0, degree=1)

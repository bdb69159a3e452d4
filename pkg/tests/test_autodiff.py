import numpy as np
import pytest

from sftkit import autodiff as ad
from sftkit import eigen3
from sftkit.autodiff import (
    AutodiffUsageError,
    NonFiniteGradientError,
    Var,
    backward,
    det3x3,
    evaluate_with_gradients,
    finite_difference_check,
    gather_rows,
    sym_eigvals3x3,
)


def test_square_gradient():
    _, (g,) = evaluate_with_gradients(lambda x: x * x, [np.array(3.0)])
    assert g == pytest.approx(6.0)


def test_relu_inactive():
    _, (g,) = evaluate_with_gradients(lambda x: ad.relu(x), [np.array(-1.0)])
    assert g == 0.0


def test_abs_subgradient_zero_at_zero():
    _, (g,) = evaluate_with_gradients(lambda x: ad.abs_(x), [np.array(0.0)])
    assert g == 0.0


def test_det_gradient_is_cofactor(rng):
    c = rng.standard_normal((3, 3))
    _, (g,) = evaluate_with_gradients(lambda x: det3x3(x), [c])
    # d(det)/dC = adj(C)^T, entrywise the cofactor matrix.
    assert np.allclose(g, eigen3.cofactor3(c), atol=1e-12)
    report = finite_difference_check(lambda x: det3x3(x), [c], h=1e-5, tol=1e-6)
    assert report.passed, str(report)


def test_quadratic_form_fd():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])

    def program(x):
        prod = ad.matmul(ad.reshape(x, (1, 2)), ad.constant(a))
        return ad.sum_(prod * ad.reshape(x, (1, 2)))

    report = finite_difference_check(program, [np.array([0.3, -0.7])], h=1e-5, tol=1e-6)
    assert report.passed and report.max_rel_error < 1e-6


def test_eigenvalue_node_fd(rng):
    # dlam_k = v_k^T dC v_k on a random SPD matrix (distinct eigenvalues).
    # FD perturbs single entries, so symmetrize inside the program.
    m = rng.standard_normal((3, 3))
    spd = m @ m.T + 0.5 * np.eye(3)
    w = rng.standard_normal(3)

    def program(c):
        half = ad.custom(
            (c.value + c.value.T) * 0.5, (c,), lambda g: ((g + g.T) * 0.5,), "symmetrize"
        )
        lam = sym_eigvals3x3(ad.reshape(half, (1, 3, 3)))
        return ad.sum_(lam * ad.constant(w[None, :]))

    report = finite_difference_check(program, [spd], h=1e-6, tol=1e-4)
    assert report.passed, str(report)


def test_zero_function_passes():
    report = finite_difference_check(lambda x: ad.sum_(x * 0.0), [np.ones(4)], h=1e-5, tol=1e-6)
    assert report.passed
    assert report.max_rel_error == 0.0


def test_linearity_of_gradients(rng):
    x0 = rng.standard_normal(5)
    a, b = 2.3, -1.7

    def f(x):
        return ad.sum_(x * x)

    def g(x):
        return ad.sum_(ad.abs_(x))

    _, (gf,) = evaluate_with_gradients(f, [x0])
    _, (gg,) = evaluate_with_gradients(g, [x0])
    _, (gc,) = evaluate_with_gradients(lambda x: f(x) * a + g(x) * b, [x0])
    assert np.allclose(gc, a * gf + b * gg, atol=1e-10)


def test_accumulation_on_reuse():
    _, (g,) = evaluate_with_gradients(lambda x: x + x, [np.array(1.5)])
    assert g == pytest.approx(2.0)


@pytest.mark.parametrize(
    "name,program",
    [
        ("add", lambda x: ad.sum_(x + x * 0.5)),
        ("mul", lambda x: ad.sum_(x * (x + 1.0))),
        ("abs", lambda x: ad.sum_(ad.abs_(x))),
        ("exp", lambda x: ad.sum_(ad.exp(x))),
        ("relu", lambda x: ad.sum_(ad.relu(x))),
        ("sqrt", lambda x: ad.sum_(ad.sqrt(x * x + 1.0))),
        ("mean", lambda x: ad.mean_(x * x)),
        ("reshape", lambda x: ad.sum_(ad.reshape(x, (2, 3)) * 2.0)),
        ("stack", lambda x: ad.sum_(ad.stack_last([x, x * 2.0]))),
    ],
)
def test_primitive_fd(name, program, rng):
    # Seed away from relu/abs kinks: |x| >= 0.3 >> 10*h.
    x = rng.uniform(0.3, 1.2, size=6) * rng.choice([-1.0, 1.0], size=6)
    report = finite_difference_check(program, [x], h=1e-6, tol=1e-4)
    assert report.passed, f"{name}: {report}"


def test_matmul_fd(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    w = rng.standard_normal((3, 2))
    report = finite_difference_check(
        lambda x, y: ad.sum_(ad.matmul(x, y) * ad.constant(w)),
        [a, b],
        h=1e-6,
        tol=1e-4,
    )
    assert report.passed


def test_gather_rows_fd(rng):
    x = rng.standard_normal((5, 3))
    idx = np.array([[0, 2], [4, 2]])
    w = rng.standard_normal((2, 2, 3))
    report = finite_difference_check(
        lambda v: ad.sum_(gather_rows(v, idx) * ad.constant(w)), [x], h=1e-6, tol=1e-4
    )
    assert report.passed


def test_covariance_node_fd(rng):
    d = rng.standard_normal((2, 4, 3))
    counts = np.array([4.0, 4.0])
    w = rng.standard_normal((2, 3, 3))
    report = finite_difference_check(
        lambda v: ad.sum_(ad.centered_covariance3(v, counts) * ad.constant(w)),
        [d],
        h=1e-6,
        tol=1e-4,
    )
    assert report.passed


def test_non_scalar_backward_rejected():
    x = Var(np.ones(3))
    with pytest.raises(AutodiffUsageError):
        backward(x * 2.0)


def test_non_finite_gradient_detected():
    x = Var(np.array(0.0))

    def bad_vjp(g):
        return (np.array(np.inf),)

    y = ad.custom(np.array(1.0), (x,), bad_vjp, "bad_node")
    with pytest.raises(NonFiniteGradientError, match="bad_node"):
        backward(y)


def test_grad_norm_dump(tmp_path):
    x = Var(np.arange(3.0))
    y = ad.sum_(x * x)
    out = tmp_path / "grads.csv"
    backward(y, dump_grad_norms=str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "node,shape,grad_norm"
    assert len(lines) > 1


def test_detached_constant_blocks_gradient():
    x = Var(np.array(2.0))
    w = ad.detach(x)
    y = ad.sum_(w * x)
    backward(y)
    assert x.grad == pytest.approx(2.0)  # only the direct path, not through w


def test_eigen_adjoint_degenerate_pair(rng):
    # Repeated eigenvalues: the symmetrized subspace adjoint must still give
    # a usable descent direction; check against FD of a symmetric function
    # (sum of the degenerate pair is differentiable even at the crossing).
    c = np.diag([2.0, 2.0, 1.0])

    def program(x):
        half = ad.custom((x.value + x.value.T) * 0.5, (x,), lambda g: ((g + g.T) * 0.5,), "symmetrize")
        lam = sym_eigvals3x3(ad.reshape(half, (1, 3, 3)))
        return ad.sum_(lam * ad.constant(np.array([[1.0, 1.0, 0.5]])))

    report = finite_difference_check(program, [c], h=1e-6, tol=1e-4)
    assert report.passed, str(report)

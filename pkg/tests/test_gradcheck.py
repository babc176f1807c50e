import numpy as np

from vtslip import gradcheck


def test_every_kind_passes_a_short_suite():
    results = gradcheck.random_suite(n_configs=24, seed=1)
    assert {r.kind for r in results} == set(gradcheck.KINDS)
    assert all(r.passed(1e-4) for r in results), [(r.kind, r.rel_error) for r in results if not r.passed()]


def test_detects_a_wrong_gradient():
    from vtslip.tensor import Tensor, tensor_sum

    def wrong_square(p):
        x = p["x"]
        # forward x^2 but backward claims 3x
        return tensor_sum(Tensor._from_op(x.data ** 2, (x,), lambda g: (g * 3 * x.data,)))

    err = gradcheck.check(wrong_square, {"x": np.array([1.0, -2.0, 0.5])})
    assert err > 0.1


def test_relative_error_edge_cases():
    assert gradcheck.relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert gradcheck.relative_error(np.ones(2), np.ones(2)) == 0.0

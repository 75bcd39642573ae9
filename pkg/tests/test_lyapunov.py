import numpy as np
import pytest

from roacert.dynamics import make_linear, make_reversed_vdp, make_scalar_cubic
from roacert.errors import DimensionError
from roacert.lyapunov import (
    GramCandidate,
    LieDerivative,
    PolyDictionary,
    eval_v,
    eval_vdot,
    grad_v,
    grad_vdot,
    load_candidate,
    make_poly_dictionary,
    save_candidate,
)


def central_diff(fun, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def random_pd(rng, p):
    A = rng.standard_normal((p, p))
    return A @ A.T + 0.5 * np.eye(p)


@pytest.mark.parametrize("n, degree, p", [(2, 1, 2), (2, 2, 5), (500, 1, 500), (3, 2, 9)])
def test_dictionary_size(n, degree, p):
    assert make_poly_dictionary(n, degree).size == p


def test_quartic_feature_order():
    d = make_poly_dictionary(2, 2)
    np.testing.assert_allclose(d.features(np.array([[2.0, 3.0]]))[0], [2, 3, 4, 6, 9])


def test_value_examples():
    assert eval_v(GramCandidate.quadratic(np.eye(2)), [3.0, 4.0]) == pytest.approx(25.0)
    assert eval_v(GramCandidate.quadratic(np.diag([2.0, 1.0])), [1.0, 1.0]) == pytest.approx(3.0)


def test_identity_gradient():
    np.testing.assert_allclose(grad_v(GramCandidate.quadratic(np.eye(2)), [1.0, 2.0]), [2.0, 4.0])


def test_vanishes_at_origin(rng):
    c = GramCandidate(make_poly_dictionary(2, 2), random_pd(rng, 5))
    assert eval_v(c, [0.0, 0.0]) == 0.0
    np.testing.assert_array_equal(grad_v(c, [0.0, 0.0]), [0.0, 0.0])
    assert eval_vdot(LieDerivative(c, make_reversed_vdp()), [0.0, 0.0]) == 0.0


def test_quartic_gradient_matches_finite_differences(rng):
    c = GramCandidate(make_poly_dictionary(2, 2), random_pd(rng, 5))
    for _ in range(10):
        x = rng.uniform(-2, 2, size=2)
        np.testing.assert_allclose(grad_v(c, x), central_diff(lambda z: eval_v(c, z), x), rtol=1e-5)


def test_lie_derivative_examples():
    lie = LieDerivative(GramCandidate.quadratic(np.eye(2)), make_linear(-np.eye(2)))
    assert eval_vdot(lie, [1.0, 1.0]) == pytest.approx(-4.0)
    np.testing.assert_allclose(grad_vdot(lie, [1.0, 0.0]), [-4.0, 0.0])
    cubic = LieDerivative(GramCandidate.quadratic(np.eye(1)), make_scalar_cubic())
    assert eval_vdot(cubic, [0.5]) == pytest.approx(-0.375)


def test_symmetric_linear_gradient(rng):
    A = rng.standard_normal((4, 4))
    M = -(A @ A.T) - np.eye(4)
    lie = LieDerivative(GramCandidate.quadratic(np.eye(4)), make_linear(M))
    x = np.eye(4)[0]
    np.testing.assert_allclose(grad_vdot(lie, x), 4 * M @ x)


def test_lie_gradient_matches_finite_differences(rng):
    lie = LieDerivative(GramCandidate(make_poly_dictionary(2, 2), random_pd(rng, 5)), make_reversed_vdp())
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, size=2)
        np.testing.assert_allclose(grad_vdot(lie, x), central_diff(lambda z: eval_vdot(lie, z), x), rtol=1e-4, atol=1e-7)


def test_linear_shortcut_matches_general_path(rng):
    M = rng.standard_normal((3, 3)) - 3 * np.eye(3)
    P = random_pd(rng, 3)
    fast = LieDerivative(GramCandidate.quadratic(P), make_linear(M))
    # same field without the LinearSystem type, so the generic path runs
    from roacert.dynamics import OdeSystem

    slow = LieDerivative(GramCandidate.quadratic(P), OdeSystem(3, lambda X: X @ M.T, lambda X: np.broadcast_to(M, (len(X), 3, 3))))
    X = rng.standard_normal((6, 3))
    np.testing.assert_allclose(fast.value(X), slow.value(X), rtol=1e-12)
    np.testing.assert_allclose(fast.gradient(X), slow.gradient(X), rtol=1e-10, atol=1e-12)


def test_gram_must_be_positive_definite():
    with pytest.raises(ValueError):
        GramCandidate.quadratic(np.diag([1.0, -1.0]))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        LieDerivative(GramCandidate.quadratic(np.eye(3)), make_reversed_vdp())
    with pytest.raises(DimensionError):
        GramCandidate(PolyDictionary(2, 2), np.eye(2))


def test_candidate_round_trip(tmp_path, rng):
    c = GramCandidate(make_poly_dictionary(2, 2), random_pd(rng, 5))
    save_candidate(c, tmp_path / "c.json")
    back = load_candidate(tmp_path / "c.json")
    assert back.gram.tobytes() == c.gram.tobytes()
    assert back.dictionary.degree == 2

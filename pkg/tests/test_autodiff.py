import numpy as np
import pytest

from speechcloak import autodiff as ad
from speechcloak.autodiff import (
    NonFiniteValueError,
    Tape,
    backward,
    grad_check,
    gradient_of,
)


def test_square_derivative_at_three():
    tape = Tape()
    x = tape.leaf(np.array(3.0))
    backward(ad.square(x))
    assert x.grad == 6.0


def test_mean_gradient_is_one_over_n():
    tape = Tape()
    x = tape.leaf(np.arange(5.0))
    backward(ad.mean(x))
    np.testing.assert_array_equal(x.grad, np.full(5, 0.2))


def test_sum_of_scaled_leaf():
    tape = Tape()
    x = tape.leaf(np.ones(5))
    backward(ad.sum_all(ad.scalar_scale(x, 2.0)))
    np.testing.assert_array_equal(x.grad, np.full(5, 2.0))


def test_l1_distance_sign_gradient():
    tape = Tape()
    x = tape.leaf(np.array([1.0, -2.0]))
    backward(ad.l1_distance(x, tape.constant(np.zeros(2))))
    np.testing.assert_array_equal(x.grad, np.array([1.0, -1.0]))


def test_cosine_similarity_of_node_with_itself_has_zero_gradient():
    tape = Tape()
    x = tape.leaf(np.array([0.3, -0.5, 1.0]))
    cos = ad.cosine_similarity(x, x)
    backward(cos)
    assert cos.value == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(x.grad)) < 1e-12


def test_root_grad_is_one_after_backward():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    root = ad.sum_all(x)
    backward(root)
    assert root.grad == 1.0


def test_matmul_chain_matches_central_differences():
    rng = np.random.default_rng(42)
    weights = rng.normal(size=(4, 3))

    def f(n):
        return ad.sum_all(ad.square(ad.matmul(n, n.tape.constant(weights))))

    assert grad_check(f, rng.normal(size=(6, 4))) < 1e-4


def test_gradient_accumulation_x_plus_x_equals_2x():
    x = np.array([0.7, -1.3, 2.0])

    def doubled_by_add(n):
        return ad.sum_all(ad.square(ad.add(n, n)))

    def doubled_by_scale(n):
        return ad.sum_all(ad.square(ad.scalar_scale(n, 2.0)))

    np.testing.assert_array_equal(
        gradient_of(doubled_by_add, x), gradient_of(doubled_by_scale, x)
    )


def test_backward_deterministic_bit_identical():
    rng = np.random.default_rng(5)
    x = rng.normal(size=32)
    weights = rng.normal(size=(32, 8))

    def f(n):
        h = ad.relu(ad.matmul(n, n.tape.constant(weights)))
        return ad.l2_norm(h)

    first = gradient_of(f, x)
    second = gradient_of(f, x)
    assert np.array_equal(first, second)


def test_grad_check_quadratic_is_exact():
    def f(n):
        return ad.sum_all(ad.square(n))

    assert grad_check(f, np.array([1.0, -2.0, 0.5])) < 1e-8


def test_grad_check_constant_function():
    def f(n):
        return ad.sum_all(ad.scalar_scale(n, 0.0))

    assert grad_check(f, np.array([1.0, 2.0])) == 0.0


def test_shape_mismatch_raises():
    tape = Tape()
    a = tape.leaf(np.zeros(3))
    b = tape.constant(np.zeros(4))
    with pytest.raises(ValueError, match="shape mismatch"):
        ad.add(a, b)


def test_backward_requires_scalar_root():
    tape = Tape()
    x = tape.leaf(np.zeros(3))
    with pytest.raises(ValueError, match="scalar"):
        backward(ad.square(x))


def test_non_finite_value_fails_fast_with_node_index():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 0.0]))
    with pytest.raises(NonFiniteValueError) as excinfo:
        ad.log_floor(ad.scalar_scale(x, np.inf))
    assert excinfo.value.index == len(tape.nodes)


def test_clamp_passes_gradient_only_inside_interval():
    tape = Tape()
    x = tape.leaf(np.array([-2.0, -0.5, 0.5, 2.0]))
    backward(ad.sum_all(ad.clamp_minmax(x, -1.0, 1.0)))
    np.testing.assert_array_equal(x.grad, np.array([0.0, 1.0, 1.0, 0.0]))


def test_frame_gather_zero_pads_and_scatters():
    tape = Tape()
    x = tape.leaf(np.arange(5.0))
    frame = ad.frame_gather(x, 3, 4)
    np.testing.assert_array_equal(frame.value, np.array([3.0, 4.0, 0.0, 0.0]))
    backward(ad.sum_all(frame))
    np.testing.assert_array_equal(x.grad, np.array([0.0, 0.0, 0.0, 1.0, 1.0]))


def test_pad_to_truncates_gradient():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    padded = ad.pad_to(x, 4)
    np.testing.assert_array_equal(padded.value, np.array([1.0, 2.0, 0.0, 0.0]))
    backward(ad.sum_all(ad.square(padded)))
    np.testing.assert_array_equal(x.grad, np.array([2.0, 4.0]))


OP_CASES = [
    ("add", lambda n: ad.sum_all(ad.add(n, n.tape.constant(np.linspace(0.3, 1.0, 8))))),
    ("sub", lambda n: ad.sum_all(ad.sub(n, n.tape.constant(np.linspace(0.3, 1.0, 8))))),
    (
        "mul",
        lambda n: ad.sum_all(
            ad.elementwise_mul(n, n.tape.constant(np.linspace(0.3, 1.0, 8)))
        ),
    ),
    ("square", lambda n: ad.sum_all(ad.square(n))),
    ("sqrt_eps", lambda n: ad.sum_all(ad.sqrt_eps(ad.square(n), 1e-12))),
    ("absolute", lambda n: ad.sum_all(ad.absolute(n))),
    ("log_floor", lambda n: ad.sum_all(ad.log_floor(ad.square(n), 1e-10))),
    ("relu", lambda n: ad.sum_all(ad.relu(n))),
    ("l2_norm", lambda n: ad.l2_norm(n)),
    ("l2_normalize", lambda n: ad.mean(ad.square(ad.add(ad.l2_normalize(n), n)))),
    (
        "cosine",
        lambda n: ad.cosine_similarity(n, n.tape.constant(np.linspace(-1.0, 0.5, 8))),
    ),
    ("frame_stack", lambda n: ad.sum_all(ad.square(ad.frame_stack(n, 4, 2, 4)))),
]


@pytest.mark.parametrize("name,f", OP_CASES, ids=[c[0] for c in OP_CASES])
def test_op_gradients_match_finite_differences(name, f):
    rng = np.random.default_rng(hash(name) % 2**32)
    # keep away from the kinks of abs/relu at zero
    x = rng.uniform(0.2, 1.0, size=8) * rng.choice([-1.0, 1.0], size=8)
    assert grad_check(f, x) < 1e-4

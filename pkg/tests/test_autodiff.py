import numpy as np
import pytest

from right_reasons.autodiff.gradcheck import check_grad
from right_reasons.autodiff.tape import (
    Graph,
    add,
    broadcast_to,
    exp,
    grad_nodes,
    gradient,
    log,
    log_softmax,
    matmul,
    multiply,
    reciprocal,
    reduce_sum,
    relu,
    scale,
    scatter,
    select,
    square,
    sum_to,
    transpose,
)
from right_reasons.errors.autodiff import GradCheckStepError, GraphMismatchError, NonFiniteValueError, NonScalarRootError, ShapeMismatchError


def test_values_are_read_only():
    graph = Graph()
    node = graph.variable([1.0, 2.0])
    with pytest.raises(ValueError, match="read-only"):
        node.value[0] = 5.0


def test_bias_row_broadcasts_over_batch():
    graph = Graph()
    out = graph.variable(np.ones((3, 2))) + graph.variable([10.0, 20.0])
    np.testing.assert_array_equal(out.value, [[11.0, 21.0]] * 3)


def test_two_sided_broadcast_is_rejected():
    graph = Graph()
    with pytest.raises(ShapeMismatchError):
        graph.variable(np.ones((2, 1))) + graph.variable(np.ones((1, 3)))


def test_matmul_shape_mismatch():
    graph = Graph()
    with pytest.raises(ShapeMismatchError) as excinfo:
        matmul(graph.variable(np.ones((2, 3))), graph.variable(np.ones((2, 3))))
    assert "matmul" in str(excinfo.value)


def test_log_softmax_rows_normalize():
    graph = Graph()
    logits = graph.constant([[1000.0, 0.0, -1000.0], [1.0, 2.0, 3.0]])
    probs = np.exp(log_softmax(logits).value)
    np.testing.assert_allclose(probs.sum(axis=1), [1.0, 1.0])
    assert np.isfinite(log_softmax(logits).value[0, :2]).all()


def test_gradient_of_sum_of_squares():
    graph = Graph()
    x = graph.variable([1.0, -2.0, 3.0])
    (grad,) = gradient(reduce_sum(square(x)), [x])
    np.testing.assert_array_equal(grad, [2.0, -4.0, 6.0])
    np.testing.assert_array_equal(x.grad, grad)


def test_gradient_discards_backward_nodes():
    graph = Graph()
    x = graph.variable([1.0, 2.0])
    root = reduce_sum(exp(x))
    before = len(graph)
    gradient(root, [x])
    assert len(graph) == before


def test_unrelated_node_gets_zero_gradient():
    graph = Graph()
    x, z = graph.variable([1.0, 2.0]), graph.variable(np.ones((2, 2)))
    _, grad_z = gradient(reduce_sum(x), [x, z])
    np.testing.assert_array_equal(grad_z, np.zeros((2, 2)))


def test_non_scalar_root():
    graph = Graph()
    x = graph.variable([1.0, 2.0])
    with pytest.raises(NonScalarRootError):
        gradient(square(x), [x])


def test_nodes_from_different_graphs():
    first, second = Graph(), Graph()
    with pytest.raises(GraphMismatchError):
        first.variable([1.0]) + second.variable([1.0])
    with pytest.raises(GraphMismatchError):
        gradient(reduce_sum(first.variable([1.0])), [second.variable([1.0])])


def test_second_derivative_of_cube():
    """d/dx sum((d/dx sum(x^3))^2) = d/dx sum(9 x^4) = 36 x^3."""
    graph = Graph()
    x = graph.variable([0.5, -1.0, 2.0])
    cube = reduce_sum(x * x * x)
    (first,) = grad_nodes(cube, [x])
    np.testing.assert_allclose(first.value, 3 * x.value**2)
    (second,) = gradient(reduce_sum(square(first)), [x])
    np.testing.assert_allclose(second, 36 * x.value**3)


def test_relu_gate_has_no_curvature():
    graph = Graph()
    x = graph.variable([-1.0, 2.0])
    (first,) = grad_nodes(reduce_sum(relu(x)), [x])
    np.testing.assert_array_equal(first.value, [0.0, 1.0])
    (second,) = gradient(reduce_sum(first), [x])
    np.testing.assert_array_equal(second, [0.0, 0.0])


@pytest.mark.parametrize(
    ("name", "build", "point"),
    [
        ("log", lambda g, v: reduce_sum(log(v[0])), [[0.5, 1.5, 3.0]]),
        ("reciprocal", lambda g, v: reduce_sum(reciprocal(v[0])), [[0.5, 1.5, 3.0]]),
        ("exp", lambda g, v: reduce_sum(exp(v[0])), [[-1.0, 0.2, 1.0]]),
        ("relu", lambda g, v: reduce_sum(square(relu(v[0]))), [[-1.0, 0.7, 2.0]]),
        ("select", lambda g, v: reduce_sum(square(select(v[0], (np.arange(2), [1, 0])))), [[[1.0, 2.0], [3.0, 4.0]]]),
        ("log_softmax", lambda g, v: reduce_sum(scale(select(log_softmax(v[0]), (slice(None), 0)), 1.5)), [[[0.1, 0.5, -0.3]]]),
        ("matmul", lambda g, v: reduce_sum(square(matmul(v[0], v[1]))), [[[1.0, 2.0]], [[0.5, -1.0], [0.3, 0.2]]]),
    ],
)
def test_check_grad_per_op(name, build, point):
    assert check_grad(build, point) < 1e-6, name


def test_check_grad_through_an_input_gradient():
    """A penalty on an input gradient, differentiated with respect to the weights."""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 3))

    def penalty(graph, variables):
        (W,) = variables
        inputs = graph.variable(X)
        (input_grad,) = grad_nodes(reduce_sum(log_softmax(matmul(inputs, W))), [inputs])
        return reduce_sum(square(input_grad))

    assert check_grad(penalty, [rng.normal(size=(3, 4))]) < 1e-5


def test_check_grad_rejects_bad_step():
    with pytest.raises(GradCheckStepError):
        check_grad(lambda g, v: reduce_sum(v[0]), [[1.0]], step=0.0)


def test_check_grad_non_finite():
    with pytest.raises(NonFiniteValueError):
        check_grad(lambda g, v: reduce_sum(log(v[0])), [[1e-6]], step=1e-5)


def weighted(graph, node):
    """Sums a node against fixed positive weights so every output entry matters."""
    return reduce_sum(node * graph.constant(np.linspace(0.5, 1.5, node.value.size).reshape(node.shape)))


def random_point(build, shapes, low, high, seed):
    """
    A random point away from ReLU kinks and from nonzero near-vanishing gradients,
    where relative error says nothing about correctness.
    """
    rng = np.random.default_rng(seed)
    while True:
        point = [rng.uniform(low, high, size=shape) for shape in shapes]
        if any(np.abs(array).min() < 1e-3 for array in point):
            continue
        graph = Graph()
        variables = [graph.variable(array) for array in point]
        grads = gradient(build(graph, variables), variables)
        if not any(((np.abs(g) > 0) & (np.abs(g) < 1e-3)).any() for g in grads):
            return point


SELECT_INDEX = (np.array([0, 2, 1]), np.array([1, 0, 1]))

OPS = {
    "add": (lambda g, v: weighted(g, add(v[0], v[1])), [(3, 2), (2,)], -2.0, 2.0),
    "multiply": (lambda g, v: weighted(g, multiply(v[0], v[1])), [(3, 2), (3, 2)], -2.0, 2.0),
    "matmul": (lambda g, v: weighted(g, matmul(v[0], v[1])), [(2, 3), (3, 2)], -2.0, 2.0),
    "transpose": (lambda g, v: weighted(g, square(transpose(v[0]))), [(2, 3)], -2.0, 2.0),
    "sum": (lambda g, v: exp(reduce_sum(v[0])), [(3,)], -2.0, 2.0),
    "scale": (lambda g, v: weighted(g, square(scale(v[0], -1.7))), [(3, 2)], -2.0, 2.0),
    "square": (lambda g, v: weighted(g, square(v[0])), [(3, 2)], -2.0, 2.0),
    "broadcast_to": (lambda g, v: weighted(g, square(broadcast_to(v[0], (3, 2)))), [(2,)], -2.0, 2.0),
    "sum_to": (lambda g, v: weighted(g, square(sum_to(v[0], (1, 2)))), [(3, 2)], -2.0, 2.0),
    "relu": (lambda g, v: weighted(g, square(relu(v[0]))), [(3, 2)], -2.0, 2.0),
    "log": (lambda g, v: weighted(g, log(v[0])), [(3, 2)], 0.1, 2.0),
    "reciprocal": (lambda g, v: weighted(g, reciprocal(v[0])), [(3, 2)], 0.1, 2.0),
    "exp": (lambda g, v: weighted(g, exp(v[0])), [(3, 2)], -2.0, 2.0),
    "log_softmax": (lambda g, v: weighted(g, log_softmax(v[0])), [(2, 3)], -2.0, 2.0),
    "select": (lambda g, v: weighted(g, square(select(v[0], SELECT_INDEX))), [(3, 2)], -2.0, 2.0),
    "scatter": (lambda g, v: weighted(g, square(scatter(v[0], SELECT_INDEX, (3, 2)))), [(3,)], -2.0, 2.0),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_check_grad_at_random_points(name):
    build, shapes, low, high = OPS[name]
    for seed in range(100):
        point = random_point(build, shapes, low, high, seed)
        assert check_grad(build, point) < 1e-6, (name, seed)


def test_gradient_is_linear():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(2, 3))
    alpha, beta = 0.7, -2.3

    def f(graph, x):
        return weighted(graph, exp(x))

    def g(graph, x):
        return reduce_sum(log_softmax(square(x)))

    def grad_of(build):
        graph = Graph()
        x = graph.variable(x0)
        (grad,) = gradient(build(graph, x), [x])
        return grad

    combined = grad_of(lambda graph, x: scale(f(graph, x), alpha) + scale(g(graph, x), beta))
    np.testing.assert_allclose(combined, alpha * grad_of(f) + beta * grad_of(g), rtol=1e-12, atol=1e-12)


def test_nested_gradient_of_a_quadratic_is_the_hessian_vector_product():
    rng = np.random.default_rng(4)
    root = rng.normal(size=(4, 4))
    Q = root + root.T
    v = rng.normal(size=(1, 4))

    graph = Graph()
    x = graph.variable(rng.normal(size=(1, 4)))
    quadratic = scale(reduce_sum(matmul(x, graph.constant(Q)) * x), 0.5)
    (first,) = grad_nodes(quadratic, [x])
    np.testing.assert_allclose(first.value, x.value @ Q, rtol=1e-10, atol=1e-10)
    (hessian_vector,) = gradient(reduce_sum(first * graph.constant(v)), [x])
    np.testing.assert_allclose(hessian_vector, v @ Q, rtol=1e-10, atol=1e-10)


def test_backward_leaves_forward_values_untouched():
    rng = np.random.default_rng(5)
    X, W = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))

    def forward(graph):
        inputs, weights = graph.variable(X), graph.variable(W)
        return inputs, weights, reduce_sum(log_softmax(relu(matmul(inputs, weights))))

    graph = Graph()
    inputs, weights, root = forward(graph)
    before = [node.value.copy() for node in graph.nodes]
    (input_grad,) = grad_nodes(root, [inputs])
    gradient(reduce_sum(square(input_grad)), [weights])
    for node, value in zip(graph.nodes, before, strict=False):
        assert node.value.tobytes() == value.tobytes()

    rerun = Graph()
    forward(rerun)
    for node, value in zip(rerun.nodes, before, strict=True):
        assert node.value.tobytes() == value.tobytes()

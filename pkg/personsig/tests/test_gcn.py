import pytest
import numpy as np
import torch

from personsig.common import NonFiniteError
from personsig.common import ShapeMismatchError
from personsig.gcn import attribute_logits
from personsig.gcn import build_node_inputs
from personsig.gcn import forward
from personsig.gcn import gcn_layer
from personsig.gcn import gcn_params


def t(x):
    return torch.tensor(x, dtype=torch.float64)


def test_build_node_inputs():
    Z = t([[1., 2.], [3., 4.]])
    X = build_node_inputs(Z, t([[5., 6.]]))
    assert X.tolist() == [[1, 2], [3, 4], [5, 6]]
    X = build_node_inputs(Z, torch.zeros((1, 2), dtype=torch.float64))
    assert (X[2] == 0).all()
    rng = np.random.RandomState(42)
    Z, parts = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
    X = build_node_inputs(Z, parts).numpy()
    assert X.shape == (8, 4)
    assert np.array_equal(X, np.vstack([Z, parts]))
    with pytest.raises(ShapeMismatchError):
        build_node_inputs(Z, np.zeros((5, 3)))


def test_build_node_inputs_batched():
    rng = np.random.RandomState(42)
    Z, parts = rng.normal(size=(3, 4)), rng.normal(size=(2, 5, 4))
    X = build_node_inputs(Z, parts).numpy()
    assert X.shape == (2, 8, 4)
    assert np.array_equal(X[1, :3], Z)


def test_gcn_layer_examples():
    H = t([[1., 2.], [0., 3.]])
    assert torch.equal(gcn_layer(H, torch.eye(2, dtype=torch.float64), torch.eye(2, dtype=torch.float64)), H)
    out = gcn_layer(t([[-1.]]), t([[1.]]), t([[1.]]), slope=0.2)
    assert np.allclose(out.numpy(), [[-0.2]])
    out = gcn_layer(t([[2., 0.], [0., 2.]]), t([[0.5, 0.5], [0.5, 0.5]]), torch.eye(2, dtype=torch.float64))
    assert np.allclose(out.numpy(), [[1, 1], [1, 1]])


def test_gcn_layer_linear_with_unit_slope():
    rng = np.random.RandomState(42)
    H, M, theta = rng.normal(size=(6, 3)), rng.uniform(size=(6, 6)), rng.normal(size=(3, 2))
    out = gcn_layer(H, M, theta, slope=1.).numpy()
    assert np.abs(out - M.dot(H).dot(theta)).max() <= 1e-12


def test_gcn_layer_errors():
    with pytest.raises(ShapeMismatchError):
        gcn_layer(np.zeros((3, 2)), np.eye(2), np.eye(2))
    with pytest.raises(ShapeMismatchError):
        gcn_layer(np.zeros((2, 2)), np.eye(2), np.eye(3))
    with pytest.raises(NonFiniteError):
        gcn_layer(np.array([[np.nan]]), np.eye(1), np.eye(1))


def test_gcn_params_validation():
    with pytest.raises(ValueError):
        gcn_params([], out_dim=4)
    with pytest.raises(ShapeMismatchError):
        gcn_params([torch.zeros(4, 3), torch.zeros(2, 4)], out_dim=4)
    with pytest.raises(ShapeMismatchError):
        gcn_params([torch.zeros(4, 3)], out_dim=4)
    params = gcn_params([torch.zeros(4, 3), torch.zeros(3, 4)], out_dim=4)
    assert len(params.thetas) == 2


def test_forward_single_identity_layer():
    rng = np.random.RandomState(42)
    X = t(rng.uniform(size=(8, 4)))
    params = gcn_params([torch.eye(4, dtype=torch.float64)], out_dim=4)
    H, out = forward(X, torch.eye(8, dtype=torch.float64), params, n_attributes=3)
    assert np.allclose(out.W.numpy(), X[:3].numpy())
    assert np.allclose(out.f_graph.numpy(), X.numpy().mean(axis=0))


def _reference_forward(X, M_hat, thetas, slope):
    H = X
    for theta in thetas:
        Y = M_hat.dot(H).dot(theta)
        H = np.where(Y >= 0, Y, slope * Y)
    return H


def test_forward_matches_reference():
    rng = np.random.RandomState(42)
    X = rng.normal(size=(8, 4))
    A = rng.uniform(size=(8, 8))
    thetas = [rng.normal(size=(4, 6)), rng.normal(size=(6, 5))]
    params = gcn_params([t(th) for th in thetas], out_dim=5, slope=0.2)
    H, out = forward(t(X), t(A), params, n_attributes=3)
    expected = _reference_forward(X, A, thetas, 0.2)
    assert np.abs(H.numpy() - expected).max() <= 1e-10
    assert np.array_equal(out.W.numpy(), H[:3].numpy())
    assert np.allclose(out.f_graph.numpy(), expected.mean(axis=0), atol=1e-10)


def test_forward_trace_holds_pre_activations():
    rng = np.random.RandomState(0)
    params = gcn_params([t(rng.normal(size=(4, 4))), t(rng.normal(size=(4, 4)))], out_dim=4)
    trace = []
    forward(t(rng.normal(size=(6, 4))), t(rng.uniform(size=(6, 6))), params, 2, trace=trace)
    assert len(trace) == 2
    assert trace[0].shape == (6, 4)


def test_forward_permutation_equivariance():
    rng = np.random.RandomState(42)
    X = rng.normal(size=(8, 4))
    A = rng.uniform(size=(8, 8))
    params = gcn_params([t(rng.normal(size=(4, 5))), t(rng.normal(size=(5, 3)))], out_dim=3)
    perm = rng.permutation(8)
    P = np.eye(8)[perm]
    H, out = forward(t(X), t(A), params, n_attributes=3)
    H_perm, out_perm = forward(t(P.dot(X)), t(P.dot(A).dot(P.T)), params, n_attributes=3)
    assert np.abs(H_perm.numpy() - P.dot(H.numpy())).max() <= 1e-10
    assert np.abs(out_perm.f_graph.numpy() - out.f_graph.numpy()).max() <= 1e-10


def test_attribute_logits():
    rng = np.random.RandomState(42)
    W = rng.normal(size=(3, 4))
    assert (attribute_logits(W, np.zeros(4)).numpy() == 0).all()
    f = rng.normal(size=4)
    assert np.allclose(attribute_logits(np.eye(4), f).numpy(), f)
    expected = [sum(W[i, j] * f[j] for j in range(4)) for i in range(3)]
    assert np.abs(attribute_logits(W, f).numpy() - expected).max() <= 1e-12
    scaled = W.copy()
    scaled[1] *= 3
    logits, logits_scaled = attribute_logits(W, f).numpy(), attribute_logits(scaled, f).numpy()
    assert np.isclose(logits_scaled[1], 3 * logits[1])
    assert np.allclose(logits_scaled[[0, 2]], logits[[0, 2]])
    with pytest.raises(ShapeMismatchError):
        attribute_logits(W, np.zeros(3))

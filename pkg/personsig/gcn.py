"""
Graph reasoning over the attribute/part correlation graph.

Node inputs stack the attribute word embeddings (first N_A rows) over the
projected part features (last N_P rows). Each graph convolution computes

    H' = LeakyReLU(M_hat H Theta)

and the last layer output gives both the node-parameterized attribute
classifier W (attribute rows) and the graph feature f_graph (mean over
all nodes). Every function accepts a leading batch dimension.
"""
from collections import namedtuple

import torch
import torch.nn.functional as F

from .common import ShapeMismatchError
from .common import as_tensor
from .common import check_finite_or_exception

DEFAULT_SLOPE = 0.2
MAX_LAYERS = 4

GcnParams = namedtuple('GcnParams', ['thetas', 'slope'])
GraphOutputs = namedtuple('GraphOutputs', ['W', 'f_graph'])


def gcn_params(thetas, out_dim, slope=DEFAULT_SLOPE):
    """
    validate a chain of layer weights and return GcnParams.

    Parameters
    ----------

    thetas : list of tensors
        Theta^(k) of shape (d_k, d_{k+1})
    out_dim : int
        required final dimension (the global feature dimension D)
    slope : float in (0, 1]
    """
    thetas = list(thetas)
    if not 1 <= len(thetas) <= MAX_LAYERS:
        raise ValueError('the number of graph layers must be in [1, {}], got {}'.format(
            MAX_LAYERS, len(thetas)))
    for k in range(1, len(thetas)):
        if thetas[k - 1].shape[1] != thetas[k].shape[0]:
            raise ShapeMismatchError('layer {} outputs {} features but layer {} expects {}'.format(
                k - 1, thetas[k - 1].shape[1], k, thetas[k].shape[0]))
    if thetas[-1].shape[1] != out_dim:
        raise ShapeMismatchError('the last graph layer must output {} features, got {}'.format(
            out_dim, thetas[-1].shape[1]))
    if not 0 < slope <= 1:
        raise ValueError('leaky slope must be in (0, 1], got {}'.format(slope))
    return GcnParams(thetas=thetas, slope=slope)


def build_node_inputs(Z, parts):
    """
    stack attribute embeddings Z (N_A, D_w) over part features
    (..., N_P, D_w), attribute rows first.
    """
    parts = as_tensor(parts)
    Z = as_tensor(Z, dtype=parts.dtype)
    if Z.shape[-1] != parts.shape[-1]:
        raise ShapeMismatchError('embeddings have dim {} but part features have dim {}'.format(
            Z.shape[-1], parts.shape[-1]))
    Z = Z.expand(parts.shape[:-2] + Z.shape)
    return torch.cat([Z, parts], dim=-2)


def propagate(H, M_hat, theta):
    """pre-activation M_hat H theta of a graph convolution"""
    H = as_tensor(H)
    M_hat = as_tensor(M_hat, dtype=H.dtype)
    theta = as_tensor(theta, dtype=H.dtype)
    n = M_hat.shape[0]
    if M_hat.dim() != 2 or M_hat.shape[1] != n or H.shape[-2] != n:
        raise ShapeMismatchError('M_hat of shape {} does not match node matrix of shape {}'.format(
            tuple(M_hat.shape), tuple(H.shape)))
    if theta.dim() != 2 or theta.shape[0] != H.shape[-1]:
        raise ShapeMismatchError('theta of shape {} does not match node dim {}'.format(
            tuple(theta.shape), H.shape[-1]))
    check_finite_or_exception(H, 'node matrix')
    return torch.matmul(torch.matmul(M_hat, H), theta)


def gcn_layer(H, M_hat, theta, slope=DEFAULT_SLOPE):
    """one graph convolution H' = LeakyReLU(M_hat H theta)"""
    return F.leaky_relu(propagate(H, M_hat, theta), slope)


def forward(X, M_hat, params, n_attributes, trace=None):
    """
    Run the stacked graph convolutions.

    Parameters
    ----------

    X : tensor (..., N_G, D_w)
    M_hat : tensor (N_G, N_G)
    params : GcnParams
    n_attributes : int
        number of attribute nodes N_A (the first rows)
    trace : list or None
        when given, the pre-activation of every layer is appended to it

    Returns
    -------

    tuple (H, GraphOutputs)
        H is the last layer output (..., N_G, D), W its first N_A rows and
        f_graph its mean over all N_G nodes.
    """
    H = as_tensor(X)
    for theta in params.thetas:
        pre = propagate(H, M_hat, theta)
        if trace is not None:
            trace.append(pre)
        H = F.leaky_relu(pre, params.slope)
    return H, GraphOutputs(W=H[..., :n_attributes, :], f_graph=H.mean(dim=-2))


def attribute_logits(W, f_bnn):
    """attribute scores y_hat = W f_bnn, W (..., N_A, D), f_bnn (..., D)"""
    f_bnn = as_tensor(f_bnn)
    W = as_tensor(W, dtype=f_bnn.dtype)
    if W.shape[-1] != f_bnn.shape[-1]:
        raise ShapeMismatchError('classifier of shape {} does not match feature of dim {}'.format(
            tuple(W.shape), f_bnn.shape[-1]))
    return torch.matmul(W, f_bnn.unsqueeze(-1)).squeeze(-1)

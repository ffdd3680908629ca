"""
In this module I provide the torch layers the person signature model is
made of. Each layer owns its parameters and delegates the computation to
the functions of `featops`, `gcn` and `objectives`.
"""
import torch
from torch import nn

from .featops import BN_EPS
from .featops import BN_MOMENTUM
from .featops import bnneck
from .featops import project_parts
from .gcn import DEFAULT_SLOPE
from .gcn import forward as gcn_forward
from .gcn import gcn_params
from .objectives import identity_scores


class BNNeck(nn.Module):
    """
    per-channel standardization scaled by gamma, without shift.
    When `enabled` is False the layer is the identity and has no
    parameters.
    """

    def __init__(self, dim, enabled=True, momentum=BN_MOMENTUM, eps=BN_EPS, dtype=torch.float64):
        super(BNNeck, self).__init__()
        self.dim = dim
        self.enabled = enabled
        self.momentum = momentum
        self.eps = eps
        if enabled:
            self.gamma = nn.Parameter(torch.ones(dim, dtype=dtype))
            self.register_buffer('running_mean', torch.zeros(dim, dtype=dtype))
            self.register_buffer('running_var', torch.ones(dim, dtype=dtype))
        else:
            self.register_parameter('gamma', None)

    def forward(self, x, update_stats=True):
        if not self.enabled:
            return x
        return bnneck(x, self.gamma, self.running_mean, self.running_var, self.training,
                      momentum=self.momentum, eps=self.eps, update_stats=update_stats)


class PartProjection(nn.Module):
    """
    linear map without bias from pooled part features (D) to node
    features (D_w), either shared by all parts or one per part.
    """

    def __init__(self, n_parts, in_dim, out_dim, shared=True, dtype=torch.float64):
        super(PartProjection, self).__init__()
        self.shared = shared
        shape = (out_dim, in_dim) if shared else (n_parts, out_dim, in_dim)
        self.weight = nn.Parameter(torch.zeros(shape, dtype=dtype))

    def forward(self, pooled):
        return project_parts(pooled, self.weight)


class GraphReasoning(nn.Module):
    """
    stacked graph convolutions over a fixed normalized correlation matrix.

    Parameters
    ----------

    dims : list of int
        [D_w, d_1, ..., D], one layer between consecutive dims
    slope : float
        leaky relu slope
    """

    def __init__(self, dims, slope=DEFAULT_SLOPE, dtype=torch.float64):
        super(GraphReasoning, self).__init__()
        self.slope = slope
        self.out_dim = dims[-1]
        self.thetas = nn.ParameterList([
            nn.Parameter(torch.zeros((d_in, d_out), dtype=dtype))
            for d_in, d_out in zip(dims[:-1], dims[1:])])
        # validates layer count, chaining and slope at construction
        gcn_params(list(self.thetas), self.out_dim, slope)

    def forward(self, X, M_hat, n_attributes, trace=None):
        params = gcn_params(list(self.thetas), self.out_dim, self.slope)
        _, outputs = gcn_forward(X, M_hat, params, n_attributes, trace=trace)
        return outputs


class IdentityHead(nn.Module):
    """fully connected identity classifier over concat(f_bnn, f_graph)"""

    def __init__(self, n_identities, in_dim, bias=True, dtype=torch.float64):
        super(IdentityHead, self).__init__()
        self.weight = nn.Parameter(torch.zeros((n_identities, in_dim), dtype=dtype))
        if bias:
            self.bias = nn.Parameter(torch.zeros(n_identities, dtype=dtype))
        else:
            self.register_parameter('bias', None)

    def forward(self, f_bnn, f_graph):
        return identity_scores(f_bnn, f_graph, self.weight, self.bias)

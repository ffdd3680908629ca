"""
The person signature model and its builder.

`build_model` takes the `model` section of the run parameters (a dict),
the correlation graph, the attribute embeddings and the data dimensions,
and returns an initialized `GPSModel`. The architecture is described by
the dict only; the dimensions coming from the data (number of
identities, feature dimension) stay outside of it.

`ParamStore` is the ordered registry of every named tensor of a model,
with its shape and whether it is trained by gradient.
"""
import hashlib
import json
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np
import torch
from torch import nn

from .common import ConfigError
from .common import ShapeMismatchError
from .common import check_shape_or_exception
from .common import get_dtype
from .common import rng
from .featops import global_pool
from .featops import masked_pool
from .gcn import attribute_logits
from .gcn import build_node_inputs
from .layers import BNNeck
from .layers import GraphReasoning
from .layers import IdentityHead
from .layers import PartProjection
from .ontology import schema_to_dict

logger = logging.getLogger(__name__)

GPSOutputs = namedtuple('GPSOutputs', [
    'f_global', 'f_bnn', 'f_graph', 'attr_logits', 'id_scores', 'metric_embedding'])

METRIC_FEATURES = ('global', 'bnn')
SIGNATURE_FEATURES = ('concat', 'bnn')


class GPSModel(nn.Module):
    """
    Global branch (pooling, BNNeck), graph branch (masked part pooling,
    projection, graph convolutions) and the three heads: node-parameterized
    attribute classifier, identity classifier and the metric-learning
    embedding. The normalized correlation matrix is a constant buffer and
    identity centers are a buffer moved by the center update rule.
    """

    def __init__(self, M_hat, embeddings, n_parts, n_identities, feature_dim,
                 hidden_dims=(16,), slope=0.2, bnneck=True, shared_projection=True,
                 train_embeddings=False, identity_bias=True, metric_feature='global',
                 dtype=torch.float64):
        super(GPSModel, self).__init__()
        if metric_feature not in METRIC_FEATURES:
            raise ConfigError('metric_feature must be one of {}, got {}'.format(
                METRIC_FEATURES, metric_feature))
        embeddings = np.asarray(embeddings)
        self.n_attributes, embedding_dim = embeddings.shape
        self.n_parts = n_parts
        self.feature_dim = feature_dim
        self.metric_feature = metric_feature
        n_nodes = self.n_attributes + n_parts
        check_shape_or_exception(M_hat, (n_nodes, n_nodes), 'normalized correlation matrix')
        self.register_buffer('M_hat', torch.as_tensor(np.array(M_hat), dtype=dtype))
        self.Z = nn.Parameter(torch.as_tensor(embeddings, dtype=dtype), requires_grad=train_embeddings)
        self.projection = PartProjection(n_parts, feature_dim, embedding_dim,
                                         shared=shared_projection, dtype=dtype)
        self.bnneck = BNNeck(feature_dim, enabled=bnneck, dtype=dtype)
        self.graph_reasoning = GraphReasoning(
            [embedding_dim] + list(hidden_dims) + [feature_dim], slope=slope, dtype=dtype)
        self.identity_head = IdentityHead(n_identities, 2 * feature_dim, bias=identity_bias, dtype=dtype)
        self.register_buffer('centers', torch.zeros((n_identities, 2 * feature_dim), dtype=dtype))

    @property
    def dtype(self):
        return self.M_hat.dtype

    def forward(self, features, masks, update_stats=True, trace=None):
        """
        Parameters
        ----------

        features : tensor (B, W, H, D)
        masks : tensor (B, N_P, W, H)
            L1-normalized part masks
        update_stats : bool
            whether train-mode BNNeck moves its running statistics
        trace : list or None
            collects the graph layer pre-activations

        Returns
        -------

        GPSOutputs
        """
        B, W, H, D = features.shape
        if D != self.feature_dim:
            raise ShapeMismatchError('model expects feature maps with {} channels, got {}'.format(
                self.feature_dim, D))
        check_shape_or_exception(masks, (B, self.n_parts, W, H), 'part masks')
        f_global = global_pool(features)
        f_bnn = self.bnneck(f_global, update_stats=update_stats)
        parts = self.projection(masked_pool(features, masks))
        X = build_node_inputs(self.Z, parts)
        graph = self.graph_reasoning(X, self.M_hat, self.n_attributes, trace=trace)
        f_graph = graph.f_graph
        metric = f_global if self.metric_feature == 'global' else f_bnn
        return GPSOutputs(
            f_global=f_global,
            f_bnn=f_bnn,
            f_graph=f_graph,
            attr_logits=attribute_logits(graph.W, f_bnn),
            id_scores=self.identity_head(f_bnn, f_graph),
            metric_embedding=torch.cat([metric, f_graph], dim=-1))


def signature(outputs, feature='concat'):
    """retrieval vector from model outputs: concat(f_bnn, f_graph) or f_bnn"""
    if feature == 'concat':
        return torch.cat([outputs.f_bnn, outputs.f_graph], dim=-1)
    elif feature == 'bnn':
        return outputs.f_bnn
    else:
        raise ConfigError('unknown signature feature : {}, expected one of {}'.format(
            feature, SIGNATURE_FEATURES))


def build_model(params, M_hat, embeddings, n_parts, n_identities, feature_dim, seed):
    """
    build and initialize a GPSModel.

    Parameters
    ----------

    params : dict
        the `model` section of the run parameters
    M_hat : array (N_G, N_G)
    embeddings : array (N_A, D_w)
    n_parts, n_identities, feature_dim : int
    seed : int
        parameters are drawn from the named stream 'init.<tensor name>'
    """
    model = GPSModel(
        M_hat, embeddings,
        n_parts=n_parts,
        n_identities=n_identities,
        feature_dim=feature_dim,
        hidden_dims=params['hidden_dims'],
        slope=params['slope'],
        bnneck=params['bnneck'],
        shared_projection=params['shared_projection'],
        train_embeddings=params['train_embeddings'],
        identity_bias=params['identity_bias'],
        metric_feature=params['metric_feature'],
        dtype=get_dtype(params['dtype']))
    initialize(model, seed)
    return model


def leaky_relu_gain(slope):
    """gain sqrt(2 / (1 + slope^2)) keeping the activation scale through a leaky relu"""
    return np.sqrt(2. / (1 + slope ** 2))


def initialize(model, seed):
    """
    fan-in scaled uniform init of the projection, graph layers and
    identity head, U(-bound, bound) with bound = 1/sqrt(fan_in) except for
    the graph layers, which use bound = gain * sqrt(3 / fan_in) with the
    leaky relu gain of the model slope. gamma stays at 1, centers at 0
    and the embeddings are left as given.
    """
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name == 'Z' or name == 'bnneck.gamma':
                continue
            if name.startswith('graph_reasoning.thetas'):
                bound = leaky_relu_gain(model.graph_reasoning.slope) * np.sqrt(3. / param.shape[0])
            elif name == 'identity_head.bias':
                bound = 1. / np.sqrt(model.identity_head.weight.shape[1])
            else:
                bound = 1. / np.sqrt(param.shape[-1])
            values = rng(seed, 'init.' + name).uniform(-bound, bound, size=tuple(param.shape))
            param.copy_(torch.as_tensor(values, dtype=param.dtype))


def schema_hash(attachment):
    """sha256 digest (32 bytes) of the canonical JSON of a schema"""
    doc = json.dumps(schema_to_dict(attachment), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(doc.encode('utf-8')).digest()


class ParamStore(object):
    """
    ordered registry name -> tensor over a model: every parameter and
    every buffer, with its shape and trainable flag. Buffers (running
    statistics, centers, the correlation matrix) are never trainable.
    Names are unique and shapes cannot change.
    """

    def __init__(self, model, schema_hash):
        self.model = model
        self.schema_hash = schema_hash
        self._tensors = OrderedDict(model.state_dict(keep_vars=True))
        self._parameters = set(name for name, _ in model.named_parameters())

    def names(self):
        return list(self._tensors.keys())

    def get(self, name):
        if name not in self._tensors:
            raise KeyError('unknown tensor : {}, available : {}'.format(name, self.names()))
        return self._tensors[name]

    def shape(self, name):
        return tuple(self.get(name).shape)

    def trainable(self, name):
        return name in self._parameters and self.get(name).requires_grad

    def trainable_names(self):
        return [name for name in self.names() if self.trainable(name)]

    def nb_trainable(self):
        """total number of trainable scalars"""
        return sum(int(np.prod(self.shape(name))) for name in self.trainable_names())

    def param_groups(self, multipliers=None):
        """
        one optimizer parameter group per trainable tensor, with its
        name and learning rate multiplier.

        Parameters
        ----------

        multipliers : dict or None
            tensor name prefix -> factor applied to the base learning
            rate. 'graph_reasoning' covers every graph layer, the longest
            matching prefix wins and unmatched tensors keep factor 1.
        """
        multipliers = multipliers or {}
        names = self.names()
        for prefix in multipliers:
            if not any(_has_prefix(name, prefix) for name in self._parameters):
                raise ConfigError('optim.lr_multipliers : no parameter named {}, available : {}'.format(
                    prefix, [name for name in names if name in self._parameters]))
        groups = []
        for name in self.trainable_names():
            matching = sorted((p for p in multipliers if _has_prefix(name, p)), key=len)
            factor = multipliers[matching[-1]] if matching else 1.
            groups.append({'params': [self._tensors[name]], 'name': name, 'lr_mult': float(factor)})
        return groups

    def freeze(self, name):
        if name not in self._parameters:
            raise ValueError('{} is a buffer, it is never trained'.format(name))
        self.get(name).requires_grad_(False)

    def unfreeze(self, name):
        if name not in self._parameters:
            raise ValueError('{} is a buffer, it cannot be trained'.format(name))
        self.get(name).requires_grad_(True)

    def state(self):
        """ordered dict name -> float64 numpy copy"""
        return OrderedDict(
            (name, t.detach().cpu().numpy().astype(np.float64).copy()) for name, t in self._tensors.items())

    def load_state(self, tensors):
        """copy values into the registered tensors, shapes must match"""
        missing = set(self._tensors) - set(tensors)
        unknown = set(tensors) - set(self._tensors)
        if missing or unknown:
            raise ValueError('checkpoint tensors do not match the model (missing : {}, unknown : {})'.format(
                sorted(missing), sorted(unknown)))
        with torch.no_grad():
            for name, value in tensors.items():
                target = self._tensors[name]
                if tuple(np.shape(value)) != tuple(target.shape):
                    raise ShapeMismatchError('tensor {} has shape {} in the checkpoint, {} in the model'.format(
                        name, np.shape(value), tuple(target.shape)))
                target.copy_(torch.as_tensor(np.asarray(value), dtype=target.dtype))

    def describe(self):
        for name in self.names():
            logger.info('{:<32} {:<16} {}'.format(
                name, str(self.shape(name)), 'trainable' if self.trainable(name) else 'frozen'))
        logger.info('Number of parameters : {}'.format(self.nb_trainable()))


def _has_prefix(name, prefix):
    return name == prefix or name.startswith(prefix + '.')

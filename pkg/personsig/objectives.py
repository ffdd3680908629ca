"""
this module contains the training objectives and their weighted
combination:

    L = a1 L_id + a2 L_triplet + a3 L_center + a4 L_attribute

all of them are written with torch operations so that they can be
differentiated. The center update rule, which is not a gradient step,
is also defined here.
"""
import math
from functools import partial
from collections import namedtuple

import torch
import torch.nn.functional as F

from .common import BatchStructureError
from .common import ShapeMismatchError
from .common import as_tensor

DEFAULT_MARGIN = 0.3
DEFAULT_CENTER_LR = 0.5
DISTANCE_EPS = 1e-12

LossWeights = namedtuple('LossWeights', ['identity', 'triplet', 'center', 'attribute'])
LossWeights.__new__.__defaults__ = (1., 1., 0.0005, 1.)

LOSS_TERMS = ('l_id', 'l_triplet', 'l_center', 'l_attr')


def loss_weights(identity=1., triplet=1., center=0.0005, attribute=1.):
    weights = LossWeights(float(identity), float(triplet), float(center), float(attribute))
    for name, value in zip(LossWeights._fields, weights):
        if not math.isfinite(value) or value < 0:
            raise ValueError('loss weight "{}" must be finite and >= 0, got {}'.format(name, value))
    return weights


def attribute_loss(logits, labels):
    """
    multi-label binary cross entropy averaged over attributes then over
    the batch, computed from logits with a stable log-sigmoid.

    Parameters
    ----------

    logits : tensor (B, N_A)
    labels : tensor (B, N_A) of 0/1
    """
    logits = as_tensor(logits)
    labels = as_tensor(labels, dtype=logits.dtype)
    if logits.shape != labels.shape:
        raise ShapeMismatchError('logits {} and labels {} differ in shape'.format(
            tuple(logits.shape), tuple(labels.shape)))
    if not bool(((labels == 0) | (labels == 1)).all()):
        raise ValueError('attribute labels must be binary')
    return F.binary_cross_entropy_with_logits(logits, labels, reduction='mean')


def identity_scores(f_bnn, f_graph, weight, bias=None):
    """identity logits FC(concat(f_bnn, f_graph))"""
    f_bnn = as_tensor(f_bnn)
    f_graph = as_tensor(f_graph, dtype=f_bnn.dtype)
    x = torch.cat([f_bnn, f_graph], dim=-1)
    if weight.shape[-1] != x.shape[-1]:
        raise ShapeMismatchError('identity head expects features of dim {}, got {}'.format(
            weight.shape[-1], x.shape[-1]))
    return F.linear(x, weight, bias)


def identity_logits(f_bnn, f_graph, weight, bias=None):
    """identity prediction p = softmax(FC(concat(f_bnn, f_graph)))"""
    return torch.softmax(identity_scores(f_bnn, f_graph, weight, bias), dim=-1)


def identity_loss(scores, targets):
    """
    identity cross entropy computed from the logits with log-softmax.

    Parameters
    ----------

    scores : tensor (B, C)
        logits, before softmax
    targets : int tensor (B,)
        true identity indices (the one-hot vectors q)
    """
    targets = torch.as_tensor(targets, dtype=torch.int64)
    return F.cross_entropy(scores, targets, reduction='mean')


def identity_loss_from_proba(p, q):
    """
    identity cross entropy -mean_i q_i . log p_i from probabilities.
    raises ValueError when a true class has zero probability.
    """
    p = as_tensor(p)
    q = as_tensor(q, dtype=p.dtype)
    true_proba = (p * q).sum(dim=-1)
    if bool((true_proba <= 0).any()):
        raise ValueError('zero probability assigned to a true identity')
    return -torch.log(true_proba).mean()


def pairwise_distances(x):
    """euclidean distances between the rows of x, computed from differences"""
    diff = x.unsqueeze(1) - x.unsqueeze(0)
    return (diff ** 2).sum(dim=-1).clamp(min=DISTANCE_EPS).sqrt()


def check_pk_structure(identities):
    ids = torch.as_tensor(identities)
    uniques, counts = torch.unique(ids, return_counts=True)
    if len(uniques) < 2:
        raise BatchStructureError('the batch needs at least 2 identities, got {}'.format(len(uniques)))
    if bool((counts < 2).any()):
        lonely = uniques[counts < 2][0].item()
        raise BatchStructureError('identity {} has a single instance in the batch'.format(lonely))


def triplet_loss(embeddings, identities, margin=DEFAULT_MARGIN, mining='hard'):
    """
    triplet loss with euclidean distances.

    Parameters
    ----------

    embeddings : tensor (B, D)
    identities : int tensor (B,)
        each identity must appear at least twice and there must be at
        least two identities.
    margin : float
    mining : 'hard' or 'all'
        'hard' : mean over anchors of the hinge on the hardest positive
        and the hardest negative.
        'all' : mean of the hinge over all (anchor, positive, negative)
        triplets.
    """
    embeddings = as_tensor(embeddings)
    identities = torch.as_tensor(identities)
    check_pk_structure(identities)
    dist = pairwise_distances(embeddings)
    same = identities.unsqueeze(0) == identities.unsqueeze(1)
    eye = torch.eye(len(identities), dtype=torch.bool)
    positive = same & ~eye
    negative = ~same
    if mining == 'hard':
        hardest_positive = torch.where(positive, dist, torch.full_like(dist, -math.inf)).max(dim=1)[0]
        hardest_negative = torch.where(negative, dist, torch.full_like(dist, math.inf)).min(dim=1)[0]
        return F.relu(hardest_positive - hardest_negative + margin).mean()
    elif mining == 'all':
        # (anchor, positive, negative)
        terms = dist.unsqueeze(2) - dist.unsqueeze(1) + margin
        valid = positive.unsqueeze(2) & negative.unsqueeze(1)
        return F.relu(terms[valid]).mean()
    else:
        raise ValueError('unknown triplet mining : {}'.format(mining))


def _check_identities(identities, centers):
    identities = torch.as_tensor(identities, dtype=torch.int64)
    if bool(((identities < 0) | (identities >= centers.shape[0])).any()):
        bad = identities[(identities < 0) | (identities >= centers.shape[0])][0].item()
        raise ValueError('unknown identity {} (there are {} centers)'.format(bad, centers.shape[0]))
    return identities


def center_loss(embeddings, identities, centers):
    """
    center loss (1 / 2B) sum_i ||x_i - c_{y_i}||^2.
    centers are constant here, they move through `update_centers`.
    """
    embeddings = as_tensor(embeddings)
    identities = _check_identities(identities, centers)
    diff = embeddings - centers.detach()[identities]
    return 0.5 * (diff ** 2).sum(dim=-1).mean()


def update_centers(embeddings, identities, centers, lr=DEFAULT_CENTER_LR):
    """
    move the centers of the identities present in the batch:

        delta_j = sum_{i: y_i = j} (c_j - x_i) / (1 + n_j)
        c_j <- c_j - lr * delta_j

    `centers` is modified in place and returned.
    """
    identities = _check_identities(identities, centers)
    with torch.no_grad():
        x = as_tensor(embeddings, dtype=centers.dtype).detach()
        diff = centers[identities] - x
        delta = torch.zeros_like(centers).index_add_(0, identities, diff)
        counts = torch.zeros(centers.shape[0], dtype=centers.dtype).index_add_(
            0, identities, torch.ones(len(identities), dtype=centers.dtype))
        centers.sub_(lr * delta / (1 + counts).unsqueeze(1))
    return centers


def total_loss(losses, weights):
    """
    weighted sum of the four terms.

    Parameters
    ----------

    losses : dict
        with keys 'l_id', 'l_triplet', 'l_center', 'l_attr'
    weights : LossWeights
    """
    return (weights.identity * losses['l_id'] +
            weights.triplet * losses['l_triplet'] +
            weights.center * losses['l_center'] +
            weights.attribute * losses['l_attr'])


objectives = {
    'attribute': attribute_loss,
    'identity': identity_loss,
    'identity_from_proba': identity_loss_from_proba,
    'triplet': triplet_loss,
    'center': center_loss,
}


def get_loss(loss, objectives=objectives):
    """
    get loss function given a `loss`.
    `loss` can either be a string, and in that case, it will correspond
    the name of the loss. In case the loss has itself parameters, a dict
    can be passed instead of a str, thus `loss` can be a dict with a key
    `name` and a key `params`.

    Parameters
    ----------

    loss : str or dict
    objectives : dict
        available objective functions, keys are names.
    """
    if isinstance(loss, dict):
        name = loss['name']
        params = loss.get('params', {})
        if name not in objectives:
            raise ValueError('unknown loss : {}'.format(name))
        return partial(objectives[name], **params)
    if loss not in objectives:
        raise ValueError('unknown loss : {}'.format(loss))
    return objectives[loss]

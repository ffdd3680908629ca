"""
Finite-difference verification of the analytic gradients.

Each trainable tensor is checked on a random sample of its coordinates
(all of them for small tensors) with central differences

    n = (L(theta + h e_i) - L(theta - h e_i)) / 2h

and the relative error |a - n| / max(1e-8, |a| + |n|) against the
analytic gradient a. The objective is piecewise smooth (leaky relu,
hardest positive/negative selection, hinges): a coordinate whose
perturbation changes any of these selections is not differentiable at
the scale h and is skipped.
"""
import math
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np
import torch

from .common import ConfigError
from .common import rng
from .data import batch_spec
from .data import make_batch
from .data import pk_sample
from .interface import compute_losses
from .interface import forward_backward
from .interface import setup
from .objectives import loss_weights
from .objectives import pairwise_distances

logger = logging.getLogger(__name__)

GradReport = namedtuple('GradReport', [
    'errors', 'step', 'tolerance', 'passed', 'failed', 'checked', 'skipped'])

CORRUPTION_FACTOR = 1.01


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def _mining_pattern(embeddings, identities, loss_params):
    dist = pairwise_distances(embeddings)
    same = identities.unsqueeze(0) == identities.unsqueeze(1)
    eye = torch.eye(len(identities), dtype=torch.bool)
    positive = same & ~eye
    negative = ~same
    if loss_params['mining'] == 'hard':
        hardest_positive = torch.where(positive, dist, torch.full_like(dist, -math.inf)).max(dim=1)
        hardest_negative = torch.where(negative, dist, torch.full_like(dist, math.inf)).min(dim=1)
        hinge = hardest_positive[0] - hardest_negative[0] + loss_params['margin'] > 0
        return [hardest_positive[1], hardest_negative[1], hinge]
    terms = dist.unsqueeze(2) - dist.unsqueeze(1) + loss_params['margin']
    valid = positive.unsqueeze(2) & negative.unsqueeze(1)
    return [terms[valid] > 0]


def evaluate_loss(model, batch, weights, loss_params):
    """
    total loss and the pattern of the non-smooth selections made by the
    forward pass (leaky relu branches, triplet selections and hinges)
    """
    trace = []
    with torch.no_grad():
        losses, outputs = compute_losses(model, batch, weights, loss_params, update_stats=False, trace=trace)
    pattern = []
    if model.graph_reasoning.slope < 1:
        pattern.extend(pre > 0 for pre in trace)
    if weights.triplet > 0:
        pattern.extend(_mining_pattern(outputs.metric_embedding, batch.identities, loss_params))
    return losses['total'].item(), pattern


def _same_pattern(a, b):
    return all(torch.equal(x, y) for x, y in zip(a, b))


def finite_diff_check(model, batch, weights, loss_params, tolerance=1e-5, step=1e-5,
                      fraction=0.05, full_below=200, seed=0, corrupt=None):
    """
    compare analytic and central finite-difference gradients.

    Parameters
    ----------

    model : GPSModel
        must be in 64-bit precision. BNNeck runs in train mode with
        frozen running statistics.
    batch : Batch
    weights : LossWeights
    loss_params : dict
        the `loss` section of the run parameters
    tolerance : float
        maximum relative error allowed
    step : float
        finite-difference step h
    fraction : float
        fraction of coordinates checked per tensor
    full_below : int
        tensors with fewer entries are fully checked
    seed : int
        coordinate sampling seed
    corrupt : str or None
        name of a tensor whose analytic gradient is multiplied by 1.01
        before comparison

    Returns
    -------

    GradReport
    """
    if model.dtype != torch.float64:
        raise ConfigError('finite differences need 64-bit precision, the model is {}'.format(model.dtype))
    model.train()
    _, grads = forward_backward(model, batch, weights, loss_params, update_stats=False)
    if corrupt is not None:
        if corrupt not in grads:
            raise ConfigError('cannot corrupt {} : not a trainable tensor ({})'.format(corrupt, list(grads)))
        grads[corrupt] = grads[corrupt] * CORRUPTION_FACTOR
    _, base_pattern = evaluate_loss(model, batch, weights, loss_params)
    parameters = dict(model.named_parameters())
    errors, checked, skipped = OrderedDict(), OrderedDict(), OrderedDict()
    for name, grad in grads.items():
        flat = parameters[name].data.view(-1)
        n = flat.numel()
        if n < full_below:
            coords = np.arange(n)
        else:
            count = max(1, int(math.ceil(fraction * n)))
            coords = np.sort(rng(seed, 'gradcheck.' + name).choice(n, size=count, replace=False))
        analytic = grad.detach().reshape(-1)
        worst = 0.
        nb_skipped = 0
        for i in coords:
            orig = flat[i].item()
            flat[i] = orig + step
            plus, plus_pattern = evaluate_loss(model, batch, weights, loss_params)
            flat[i] = orig - step
            minus, minus_pattern = evaluate_loss(model, batch, weights, loss_params)
            flat[i] = orig
            if not (_same_pattern(plus_pattern, base_pattern) and _same_pattern(minus_pattern, base_pattern)):
                nb_skipped += 1
                continue
            numeric = (plus - minus) / (2 * step)
            worst = max(worst, relative_error(analytic[i].item(), numeric))
        errors[name] = worst
        checked[name] = len(coords) - nb_skipped
        skipped[name] = nb_skipped
        logger.debug('{}: max relative error {:.3e} over {} coordinates ({} skipped)'.format(
            name, worst, checked[name], nb_skipped))
    failed = [name for name, e in errors.items() if e > tolerance]
    return GradReport(errors=errors, step=step, tolerance=tolerance, passed=len(failed) == 0,
                      failed=failed, checked=checked, skipped=skipped)


def gradient_check(params, dataset=None):
    """
    run the finite-difference check of resolved run parameters on one
    P x K batch of the training split.
    """
    gc = params['gradcheck']
    run = setup(params, dataset=dataset)
    spec = batch_spec(gc['P'], gc['K'])
    indices = pk_sample(run.train_annotations.identities, spec, rng(params['seed'], 'gradcheck.batch'))[0]
    batch = make_batch(run.dataset, run.split.train[indices], run.train_annotations.identities[indices],
                       dtype=run.model.dtype)
    report = finite_diff_check(
        run.model, batch,
        weights=loss_weights(**params['loss']['weights']),
        loss_params=params['loss'],
        tolerance=gc['tolerance'],
        step=gc['step'],
        fraction=gc['fraction'],
        full_below=gc['full_below'],
        seed=params['seed'],
        corrupt=gc['corrupt'])
    for name, error in report.errors.items():
        logger.info('{:<32} max relative error {:.3e} {}'.format(
            name, error, 'FAIL' if name in report.failed else 'ok'))
    return report

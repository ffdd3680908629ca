"""
Feature map operations: part mask preprocessing (resize to the feature
map resolution, then L1 normalization), masked part pooling, global
average pooling, the BNNeck normalization and the projection of part
features to the node dimension.

Masks are numpy arrays (they are constant data). Pooling, BNNeck and
projection operate on torch tensors so that they take part in the
reverse-mode differentiation of the training objective; numpy inputs are
accepted and converted to float64 tensors.

Feature maps have shape (..., W, H, D), masks have shape (..., W, H).
"""
import logging
from collections import namedtuple

import numpy as np
import torch
from skimage.transform import downscale_local_mean

from .common import ShapeMismatchError
from .common import as_tensor
from .common import check_finite_or_exception

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

PartMaskSet = namedtuple('PartMaskSet', ['raw', 'normalized', 'absent'])


def l1_normalize(mask):
    """
    L1-normalize a nonnegative mask.

    Returns
    -------

    tuple (normalized mask, absent)
        when the mask sums to zero it is returned unchanged and `absent`
        is True.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if (mask < 0).any():
        raise ValueError('mask has negative entries')
    total = mask.sum()
    if total == 0:
        return mask.copy(), True
    return mask / total, False


def resize_mask(mask, target):
    """
    Area-average resize of a 2D mask to `target` = (W, H).

    Integer downscaling factors go through skimage's block mean; other
    size ratios use the exact overlap of source and target cells.
    """
    mask = np.asarray(mask, dtype=np.float64)
    w, h = mask.shape
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError('target size must be at least 1x1, got {}'.format(target))
    if w < 1 or h < 1:
        raise ValueError('mask size must be at least 1x1, got {}'.format(mask.shape))
    if (w, h) == (tw, th):
        return mask
    if w % tw == 0 and h % th == 0:
        return downscale_local_mean(mask, (w // tw, h // th))
    return _overlap_matrix(w, tw).dot(mask).dot(_overlap_matrix(h, th).T)


def _overlap_matrix(n_src, n_dst):
    # row i averages the source cells covered by target cell i
    weights = np.zeros((n_dst, n_src))
    scale = n_src / float(n_dst)
    for i in range(n_dst):
        start, stop = i * scale, (i + 1) * scale
        for j in range(int(np.floor(start)), min(int(np.ceil(stop)), n_src)):
            weights[i, j] = min(stop, j + 1) - max(start, j)
    return weights / scale


def prepare_masks(raw, target):
    """
    Resize then L1-normalize every part mask.

    Parameters
    ----------

    raw : array (N_P, w, h)
        nonnegative part masks at source resolution
    target : tuple (W, H)
        feature map resolution

    Returns
    -------

    PartMaskSet
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3:
        raise ShapeMismatchError('masks must have shape (N_P, w, h), got {}'.format(raw.shape))
    if raw.shape[1:] != tuple(target):
        logger.debug('Resizing masks from {} to {} by area averaging'.format(raw.shape[1:], tuple(target)))
    normalized = []
    absent = []
    for mask in raw:
        m, a = l1_normalize(resize_mask(mask, target))
        normalized.append(m)
        absent.append(a)
    return PartMaskSet(raw=raw, normalized=np.array(normalized), absent=np.array(absent))


def masked_pool(F, mask):
    """
    Masked pooling of a feature map: sum_i h_i f_i over all W x H locations.

    Parameters
    ----------

    F : tensor (..., W, H, D)
    mask : tensor (..., W, H)
        L1-normalized (or all-zero) mask. Masks of several parts can be
        pooled at once with shape (..., N_P, W, H), giving (..., N_P, D).
    """
    F = as_tensor(F)
    mask = as_tensor(mask, dtype=F.dtype)
    if F.dim() < 3 or mask.dim() < 2 or tuple(mask.shape[-2:]) != tuple(F.shape[-3:-1]):
        raise ShapeMismatchError('mask of shape {} does not match feature map of shape {}'.format(
            tuple(mask.shape), tuple(F.shape)))
    if mask.dim() == F.dim():
        # several masks per feature map
        return torch.einsum('...whd,...kwh->...kd', F, mask)
    return torch.einsum('...whd,...wh->...d', F, mask)


def global_pool(F):
    """global average pooling: per-channel mean over the W x H locations"""
    F = as_tensor(F)
    return F.mean(dim=(-3, -2))


def bnneck(x, gamma, running_mean, running_var, training,
           momentum=BN_MOMENTUM, eps=BN_EPS, update_stats=True):
    """
    BNNeck: per-channel standardization scaled by `gamma`, without shift.

    Parameters
    ----------

    x : tensor (B, D)
    gamma : tensor (D,)
    running_mean, running_var : tensor (D,)
        updated in place in training mode when `update_stats` is True
        (unbiased batch variance, exponential moving average of rate
        `momentum`).
    training : bool
        standardize with batch statistics (biased variance) if True,
        with running statistics otherwise. Needs B >= 2.
    """
    x = as_tensor(x)
    if x.dim() != 2 or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatchError('bnneck expects (B, {}), got {}'.format(gamma.shape[0], tuple(x.shape)))
    if training:
        if x.shape[0] < 2:
            raise ValueError('bnneck in train mode needs a batch of at least 2, got {}'.format(x.shape[0]))
        mean = x.mean(dim=0)
        var = x.var(dim=0, unbiased=False)
        if update_stats:
            with torch.no_grad():
                unbiased = var * x.shape[0] / (x.shape[0] - 1)
                running_mean.mul_(1 - momentum).add_(momentum * mean.detach())
                running_var.mul_(1 - momentum).add_(momentum * unbiased.detach())
    else:
        mean, var = running_mean, running_var
    return gamma * (x - mean) / torch.sqrt(var + eps)


def project_parts(pooled, projection):
    """
    project pooled part features (..., N_P, D) to (..., N_P, D_w).

    `projection` is either one shared (D_w, D) matrix or a per-part
    (N_P, D_w, D) stack. No bias.
    """
    pooled = as_tensor(pooled)
    projection = as_tensor(projection, dtype=pooled.dtype)
    if projection.dim() == 2:
        if projection.shape[1] != pooled.shape[-1]:
            raise ShapeMismatchError('projection of shape {} cannot be applied to features of dim {}'.format(
                tuple(projection.shape), pooled.shape[-1]))
        return torch.matmul(pooled, projection.t())
    if projection.dim() == 3 and projection.shape[0] == pooled.shape[-2] \
            and projection.shape[2] == pooled.shape[-1]:
        return torch.einsum('kwd,...kd->...kw', projection, pooled)
    raise ShapeMismatchError('projection of shape {} does not match part features of shape {}'.format(
        tuple(projection.shape), tuple(pooled.shape)))


def check_feature_map(F):
    """check that a feature map is a finite (W, H, D) array with W, H, D >= 1"""
    F = np.asarray(F)
    if F.ndim != 3 or min(F.shape) < 1:
        raise ShapeMismatchError('feature map must have shape (W, H, D), got {}'.format(F.shape))
    check_finite_or_exception(F, 'feature map')
    return F

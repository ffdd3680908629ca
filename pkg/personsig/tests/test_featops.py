import pytest
import numpy as np
import torch

from personsig.common import ShapeMismatchError
from personsig.featops import bnneck
from personsig.featops import global_pool
from personsig.featops import l1_normalize
from personsig.featops import masked_pool
from personsig.featops import prepare_masks
from personsig.featops import project_parts
from personsig.featops import resize_mask


def test_l1_normalize():
    m, absent = l1_normalize(np.zeros((3, 2)))
    assert absent
    assert (m == 0).all()
    one_hot = np.zeros((3, 2))
    one_hot[1, 1] = 1
    m, absent = l1_normalize(one_hot)
    assert not absent
    assert np.array_equal(m, one_hot)
    m, _ = l1_normalize([[1, 1], [2, 0]])
    assert np.allclose(m, [[0.25, 0.25], [0.5, 0]])
    with pytest.raises(ValueError):
        l1_normalize([[1, -1]])


def test_resize_mask():
    rng = np.random.RandomState(42)
    mask = rng.uniform(size=(4, 3))
    assert np.array_equal(resize_mask(mask, (4, 3)), mask)
    assert np.allclose(resize_mask(np.full((4, 4), 3.), (2, 2)), 3.)
    checkerboard = np.indices((4, 4)).sum(axis=0) % 2
    assert np.allclose(resize_mask(checkerboard, (2, 2)), 0.5)
    with pytest.raises(ValueError):
        resize_mask(mask, (0, 2))


def test_resize_mask_non_integer_ratio_preserves_mean():
    rng = np.random.RandomState(1)
    mask = rng.uniform(size=(5, 7))
    resized = resize_mask(mask, (2, 3))
    assert resized.shape == (2, 3)
    assert np.isclose(resized.mean(), mask.mean())


def test_prepare_masks():
    raw = np.zeros((2, 4, 4))
    raw[0, :2] = 1
    masks = prepare_masks(raw, (2, 2))
    assert masks.normalized.shape == (2, 2, 2)
    assert masks.absent.tolist() == [False, True]
    assert np.isclose(masks.normalized[0].sum(), 1, atol=1e-9)
    assert masks.normalized[1].sum() == 0


def test_masked_pool_examples():
    rng = np.random.RandomState(42)
    F = rng.normal(size=(3, 2, 4))
    one_hot = np.zeros((3, 2))
    one_hot[2, 1] = 1
    assert np.array_equal(masked_pool(F, one_hot).numpy(), F[2, 1])

    mask = np.array([[0.5, 0.5], [0, 0], [0, 0]])
    expected = np.zeros(4)
    for w in range(3):
        for h in range(2):
            expected += mask[w, h] * F[w, h]
    assert np.abs(masked_pool(F, mask).numpy() - expected).max() <= 1e-12
    assert np.allclose(expected, (F[0, 0] + F[0, 1]) / 2)

    assert (masked_pool(F, np.zeros((3, 2))).numpy() == 0).all()


def test_masked_pool_uniform_is_global_pool():
    rng = np.random.RandomState(42)
    F = rng.normal(size=(5, 3, 6))
    uniform = np.full((5, 3), 1. / 15)
    assert np.abs(masked_pool(F, uniform).numpy() - global_pool(F).numpy()).max() <= 1e-12
    assert np.allclose(global_pool(np.full((2, 2, 3), 7.)).numpy(), 7.)
    single = rng.normal(size=(1, 1, 4))
    assert np.allclose(global_pool(single).numpy(), single[0, 0])


def test_masked_pool_properties():
    rng = np.random.RandomState(0)
    F1 = rng.normal(size=(4, 3, 5))
    F2 = rng.normal(size=(4, 3, 5))
    mask, _ = l1_normalize(rng.uniform(size=(4, 3)))
    pooled = masked_pool(F1, mask).numpy()
    assert (pooled >= F1.min(axis=(0, 1)) - 1e-12).all()
    assert (pooled <= F1.max(axis=(0, 1)) + 1e-12).all()
    combined = masked_pool(2 * F1 - 3 * F2, mask).numpy()
    assert np.abs(combined - (2 * pooled - 3 * masked_pool(F2, mask).numpy())).max() <= 1e-10
    perm = rng.permutation(12)
    F_perm = F1.reshape((12, 5))[perm].reshape((4, 3, 5))
    mask_perm = mask.reshape(12)[perm].reshape((4, 3))
    assert np.allclose(masked_pool(F_perm, mask_perm).numpy(), pooled)


def test_masked_pool_batched_parts():
    rng = np.random.RandomState(0)
    F = rng.normal(size=(2, 4, 3, 5))
    masks = rng.uniform(size=(2, 3, 4, 3))
    pooled = masked_pool(F, masks).numpy()
    assert pooled.shape == (2, 3, 5)
    assert np.allclose(pooled[1, 2], masked_pool(F[1], masks[1, 2]).numpy())


def test_masked_pool_dimension_mismatch():
    with pytest.raises(ShapeMismatchError):
        masked_pool(np.zeros((3, 2, 4)), np.zeros((2, 3)))


def _bn_state(d):
    return (torch.ones(d, dtype=torch.float64), torch.zeros(d, dtype=torch.float64),
            torch.ones(d, dtype=torch.float64))


def test_bnneck_train_standardizes():
    rng = np.random.RandomState(42)
    x = torch.from_numpy(rng.normal(5, 30, size=(16, 3)))
    gamma, mean, var = _bn_state(3)
    y = bnneck(x, gamma, mean, var, training=True)
    assert np.abs(y.mean(dim=0).numpy()).max() <= 1e-6
    assert np.abs(y.var(dim=0, unbiased=False).numpy() - 1).max() <= 1e-6


def test_bnneck_two_samples():
    gamma, mean, var = _bn_state(1)
    y = bnneck(torch.tensor([[1.], [3.]], dtype=torch.float64), gamma, mean, var, training=True)
    assert np.allclose(y.numpy().ravel(), [-1, 1], atol=1e-4)
    assert np.isclose(mean.item(), 0.2)
    assert np.isclose(var.item(), 0.9 + 0.1 * 2)


def test_bnneck_eval_identity():
    rng = np.random.RandomState(42)
    x = torch.from_numpy(rng.normal(size=(4, 3)))
    gamma, mean, var = _bn_state(3)
    y = bnneck(x, gamma, mean, var, training=False, eps=0.)
    assert np.allclose(y.numpy(), x.numpy())
    assert (mean == 0).all()


def test_bnneck_shift_invariance():
    rng = np.random.RandomState(42)
    x = rng.normal(size=(8, 3))
    shift = rng.normal(size=(1, 3)) * 10
    gamma, mean, var = _bn_state(3)
    y1 = bnneck(torch.from_numpy(x), gamma, mean, var, training=True, update_stats=False)
    y2 = bnneck(torch.from_numpy(x + shift), gamma, mean, var, training=True, update_stats=False)
    assert np.abs(y1.numpy() - y2.numpy()).max() <= 1e-6


def test_bnneck_needs_two_samples_in_train_mode():
    gamma, mean, var = _bn_state(2)
    with pytest.raises(ValueError):
        bnneck(torch.zeros((1, 2), dtype=torch.float64), gamma, mean, var, training=True)


def test_project_parts():
    rng = np.random.RandomState(42)
    pooled = rng.normal(size=(5, 4))
    assert np.allclose(project_parts(pooled, np.eye(4)).numpy(), pooled)
    assert (project_parts(pooled, np.zeros((3, 4))).numpy() == 0).all()
    P = rng.normal(size=(3, 4))
    expected = np.array([[sum(P[i, j] * v[j] for j in range(4)) for i in range(3)] for v in pooled])
    assert np.abs(project_parts(pooled, P).numpy() - expected).max() <= 1e-12
    per_part = rng.normal(size=(5, 3, 4))
    out = project_parts(pooled, per_part).numpy()
    assert np.allclose(out[2], per_part[2].dot(pooled[2]))
    with pytest.raises(ShapeMismatchError):
        project_parts(pooled, np.zeros((3, 5)))

import os

import pytest
import numpy as np
from sklearn.neighbors import KNeighborsClassifier

from personsig.common import ConfigError
from personsig.featops import global_pool
from personsig.featops import masked_pool
from personsig.featops import prepare_masks
from personsig.ontology import compute_stats
from personsig.synthgen import generate
from personsig.synthgen import part_regions
from personsig.synthgen import SynthConfig
from personsig.synthgen import target_prevalences
from personsig.synthgen import write_dataset
from personsig.utils import read_json


def test_generate_is_deterministic():
    a = generate(SynthConfig(identities=4, images_per_identity=3, seed=3))
    b = generate(SynthConfig(identities=4, images_per_identity=3, seed=3))
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.annotations.labels, b.annotations.labels)
    c = generate(SynthConfig(identities=4, images_per_identity=3, seed=4))
    assert not np.array_equal(a.features, c.features)


def test_generate_written_files_are_identical(tmpdir):
    config = SynthConfig(identities=3, images_per_identity=2, seed=7)
    write_dataset(generate(config), str(tmpdir.join('a')))
    write_dataset(generate(config), str(tmpdir.join('b')))
    manifest_a = read_json(str(tmpdir.join('a', 'manifest.json')))
    manifest_b = read_json(str(tmpdir.join('b', 'manifest.json')))
    assert manifest_a['files'] == manifest_b['files']


def test_generate_default_prevalences():
    dataset = generate(SynthConfig())
    assert dataset.annotations.size == 200
    assert dataset.features.shape == (200, 8, 4, 32)
    stats = compute_stats(dataset.annotations)
    assert np.abs(stats.prevalence - target_prevalences(8)).max() <= 0.1


def test_generate_noise_free_images_are_identical():
    dataset = generate(SynthConfig(identities=3, images_per_identity=4, attribute_noise=0, feature_noise=0))
    for y in range(3):
        rows = np.flatnonzero(dataset.annotations.identities == y)
        for i in rows[1:]:
            assert np.array_equal(dataset.features[i], dataset.features[rows[0]])
            assert np.array_equal(dataset.annotations.labels[i], dataset.annotations.labels[rows[0]])
        assert np.array_equal(dataset.annotations.labels[rows[0]], dataset.identity_attributes[y])


def test_generate_noise_free_is_separable():
    dataset = generate(SynthConfig(attribute_noise=0, feature_noise=0))
    X = global_pool(dataset.features).numpy()
    y = dataset.annotations.identities
    train = np.arange(len(y)) % 2 == 0
    clf = KNeighborsClassifier(n_neighbors=1).fit(X[train], y[train])
    assert (clf.predict(X[~train]) == y[~train]).all()


def test_generate_part_locality():
    config = SynthConfig(identities=2, images_per_identity=2)
    dataset = generate(config)
    regions = part_regions(config)
    masks = prepare_masks(dataset.masks[0], (config.width, config.height)).normalized
    F = dataset.features[0]
    pooled = masked_pool(F, masks).numpy()
    for k in range(1, config.n_parts):
        F_zero = F * (1 - regions[k])[:, :, None]
        pooled_zero = masked_pool(F_zero, masks).numpy()
        for j in range(1, config.n_parts):
            if j != k:
                assert np.array_equal(pooled_zero[j], pooled[j])
        assert not np.allclose(pooled_zero[k], pooled[k])


def test_generate_masks_at_mask_scale():
    config = SynthConfig(identities=2, images_per_identity=2, mask_scale=3)
    dataset = generate(config)
    assert dataset.masks.shape == (4, 5, 24, 12)
    assert np.array_equal(dataset.masks[0, :, ::3, ::3], part_regions(config))


def test_write_dataset_file_count(tmpdir):
    config = SynthConfig(identities=3, images_per_identity=4)
    outdir = str(tmpdir.join('data'))
    files = write_dataset(generate(config), outdir)
    assert len(files) == 12 * 2 + 2
    manifest = read_json(os.path.join(outdir, 'manifest.json'))
    assert len(manifest['files']) == 12 * 2 + 2
    assert manifest['ground_truth']['identities'] == [1, 2, 3]
    for f in files:
        assert os.path.exists(os.path.join(outdir, f))


def test_check_config():
    with pytest.raises(ConfigError):
        generate(SynthConfig(identities=1))
    with pytest.raises(ConfigError):
        generate(SynthConfig(images_per_identity=1))
    with pytest.raises(ConfigError):
        generate(SynthConfig(n_parts=4))
    with pytest.raises(ConfigError):
        generate(SynthConfig(attribute_noise=1.))
    with pytest.raises(ConfigError):
        generate(SynthConfig(channels=8))


def test_default_attribute_channels_separate_at_their_mean():
    # a bias-free linear read-out thresholds each standardized channel at its mean
    dataset = generate(SynthConfig())
    pooled = global_pool(dataset.features).numpy()
    truth = dataset.identity_attributes[dataset.annotations.identities]
    for j in range(dataset.config.n_attributes):
        channel = pooled[:, j]
        predicted = (channel > channel.mean()).astype(np.uint8)
        assert (predicted == truth[:, j]).mean() >= 0.97

"""
Deterministic synthetic person dataset.

Every identity owns a fixed binary attribute vector and a random identity
vector. The feature map of one of its images is

    F = sum over present attributes j of a channel-j template placed on
        the region of the part j is attached to
      + the identity vector spread over the foreground
      + gaussian noise

Attribute j uses channel j only, so attribute signals never collide, and
identity vectors live on the remaining channels. Part masks are fixed
rectangles: the columns inside the background margin form the foreground,
and the rows are split in head/upper/lower/arm bands. Masks are written
at `mask_scale` times the feature resolution. Labels are the identity's
attributes flipped with probability `attribute_noise`.

The attribute classifier has no bias, so it thresholds the pooled
channel at its mean. With the defaults the pooled signal of a one-band
attribute (3 * 6 / 32) stays above 12 pooled noise deviations
(0.25 / sqrt(32)), which keeps the rarest attribute well separated from
that threshold.
"""
import os
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np

from .common import ConfigError
from .common import rng
from .common import sub_rng
from .ontology import CANONICAL_PARTS
from .ontology import annotations_from_arrays
from .ontology import attribute_schema
from .ontology import build_attachment
from .ontology import part_schema
from .ontology import schema_to_dict
from .ontology import write_annotations
from .serialization import write_feature_map
from .serialization import write_masks
from .utils import mkdir_path
from .utils import sha256_file
from .utils import write_json

logger = logging.getLogger(__name__)

SynthConfig = namedtuple('SynthConfig', [
    'identities', 'images_per_identity', 'n_attributes', 'n_parts',
    'width', 'height', 'channels', 'attribute_noise', 'feature_noise', 'seed',
    'cameras', 'mask_scale', 'attribute_strength', 'identity_strength', 'background_margin'])
SynthConfig.__new__.__defaults__ = (
    20, 10, 8, len(CANONICAL_PARTS), 8, 4, 32, 0.05, 0.25, 0, 6, 2, 3.0, 1.0, 1)

SyntheticDataset = namedtuple('SyntheticDataset', [
    'config', 'annotations', 'attachment', 'features', 'masks',
    'identity_attributes', 'prevalences'])

MIN_PREVALENCE = 0.2
MAX_PREVALENCE = 0.7


def check_config(config):
    """raise ConfigError if `config` cannot produce a PK-sampleable dataset"""
    c = config
    if c.identities < 2:
        raise ConfigError('synthetic data needs at least 2 identities, got {}'.format(c.identities))
    if c.images_per_identity < 2:
        raise ConfigError('synthetic data needs at least 2 images per identity, got {}'.format(
            c.images_per_identity))
    if c.n_parts != len(CANONICAL_PARTS):
        raise ConfigError('the number of parts is fixed to {}'.format(len(CANONICAL_PARTS)))
    if c.n_attributes < 1:
        raise ConfigError('at least one attribute is needed')
    if c.channels < c.n_attributes + 1:
        raise ConfigError('{} channels cannot hold {} attribute channels plus identity channels'.format(
            c.channels, c.n_attributes))
    if min(c.width, c.height) < 1 or c.mask_scale < 1 or c.cameras < 1:
        raise ConfigError('width, height, mask_scale and cameras must be >= 1')
    if not 0 <= c.attribute_noise < 1:
        raise ConfigError('attribute_noise must be in [0, 1), got {}'.format(c.attribute_noise))
    if c.feature_noise < 0:
        raise ConfigError('feature_noise must be >= 0, got {}'.format(c.feature_noise))
    if not 0 <= 2 * c.background_margin < c.width:
        raise ConfigError('background_margin {} leaves no foreground in width {}'.format(
            c.background_margin, c.width))


def attribute_names(n_attributes):
    return ['attr_{:02d}'.format(j) for j in range(n_attributes)]


def synthetic_attachment(n_attributes):
    """attach attribute j to part j mod N_P"""
    names = attribute_names(n_attributes)
    spec = OrderedDict((part, []) for part in CANONICAL_PARTS)
    for j, name in enumerate(names):
        spec[CANONICAL_PARTS[j % len(CANONICAL_PARTS)]].append(name)
    return build_attachment(part_schema(), attribute_schema(names), spec)


def part_regions(config):
    """
    binary (N_P, W, H) regions at feature resolution: foreground, then
    the head/upper/lower/arm row bands inside the foreground columns.
    """
    c = config
    regions = np.zeros((c.n_parts, c.width, c.height))
    columns = slice(c.background_margin, c.width - c.background_margin)
    regions[0, columns, :] = 1
    for k, rows in enumerate(np.array_split(np.arange(c.height), c.n_parts - 1), start=1):
        regions[k, columns, rows] = 1
    return regions


def target_prevalences(n_attributes):
    return np.linspace(MIN_PREVALENCE, MAX_PREVALENCE, n_attributes)


def generate(config=SynthConfig()):
    """
    Generate the dataset in memory. Fully determined by `config.seed`.

    Returns
    -------

    SyntheticDataset
        features : (N, W, H, D) float64 holding float32-representable values
        masks : (N, N_P, W * mask_scale, H * mask_scale) binary raw masks
    """
    check_config(config)
    c = config
    attachment = synthetic_attachment(c.n_attributes)
    part_of = attachment.attach.argmax(axis=0)
    regions = part_regions(c)
    raw_masks = np.kron(regions, np.ones((c.mask_scale, c.mask_scale)))

    prevalences = target_prevalences(c.n_attributes)
    attr_rng = rng(c.seed, 'synth.attributes')
    identity_attributes = np.zeros((c.identities, c.n_attributes), dtype=np.uint8)
    for j, p in enumerate(prevalences):
        carriers = attr_rng.permutation(c.identities)[:int(round(p * c.identities))]
        identity_attributes[carriers, j] = 1

    id_rng = rng(c.seed, 'synth.identities')
    identity_vectors = np.zeros((c.identities, c.channels))
    identity_vectors[:, c.n_attributes:] = id_rng.standard_normal(
        (c.identities, c.channels - c.n_attributes))

    templates = np.zeros((c.n_attributes, c.width, c.height, c.channels))
    for j in range(c.n_attributes):
        templates[j, :, :, j] = c.attribute_strength * regions[part_of[j]]

    n = c.identities * c.images_per_identity
    features = np.empty((n, c.width, c.height, c.channels))
    labels = np.empty((n, c.n_attributes), dtype=np.uint8)
    image_ids, identities, cameras = [], [], []
    for y in range(c.identities):
        base = np.tensordot(identity_attributes[y].astype(np.float64), templates, axes=1)
        base += c.identity_strength * regions[0][:, :, None] * identity_vectors[y][None, None, :]
        for m in range(c.images_per_identity):
            index = y * c.images_per_identity + m
            image_rng = sub_rng(c.seed, 'synth.images', index)
            noise = image_rng.standard_normal(base.shape)
            flips = image_rng.uniform(size=c.n_attributes) < c.attribute_noise
            features[index] = base + c.feature_noise * noise
            labels[index] = np.where(flips, 1 - identity_attributes[y], identity_attributes[y])
            camera = m % c.cameras
            image_ids.append('{:04d}_c{}_{:03d}'.format(y + 1, camera, m))
            identities.append(y + 1)
            cameras.append(camera)
    # what the files hold
    features = features.astype(np.float32).astype(np.float64)
    annotations = annotations_from_arrays(
        attribute_schema(attachment.attribute_names), image_ids, identities, cameras, labels)
    masks = np.repeat(raw_masks[None], n, axis=0)
    logger.info('Generated {} images of {} identities ({} attributes, maps {}x{}x{})'.format(
        n, c.identities, c.n_attributes, c.width, c.height, c.channels))
    return SyntheticDataset(
        config=c,
        annotations=annotations,
        attachment=attachment,
        features=features,
        masks=masks,
        identity_attributes=identity_attributes,
        prevalences=prevalences)


def write_dataset(dataset, outdir):
    """
    write a dataset directory:

        annotations.csv, schema.json, features/<image_id>.gpsf,
        masks/<image_id>.gpsm

    and a manifest.json listing every written file with its sha256, the
    ground-truth identity attributes and the target prevalences.

    Returns
    -------

    list of written file paths relative to `outdir` (manifest excluded)
    """
    mkdir_path(os.path.join(outdir, 'features'))
    mkdir_path(os.path.join(outdir, 'masks'))
    files = ['annotations.csv', 'schema.json']
    write_annotations(os.path.join(outdir, 'annotations.csv'), dataset.annotations)
    write_json(schema_to_dict(dataset.attachment), os.path.join(outdir, 'schema.json'))
    for i, image_id in enumerate(dataset.annotations.image_ids):
        feature_file = os.path.join('features', image_id + '.gpsf')
        mask_file = os.path.join('masks', image_id + '.gpsm')
        write_feature_map(os.path.join(outdir, feature_file), dataset.features[i])
        write_masks(os.path.join(outdir, mask_file), dataset.masks[i])
        files.extend([feature_file, mask_file])
    manifest = OrderedDict([
        ('config', dataset.config._asdict()),
        ('files', OrderedDict((f, sha256_file(os.path.join(outdir, f))) for f in files)),
        ('ground_truth', OrderedDict([
            ('identities', [int(i) + 1 for i in range(len(dataset.identity_attributes))]),
            ('attributes', dataset.identity_attributes.tolist()),
            ('target_prevalences', dataset.prevalences.tolist()),
        ])),
    ])
    write_json(manifest, os.path.join(outdir, 'manifest.json'))
    logger.info('Wrote {} files into {}'.format(len(files), outdir))
    return files

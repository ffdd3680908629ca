"""
This module contains common functions for data processing: loading a
dataset directory, the held-out split, batch assembly and the P x K
identity sampler used by the triplet loss.

A dataset directory holds

    annotations.csv               image_id,identity,camera,<attributes...>
    schema.json                   attributes, parts, attachment
    features/<image_id>.gpsf      feature maps (W, H, D)
    masks/<image_id>.gpsm         raw part masks (N_P, w, h)
    manifest.json (optional)      ground truth of synthetic datasets
"""
import os
import logging
from collections import namedtuple

import numpy as np
import torch

from .common import BatchStructureError
from .common import DatasetError
from .common import as_tensor
from .featops import check_feature_map
from .featops import prepare_masks
from .ontology import load_annotations
from .ontology import load_schema
from .serialization import read_feature_map
from .serialization import read_masks
from .utils import read_json

logger = logging.getLogger(__name__)

Dataset = namedtuple('Dataset', [
    'annotations', 'attachment', 'features', 'masks', 'absent', 'ground_truth'])
Split = namedtuple('Split', ['train', 'query', 'gallery'])
Batch = namedtuple('Batch', ['features', 'masks', 'labels', 'identities'])
BatchSpec = namedtuple('BatchSpec', ['P', 'K'])


def batch_spec(P, K):
    if P < 2 or K < 2:
        raise BatchStructureError('a PK batch needs P >= 2 and K >= 2, got P={}, K={}'.format(P, K))
    return BatchSpec(P=int(P), K=int(K))


def load_dataset(directory, schema_path=None):
    """
    load a dataset directory into memory. Masks are resized to the
    feature map resolution and L1-normalized.

    Parameters
    ----------

    directory : str
    schema_path : str or None
        defaults to `directory`/schema.json

    Returns
    -------

    Dataset
    """
    if not os.path.isdir(directory):
        raise DatasetError('dataset directory not found : {}'.format(directory))
    schema_path = schema_path or os.path.join(directory, 'schema.json')
    attrs, _, attachment = load_schema(schema_path)
    annotations = load_annotations(os.path.join(directory, 'annotations.csv'), attrs)
    features, masks = [], []
    for image_id in annotations.image_ids:
        feature_file = os.path.join(directory, 'features', image_id + '.gpsf')
        mask_file = os.path.join(directory, 'masks', image_id + '.gpsm')
        for f in (feature_file, mask_file):
            if not os.path.exists(f):
                raise DatasetError('missing file : {}'.format(f))
        features.append(check_feature_map(read_feature_map(feature_file)))
        masks.append(read_masks(mask_file))
    shapes = set(f.shape for f in features)
    if len(shapes) != 1:
        raise DatasetError('feature maps of {} have different shapes : {}'.format(directory, sorted(shapes)))
    ground_truth = None
    manifest = os.path.join(directory, 'manifest.json')
    if os.path.exists(manifest):
        truth = read_json(manifest).get('ground_truth')
        if truth:
            ground_truth = {int(pid): np.array(attrs_, dtype=np.uint8)
                            for pid, attrs_ in zip(truth['identities'], truth['attributes'])}
    return make_dataset(annotations, attachment, np.array(features), masks, ground_truth)


def make_dataset(annotations, attachment, features, raw_masks, ground_truth=None):
    """build a Dataset from in-memory arrays, preparing the masks"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 4 or features.shape[0] != annotations.size:
        raise DatasetError('expected {} feature maps, got array of shape {}'.format(
            annotations.size, features.shape))
    n_parts = len(attachment.part_names)
    target = features.shape[1:3]
    masks, absent = [], []
    for i, raw in enumerate(raw_masks):
        if np.shape(raw)[0] != n_parts:
            raise DatasetError('image {} has {} masks, expected {}'.format(
                annotations.image_ids[i], np.shape(raw)[0], n_parts))
        part_masks = prepare_masks(raw, target)
        masks.append(part_masks.normalized)
        absent.append(part_masks.absent)
    if np.shape(raw_masks[0])[1:] != tuple(target):
        logger.info('Part masks resized from {} to {} by area averaging'.format(
            np.shape(raw_masks[0])[1:], tuple(target)))
    absent = np.array(absent)
    if absent.any():
        logger.info('{} absent part masks (zero part features)'.format(int(absent.sum())))
    return Dataset(annotations=annotations, attachment=attachment, features=features,
                   masks=np.array(masks), absent=absent, ground_truth=ground_truth)


def split_dataset(annotations, test_images_per_identity):
    """
    hold out the last `test_images_per_identity` images (file order) of
    each identity. The first held-out image of an identity is a query,
    the other ones go to the gallery.

    Returns
    -------

    Split of index arrays
    """
    t = int(test_images_per_identity)
    train, query, gallery = [], [], []
    for pid in np.unique(annotations.identities):
        indices = np.flatnonzero(annotations.identities == pid)
        if len(indices) <= t:
            raise DatasetError('identity {} has {} images, cannot hold out {}'.format(
                annotations.original_identities[indices[0]], len(indices), t))
        cut = len(indices) - t
        train.extend(indices[:cut])
        if t > 0:
            query.append(indices[cut])
            gallery.extend(indices[cut + 1:])
    return Split(train=np.array(train, dtype=np.int64),
                 query=np.array(query, dtype=np.int64),
                 gallery=np.array(gallery, dtype=np.int64))


def make_batch(dataset, indices, identities, dtype=torch.float64):
    """
    assemble the tensors of the images `indices`.

    `identities` are the class indices used by the identity head,
    aligned with `indices`.
    """
    indices = np.asarray(indices, dtype=np.int64)
    return Batch(
        features=as_tensor(dataset.features[indices], dtype=dtype),
        masks=as_tensor(dataset.masks[indices], dtype=dtype),
        labels=as_tensor(dataset.annotations.labels[indices], dtype=dtype),
        identities=torch.as_tensor(np.asarray(identities, dtype=np.int64)))


def pk_sample(identities, spec, rng):
    """
    one epoch of P x K batches.

    every identity with at least K instances is shuffled and cut into
    chunks of K distinct instances (a remainder smaller than K is left
    out), then batches take one chunk from each of P distinct identities
    until fewer than P identities have chunks left.

    Parameters
    ----------

    identities : int array (N,)
        identity of each sample
    spec : BatchSpec
    rng : numpy.random.Generator

    Returns
    -------

    list of int arrays of size P * K (sample indices, K consecutive
    samples per identity)
    """
    identities = np.asarray(identities)
    chunks = {}
    for pid in np.unique(identities):
        indices = rng.permutation(np.flatnonzero(identities == pid))
        if len(indices) >= spec.K:
            chunks[pid] = [indices[i:i + spec.K] for i in range(0, len(indices) - spec.K + 1, spec.K)]
    if len(chunks) < spec.P:
        raise BatchStructureError(
            'cannot sample {} identities with {} instances each, only {} identities qualify'.format(
                spec.P, spec.K, len(chunks)))
    batches = []
    while True:
        available = sorted(pid for pid, c in chunks.items() if c)
        if len(available) < spec.P:
            break
        chosen = rng.choice(available, size=spec.P, replace=False)
        batches.append(np.concatenate([chunks[pid].pop(0) for pid in chosen]))
    return batches


def pk_iterator(identities, spec, rng):
    """endless iterator of PK batches, epoch after epoch"""
    while True:
        for batch in pk_sample(identities, spec, rng):
            yield batch


def iterate_minibatches(nb_inputs, batch_size):
    """
    Get slices pointing to indices of example forming minibatches

    Paramaters
    ----------
    nb_inputs : int
      size of the data
    batch_size : int
      minibatch size

    Yields
    ------

    slice
    """
    for start_idx in range(0, nb_inputs, batch_size):
        end_idx = min(start_idx + batch_size, nb_inputs)
        excerpt = slice(start_idx, end_idx)
        yield excerpt

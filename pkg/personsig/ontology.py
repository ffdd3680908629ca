"""
This module defines the attribute and body-part schemas, the
part-attribute attachment table, the annotation file reader/writer and
the attribute occurrence statistics that feed the correlation graph.

The annotation file is a csv file with the header
`image_id,identity,camera,<attribute names...>` and strictly binary labels.
The schema file is a json document with the keys `attributes`
(ordered list), `parts` (ordered list) and `attachment`
(part name -> list of attribute names).
"""
import os
import csv
import json
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np

from .common import AnnotationError
from .common import SchemaError

logger = logging.getLogger(__name__)

CANONICAL_PARTS = ('foreground', 'head', 'upper', 'lower', 'arm')

# body parts and the attributes attached to them
BODY_PART_ATTRIBUTES = OrderedDict([
    ('foreground', ['gender', 'age']),
    ('head', ['hair_length', 'wearing_hat']),
    ('upper', ['upper_type', 'upper_color', 'carrying_backpack']),
    ('lower', ['lower_type', 'lower_color', 'lower_length']),
    ('arm', ['sleeve_length', 'carrying_bag', 'carrying_handbag']),
])

META_COLUMNS = ('image_id', 'identity', 'camera')

AttributeSchema = namedtuple('AttributeSchema', ['names'])
PartSchema = namedtuple('PartSchema', ['names'])
AttachmentTable = namedtuple('AttachmentTable', ['attach', 'part_names', 'attribute_names'])
AttributeStats = namedtuple('AttributeStats', ['occurrence', 'cooccurrence', 'prevalence', 'size'])


class AnnotationSet(namedtuple('AnnotationSet', ['schema', 'image_ids', 'identities',
                                                 'original_identities', 'cameras', 'labels'])):
    """
    Annotations of a set of images.

    Attributes
    ----------

    schema : AttributeSchema
    image_ids : tuple of str
    identities : int array of shape (N,)
        dense 0-based identity indices
    original_identities : int array of shape (N,)
        identities as written in the annotation file
    cameras : int array of shape (N,)
    labels : uint8 array of shape (N, N_A)
    """

    @property
    def size(self):
        return len(self.image_ids)

    @property
    def nb_identities(self):
        return len(np.unique(self.identities))


def attribute_schema(names):
    names = tuple(names)
    if len(names) == 0:
        raise SchemaError('an attribute schema needs at least one attribute')
    _check_unique(names, 'attribute')
    return AttributeSchema(names=names)


def part_schema(names=CANONICAL_PARTS):
    names = tuple(names)
    _check_unique(names, 'part')
    if names != CANONICAL_PARTS:
        raise SchemaError(
            'the part schema must be exactly {}, got : {}'.format(list(CANONICAL_PARTS), list(names)))
    return PartSchema(names=names)


def _check_unique(names, what):
    seen = set()
    for name in names:
        if name in seen:
            raise SchemaError('duplicate {} name : {}'.format(what, name))
        seen.add(name)


def build_attachment(parts, attrs, spec):
    """
    build the binary part x attribute attachment table.

    Parameters
    ----------

    parts : PartSchema
    attrs : AttributeSchema
    spec : dict
        part name -> list of attribute names attached to it.
        every attribute must be listed under exactly one part.

    Returns
    -------

    AttachmentTable
    """
    attach = np.zeros((len(parts.names), len(attrs.names)), dtype=np.int64)
    part_index = {name: i for i, name in enumerate(parts.names)}
    attr_index = {name: j for j, name in enumerate(attrs.names)}
    for part, names in spec.items():
        if part not in part_index:
            raise SchemaError('unknown part in attachment : {}'.format(part))
        for name in names:
            if name not in attr_index:
                raise SchemaError('unknown attribute in attachment : {}'.format(name))
            j = attr_index[name]
            if attach[:, j].any():
                raise SchemaError('ambiguous attachment for attribute "{}"'.format(name))
            attach[part_index[part], j] = 1
    unlisted = [attrs.names[j] for j in np.flatnonzero(attach.sum(axis=0) == 0)]
    if unlisted:
        raise SchemaError('attribute "{}" is not attached to any part'.format(unlisted[0]))
    attach.flags.writeable = False
    return AttachmentTable(attach=attach, part_names=parts.names, attribute_names=attrs.names)


def load_schema(path):
    """
    load a schema json file.

    Returns
    -------

    tuple (AttributeSchema, PartSchema, AttachmentTable)
    """
    if not os.path.exists(path):
        raise IOError('schema file not found : {}'.format(path))
    with open(path, encoding='utf-8') as fd:
        doc = json.load(fd)
    for key in ('attributes', 'parts', 'attachment'):
        if key not in doc:
            raise SchemaError('schema file {} is missing the key "{}"'.format(path, key))
    attrs = attribute_schema(doc['attributes'])
    parts = part_schema(doc['parts'])
    attach = build_attachment(parts, attrs, doc['attachment'])
    return attrs, parts, attach


def schema_to_dict(attach):
    """inverse of `load_schema`, gives the json document of an attachment table"""
    spec = OrderedDict()
    for i, part in enumerate(attach.part_names):
        spec[part] = [attach.attribute_names[j] for j in np.flatnonzero(attach.attach[i])]
    return OrderedDict([
        ('attributes', list(attach.attribute_names)),
        ('parts', list(attach.part_names)),
        ('attachment', spec),
    ])


def default_schema_path():
    """path of the bundled Market-1501 schema (30 binary attributes)"""
    return os.path.join(os.path.dirname(__file__), 'schemas', 'market1501.json')


def load_annotations(path, schema):
    """
    read an annotation csv file.

    Parameters
    ----------

    path : str
    schema : AttributeSchema
        the header must list exactly these attribute names, in order,
        after the columns image_id, identity and camera.

    Returns
    -------

    AnnotationSet
        identities are remapped to dense 0-based indices (sorted by
        original identity), the original ones are kept.
    """
    if not os.path.exists(path):
        raise IOError('annotation file not found : {}'.format(path))
    with open(path, newline='', encoding='utf-8') as fd:
        reader = csv.reader(fd)
        header = next(reader, None)
        if header is None:
            raise AnnotationError('empty annotation set')
        expected = list(META_COLUMNS) + list(schema.names)
        for col, (got, exp) in enumerate(zip(header, expected)):
            if got.strip() != exp:
                raise AnnotationError(
                    'header mismatch at column {} : expected "{}", got "{}"'.format(col, exp, got))
        if len(header) != len(expected):
            col = min(len(header), len(expected))
            name = header[col] if len(header) > len(expected) else expected[col]
            raise AnnotationError('header mismatch at column {} : "{}"'.format(col, name))
        image_ids, identities, cameras, labels = [], [], [], []
        for row_nb, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(expected):
                raise AnnotationError('row {} has {} columns, expected {}'.format(
                    row_nb, len(row), len(expected)))
            image_ids.append(row[0])
            identities.append(_parse_int(row[1], row_nb, 'identity'))
            cameras.append(_parse_int(row[2], row_nb, 'camera'))
            values = []
            for name, value in zip(schema.names, row[3:]):
                value = value.strip()
                if value not in ('0', '1'):
                    raise AnnotationError(
                        'non-binary label "{}" at row {}, column "{}"'.format(value, row_nb, name))
                values.append(int(value))
            labels.append(values)
    if len(image_ids) == 0:
        raise AnnotationError('empty annotation set')
    labels = np.array(labels, dtype=np.uint8).reshape((len(image_ids), len(schema.names)))
    return _make_annotations(schema, image_ids, identities, cameras, labels)


def _parse_int(value, row_nb, column):
    try:
        v = int(value)
    except ValueError:
        raise AnnotationError('invalid {} "{}" at row {}'.format(column, value, row_nb))
    if v < 0:
        raise AnnotationError('negative {} at row {}'.format(column, row_nb))
    return v


def _make_annotations(schema, image_ids, original_identities, cameras, labels):
    original_identities = np.asarray(original_identities, dtype=np.int64)
    _, dense = np.unique(original_identities, return_inverse=True)
    arrays = [dense.astype(np.int64), original_identities,
              np.asarray(cameras, dtype=np.int64), np.asarray(labels, dtype=np.uint8)]
    for a in arrays:
        a.flags.writeable = False
    return AnnotationSet(schema, tuple(image_ids), *arrays)


def annotations_from_arrays(schema, image_ids, identities, cameras, labels):
    """build an AnnotationSet from in-memory arrays (identities are remapped)"""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != len(schema.names):
        raise AnnotationError('labels must have shape (N, {})'.format(len(schema.names)))
    if not np.isin(labels, (0, 1)).all():
        raise AnnotationError('labels must be binary')
    if len(image_ids) == 0:
        raise AnnotationError('empty annotation set')
    return _make_annotations(schema, list(image_ids), identities, cameras, labels)


def write_annotations(path, annotations):
    """write `annotations` as csv, with the original identities"""
    with open(path, 'w', newline='', encoding='utf-8') as fd:
        writer = csv.writer(fd, lineterminator='\n')
        writer.writerow(list(META_COLUMNS) + list(annotations.schema.names))
        for i in range(annotations.size):
            writer.writerow(
                [annotations.image_ids[i],
                 int(annotations.original_identities[i]),
                 int(annotations.cameras[i])] + [int(v) for v in annotations.labels[i]])


def subset(annotations, indices):
    """restrict `annotations` to the rows `indices`, identities are re-densified"""
    indices = np.asarray(indices, dtype=np.int64)
    return _make_annotations(
        annotations.schema,
        [annotations.image_ids[i] for i in indices],
        annotations.original_identities[indices],
        annotations.cameras[indices],
        annotations.labels[indices])


def compute_stats(annotations):
    """
    attribute occurrence statistics, counted over images.

    Returns
    -------

    AttributeStats with
        occurrence : K, int vector (N_A,), images where attribute i is 1
        cooccurrence : L, int matrix (N_A, N_A), images where i and j are 1
        prevalence : k = K / N
        size : N
    """
    y = annotations.labels.astype(np.int64)
    n = y.shape[0]
    occurrence = y.sum(axis=0)
    cooccurrence = y.T.dot(y)
    prevalence = occurrence / float(n)
    for a in (occurrence, cooccurrence, prevalence):
        a.flags.writeable = False
    return AttributeStats(occurrence=occurrence, cooccurrence=cooccurrence,
                          prevalence=prevalence, size=n)

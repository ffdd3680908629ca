import os
import json
import itertools

import pytest
import numpy as np

from personsig.common import AnnotationError
from personsig.common import SchemaError
from personsig.ontology import annotations_from_arrays
from personsig.ontology import attribute_schema
from personsig.ontology import build_attachment
from personsig.ontology import BODY_PART_ATTRIBUTES
from personsig.ontology import compute_stats
from personsig.ontology import default_schema_path
from personsig.ontology import load_annotations
from personsig.ontology import load_schema
from personsig.ontology import part_schema
from personsig.ontology import schema_to_dict
from personsig.ontology import subset
from personsig.ontology import write_annotations

TOY_LABELS = [[1, 1, 0], [1, 0, 0], [1, 1, 1], [0, 1, 0]]


def toy_annotations():
    schema = attribute_schema(['a1', 'a2', 'a3'])
    return annotations_from_arrays(
        schema, ['im{}'.format(i) for i in range(4)], [7, 7, 3, 3], [0, 1, 0, 1], TOY_LABELS)


def write_csv_file(path, lines):
    with open(path, 'w') as fd:
        fd.write('\n'.join(lines) + '\n')


def test_compute_stats_toy_corpus():
    stats = compute_stats(toy_annotations())
    assert stats.occurrence.tolist() == [3, 3, 1]
    assert stats.cooccurrence[0, 1] == 2
    assert stats.cooccurrence[0, 2] == 1
    assert stats.cooccurrence[1, 2] == 1
    assert np.allclose(stats.prevalence, [0.75, 0.75, 0.25])
    assert stats.size == 4


def test_compute_stats_matches_pairwise_counting():
    rng = np.random.RandomState(42)
    labels = rng.randint(0, 2, size=(30, 6))
    schema = attribute_schema(['x{}'.format(i) for i in range(6)])
    annotations = annotations_from_arrays(schema, [str(i) for i in range(30)], rng.randint(0, 5, 30),
                                          np.zeros(30), labels)
    stats = compute_stats(annotations)
    expected = np.zeros((6, 6), dtype=np.int64)
    for row in labels:
        for i, j in itertools.product(range(6), range(6)):
            expected[i, j] += row[i] * row[j]
    assert np.array_equal(stats.cooccurrence, expected)
    assert np.array_equal(stats.cooccurrence, stats.cooccurrence.T)
    assert np.array_equal(np.diag(stats.cooccurrence), stats.occurrence)


def test_compute_stats_shuffle_and_duplicate():
    annotations = toy_annotations()
    stats = compute_stats(annotations)
    shuffled = compute_stats(subset(annotations, [3, 1, 0, 2]))
    assert np.array_equal(stats.cooccurrence, shuffled.cooccurrence)
    assert np.array_equal(stats.prevalence, shuffled.prevalence)
    doubled = compute_stats(subset(annotations, [0, 1, 2, 3, 0, 1, 2, 3]))
    assert np.array_equal(doubled.occurrence, 2 * stats.occurrence)
    assert np.array_equal(doubled.cooccurrence, 2 * stats.cooccurrence)
    assert np.allclose(doubled.prevalence, stats.prevalence)


def test_compute_stats_all_zero():
    schema = attribute_schema(['a1', 'a2', 'a3'])
    annotations = annotations_from_arrays(schema, ['im'], [0], [0], [[0, 0, 0]])
    stats = compute_stats(annotations)
    assert stats.occurrence.tolist() == [0, 0, 0]
    assert (stats.cooccurrence == 0).all()
    assert (stats.prevalence == 0).all()


def test_load_annotations(tmpdir):
    path = str(tmpdir.join('annotations.csv'))
    write_csv_file(path, ['image_id,identity,camera,a1,a2,a3'] +
                   ['im{},{},{},{}'.format(i, pid, i % 2, ','.join(map(str, y)))
                    for i, (pid, y) in enumerate(zip([12, 12, 5, 5], TOY_LABELS))])
    annotations = load_annotations(path, attribute_schema(['a1', 'a2', 'a3']))
    assert annotations.size == 4
    assert annotations.identities.tolist() == [1, 1, 0, 0]
    assert annotations.original_identities.tolist() == [12, 12, 5, 5]
    assert annotations.labels.tolist() == TOY_LABELS


def test_load_annotations_crlf(tmpdir):
    path = str(tmpdir.join('annotations.csv'))
    with open(path, 'w', newline='') as fd:
        fd.write('image_id,identity,camera,a1\r\nim0,0,0,1\r\n')
    annotations = load_annotations(path, attribute_schema(['a1']))
    assert annotations.size == 1
    assert annotations.labels.tolist() == [[1]]


def test_load_annotations_single_zero_row(tmpdir):
    path = str(tmpdir.join('annotations.csv'))
    write_csv_file(path, ['image_id,identity,camera,a1,a2', 'im0,0,0,0,0'])
    annotations = load_annotations(path, attribute_schema(['a1', 'a2']))
    assert annotations.size == 1
    assert compute_stats(annotations).occurrence.tolist() == [0, 0]


def test_load_annotations_errors(tmpdir):
    schema = attribute_schema(['a1', 'a2'])
    path = str(tmpdir.join('annotations.csv'))

    with pytest.raises(IOError):
        load_annotations(str(tmpdir.join('missing.csv')), schema)

    write_csv_file(path, ['image_id,identity,camera,a1,a2'])
    with pytest.raises(AnnotationError, match='empty annotation set'):
        load_annotations(path, schema)

    write_csv_file(path, ['image_id,identity,camera,a1,b2', 'im0,0,0,0,1'])
    with pytest.raises(AnnotationError, match='b2'):
        load_annotations(path, schema)

    write_csv_file(path, ['image_id,identity,camera,a1,a2', 'im0,0,0,0,1', 'im1,0,1,2,1'])
    with pytest.raises(AnnotationError, match='row 2, column "a1"'):
        load_annotations(path, schema)


def test_build_attachment_table():
    attrs, parts, attach = load_schema(default_schema_path())
    assert (attach.attach.sum(axis=0) == 1).all()
    gender = attrs.names.index('gender')
    assert attach.attach[:, gender].tolist() == [1, 0, 0, 0, 0]
    hair = attrs.names.index('hair_length')
    assert attach.attach[:, hair].tolist() == [0, 1, 0, 0, 0]


def test_default_schema():
    attrs, parts, attach = load_schema(default_schema_path())
    assert len(attrs.names) == 30
    assert parts.names == ('foreground', 'head', 'upper', 'lower', 'arm')
    assert set(BODY_PART_ATTRIBUTES) == set(parts.names)


def test_build_attachment_errors():
    parts = part_schema()
    attrs = attribute_schema(['hat', 'bag'])
    with pytest.raises(SchemaError, match='ambiguous attachment'):
        build_attachment(parts, attrs, {'head': ['hat', 'bag'], 'arm': ['bag']})
    with pytest.raises(SchemaError, match='not attached'):
        build_attachment(parts, attrs, {'head': ['hat']})
    with pytest.raises(SchemaError):
        build_attachment(parts, attrs, {'head': ['hat'], 'tail': ['bag']})


def test_schemas_errors():
    with pytest.raises(SchemaError):
        attribute_schema([])
    with pytest.raises(SchemaError):
        attribute_schema(['a', 'a'])
    with pytest.raises(SchemaError):
        part_schema(['head', 'foreground', 'upper', 'lower', 'arm'])


def test_schema_roundtrip(tmpdir):
    _, _, attach = load_schema(default_schema_path())
    path = str(tmpdir.join('schema.json'))
    with open(path, 'w') as fd:
        json.dump(schema_to_dict(attach), fd)
    _, _, attach2 = load_schema(path)
    assert np.array_equal(attach.attach, attach2.attach)
    assert attach.attribute_names == attach2.attribute_names


def test_load_schema_missing_file(tmpdir):
    with pytest.raises(IOError):
        load_schema(str(tmpdir.join('nope.json')))


def test_write_annotations_roundtrip(tmpdir):
    annotations = toy_annotations()
    path = str(tmpdir.join('annotations.csv'))
    write_annotations(path, annotations)
    loaded = load_annotations(path, annotations.schema)
    assert loaded.image_ids == annotations.image_ids
    assert np.array_equal(loaded.original_identities, annotations.original_identities)
    assert np.array_equal(loaded.labels, annotations.labels)
    assert os.path.getsize(path) > 0

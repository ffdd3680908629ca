import os
import json

import pytest
import numpy as np
from click.testing import CliRunner

from personsig.cli import cli
from personsig.ontology import annotations_from_arrays
from personsig.ontology import attribute_schema
from personsig.ontology import build_attachment
from personsig.ontology import part_schema
from personsig.ontology import schema_to_dict
from personsig.ontology import write_annotations


@pytest.fixture
def config_file(tmpdir, small_params):
    def make(**overrides):
        filename = str(tmpdir.join('config.json'))
        with open(filename, 'w') as fd:
            json.dump(small_params(**overrides), fd)
        return filename
    return make


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


def test_gen(tmpdir, config_file):
    out = str(tmpdir.join('data'))
    result = invoke('gen', '--config', config_file(), '--out', out)
    assert result.exit_code == 0, result.output
    assert 'wrote 62 files' in result.output
    manifest = json.load(open(os.path.join(out, 'manifest.json')))
    assert len(manifest['files']) == 62
    assert os.path.exists(os.path.join(out, 'schema.json'))

    result = invoke('gen', '--config', config_file(), '--out', out)
    assert result.exit_code == 3
    assert 'already exists' in result.output
    result = invoke('gen', '--config', config_file(), '--out', out, '--force')
    assert result.exit_code == 0, result.output


def test_graph(tmpdir, config_file):
    data = str(tmpdir.join('data'))
    assert invoke('gen', '--config', config_file(), '--out', data).exit_code == 0
    result = invoke('graph', data, '--degree', 'sym')
    assert result.exit_code == 0, result.output
    assert 'N_G = ' in result.output
    graph = json.load(open(os.path.join(data, 'graph.json')))
    assert graph['degree_mode'] == 'sym'
    assert graph['n_attributes'] == 4


def test_graph_missing_schema(tmpdir):
    data = tmpdir.mkdir('empty')
    result = invoke('graph', str(data))
    assert result.exit_code == 3
    assert 'schema.json' in result.output


def test_gradcheck(config_file):
    result = invoke('gradcheck', '--config', config_file())
    assert result.exit_code == 0, result.output
    assert 'gradient check passed' in result.output

    result = invoke('gradcheck', '--config', config_file(), '--corrupt', 'identity_head.weight')
    assert result.exit_code == 1
    assert 'identity_head.weight' in result.output.splitlines()[-1]


def test_train_eval_export(tmpdir, config_file):
    run = str(tmpdir.join('run'))
    result = invoke('train', '--config', config_file(), '--out', run)
    assert result.exit_code == 0, result.output
    for name in ('checkpoint.gpsc', 'losses.csv', 'config.json'):
        assert os.path.exists(os.path.join(run, name))

    for feature in ('concat', 'bnn'):
        result = invoke('eval', '--run', run, '--feature', feature)
        assert result.exit_code == 0, result.output
        assert 'feature={}'.format(feature) in result.output
        report = json.load(open(os.path.join(run, 'report_{}.json'.format(feature))))
        assert report['n_queries'] == 6
        assert 0 <= report['mAP'] <= 1
    assert invoke('eval', '--run', run, '--feature', 'bnn').exit_code == 3

    out = str(tmpdir.join('signatures'))
    result = invoke('export', '--run', run, '--out', out)
    assert result.exit_code == 0, result.output
    assert sorted(os.listdir(out)) == ['gallery.gpss', 'query.gpss']


def test_usage_errors(tmpdir, config_file):
    result = invoke('train', '--config', config_file(model={'depth': 3}), '--out', str(tmpdir.join('run')))
    assert result.exit_code == 2
    assert 'model.depth' in result.output
    result = invoke('gradcheck', '--config', config_file(gradcheck={'tolerance': -1}))
    assert result.exit_code == 2
    result = invoke('gen', '--out', str(tmpdir.join('data')), '--seed', -1)
    assert result.exit_code == 2


def write_toy_corpus(directory, labels=((1, 1, 0), (1, 0, 0), (1, 1, 1), (0, 1, 0))):
    attrs = attribute_schema(['a1', 'a2', 'a3'])
    attach = build_attachment(part_schema(), attrs, {'foreground': ['a1'], 'head': ['a2'], 'arm': ['a3']})
    n = len(labels)
    annotations = annotations_from_arrays(attrs, ['img{}'.format(i) for i in range(n)],
                                          np.arange(1, n + 1), np.zeros(n), labels)
    os.makedirs(directory)
    write_annotations(os.path.join(directory, 'annotations.csv'), annotations)
    with open(os.path.join(directory, 'schema.json'), 'w') as fd:
        json.dump(schema_to_dict(attach), fd)
    return directory


def read_bytes(filename):
    with open(filename, 'rb') as fd:
        return fd.read()


def test_graph_toy_corpus(tmpdir):
    data = write_toy_corpus(str(tmpdir.join('toy')))
    result = invoke('graph', data)
    assert result.exit_code == 0, result.output
    assert 'N_G = 8' in result.output
    assert 'warning' not in result.output
    graph = json.load(open(os.path.join(data, 'graph.json')))
    assert graph['nodes'][:3] == ['a1', 'a2', 'a3']
    AA = np.array(graph['blocks']['AA'])
    expected = np.array([[1., 2. / 3, 1. / 3],
                         [2. / 3, 1., 1. / 3],
                         [1., 1., 1.]])
    assert np.allclose(AA, expected, atol=1e-12)
    assert np.allclose(graph['blocks']['PP'], np.ones((5, 5)))


def test_graph_warns_on_never_occurring_attribute(tmpdir):
    data = write_toy_corpus(str(tmpdir.join('toy')), labels=((1, 1, 0), (1, 0, 0)))
    result = invoke('graph', data)
    assert result.exit_code == 0, result.output
    assert 'warning: attribute "a3" never occurs' in result.output
    graph = json.load(open(os.path.join(data, 'graph.json')))
    assert np.array(graph['blocks']['AA'])[2].tolist() == [0, 0, 0]


def test_graph_force_rerun_is_identical(tmpdir):
    data = write_toy_corpus(str(tmpdir.join('toy')))
    filename = os.path.join(data, 'graph.json')
    assert invoke('graph', data).exit_code == 0
    first = read_bytes(filename)
    assert invoke('graph', data).exit_code == 3
    result = invoke('graph', data, '--force')
    assert result.exit_code == 0, result.output
    assert read_bytes(filename) == first


def test_gen_same_seed_same_manifest(tmpdir, config_file):
    config = config_file()
    a, b = str(tmpdir.join('a')), str(tmpdir.join('b'))
    assert invoke('gen', '--config', config, '--seed', 7, '--out', a).exit_code == 0
    assert invoke('gen', '--config', config, '--seed', 7, '--out', b).exit_code == 0
    manifest_a = json.load(open(os.path.join(a, 'manifest.json')))
    manifest_b = json.load(open(os.path.join(b, 'manifest.json')))
    assert manifest_a['files'] == manifest_b['files']
    assert read_bytes(os.path.join(a, 'manifest.json')) == read_bytes(os.path.join(b, 'manifest.json'))
    c = str(tmpdir.join('c'))
    assert invoke('gen', '--config', config, '--seed', 8, '--out', c).exit_code == 0
    manifest_c = json.load(open(os.path.join(c, 'manifest.json')))
    assert manifest_c['files'] != manifest_a['files']


def test_gradcheck_zero_tolerance_fails(config_file):
    result = invoke('gradcheck', '--config', config_file(), '--tolerance', 0)
    assert result.exit_code == 1
    assert 'gradient check failed at tolerance 0' in result.output


def test_train_force_rerun_is_identical(tmpdir, config_file):
    config = config_file()
    run = str(tmpdir.join('run'))
    assert invoke('train', '--config', config, '--out', run).exit_code == 0
    first = {name: read_bytes(os.path.join(run, name)) for name in ('losses.csv', 'checkpoint.gpsc')}
    assert invoke('train', '--config', config, '--out', run).exit_code == 3
    result = invoke('train', '--config', config, '--out', run, '--force')
    assert result.exit_code == 0, result.output
    for name, content in first.items():
        assert read_bytes(os.path.join(run, name)) == content, name


def test_train_zero_steps_then_eval(tmpdir, config_file):
    run = str(tmpdir.join('run'))
    result = invoke('train', '--config', config_file(optim={'steps': 0}), '--out', run)
    assert result.exit_code == 0, result.output
    assert open(os.path.join(run, 'losses.csv')).read().strip() == 'step,l_id,l_triplet,l_center,l_attr,total'
    result = invoke('eval', '--run', run)
    assert result.exit_code == 0, result.output
    report = json.load(open(os.path.join(run, 'report_concat.json')))
    assert report['n_queries'] == 6
    assert 0 <= report['attribute_accuracy'] <= 1


def test_eval_on_another_dataset(tmpdir, config_file):
    run = str(tmpdir.join('run'))
    assert invoke('train', '--config', config_file(), '--seed', 1, '--out', run).exit_code == 0
    target = str(tmpdir.join('target'))
    assert invoke('gen', '--config', config_file(), '--seed', 2, '--out', target).exit_code == 0

    out = str(tmpdir.join('target_eval'))
    result = invoke('eval', '--run', run, '--data', target, '--out', out)
    assert result.exit_code == 0, result.output
    report = json.load(open(os.path.join(out, 'report_concat.json')))
    assert report['n_queries'] == 6
    assert report['attribute_target'] == 'ground_truth'
    signatures = str(tmpdir.join('signatures'))
    result = invoke('export', '--run', run, '--data', target, '--out', signatures)
    assert result.exit_code == 0, result.output
    assert sorted(os.listdir(signatures)) == ['gallery.gpss', 'query.gpss']
    own = str(tmpdir.join('own_signatures'))
    assert invoke('export', '--run', run, '--out', own).exit_code == 0
    assert read_bytes(os.path.join(own, 'query.gpss')) != read_bytes(os.path.join(signatures, 'query.gpss'))


def test_eval_on_dataset_with_another_schema(tmpdir, config_file):
    run = str(tmpdir.join('run'))
    assert invoke('train', '--config', config_file(), '--out', run).exit_code == 0
    other = str(tmpdir.join('other'))
    assert invoke('gen', '--config', config_file(synth={'n_attributes': 3}), '--out', other).exit_code == 0
    result = invoke('eval', '--run', run, '--data', other, '--out', str(tmpdir.join('eval')))
    assert result.exit_code == 3
    assert 'another attribute schema' in result.output
    result = invoke('export', '--run', run, '--data', other, '--out', str(tmpdir.join('signatures')))
    assert result.exit_code == 3

"""
Run parameters.

Parameters are a nested dict loaded from JSON. `default_params` holds
every key with its default value; `check_params` merges user values over
the defaults, rejects unknown keys and out-of-range values, and returns
the resolved tree. Example of a user file:

    {
        "seed": 7,
        "data": {"dir": "out/data"},
        "optim": {"steps": 500, "algo": {"name": "Adam", "params": {"lr": 0.001}}},
        "loss": {"weights": {"attribute": 0}}
    }
"""
import copy
import math

from .common import ConfigError
from .common import dtypes
from .corrgraph import DEGREE_MODES
from .gcn import MAX_LAYERS
from .model_builders import METRIC_FEATURES
from .model_builders import SIGNATURE_FEATURES
from .synthgen import SynthConfig
from .utils import read_json

DISTANCES = ('euclidean', 'cosine')
MININGS = ('hard', 'all')
LR_SCHEDULES = ('constant', 'decrease_every', 'manual')

default_params = {
    'seed': 0,
    'data': {
        # dataset directory, a synthetic dataset is generated in memory
        # from the `synth` section when it is null
        'dir': None,
        'schema': None,
        'embeddings': None,
        'test_images_per_identity': 3,
    },
    # null seed means the top-level seed
    'synth': dict(SynthConfig()._asdict(), seed=None),
    'model': {
        'embedding_dim': 16,
        'hidden_dims': [16],
        'slope': 0.2,
        'bnneck': True,
        'shared_projection': True,
        'train_embeddings': False,
        'identity_bias': True,
        'metric_feature': 'global',
        'degree': 'row',
        'dtype': 'float64',
    },
    'loss': {
        'weights': {
            'identity': 1.0,
            'triplet': 1.0,
            'center': 0.0005,
            'attribute': 1.0,
        },
        'margin': 0.3,
        'mining': 'hard',
        'center_lr': 0.5,
    },
    'optim': {
        'steps': 2000,
        'P': 8,
        'K': 4,
        'algo': {
            'name': 'SGD',
            'params': {'lr': 0.01, 'momentum': 0.9},
        },
        # tensor name prefix -> factor on the learning rate
        'lr_multipliers': {'graph_reasoning': 10.0},
        'lr_schedule': {
            'name': 'constant',
            'params': {},
        },
        'budget_secs': None,
        'freeze': [],
    },
    'eval': {
        'feature': 'concat',
        'distance': 'euclidean',
        'batch_size': 64,
    },
    'gradcheck': {
        'tolerance': 1e-5,
        'step': 1e-5,
        'fraction': 0.05,
        'full_below': 200,
        'P': 2,
        'K': 2,
        'corrupt': None,
    },
    'report': {
        'log_every': 50,
    },
}

# sub-trees taken as given (optimizer and schedule keyword arguments)
FREE_FORM = ('optim.algo.params', 'optim.lr_schedule.params', 'optim.lr_multipliers')


def load_params(filename):
    try:
        params = read_json(filename)
    except ValueError as ex:
        raise ConfigError('{} is not valid json : {}'.format(filename, ex))
    if not isinstance(params, dict):
        raise ConfigError('{} must contain a json object'.format(filename))
    return params


def check_params(params=None):
    """
    merge `params` over the defaults and validate the result.

    Raises
    ------

    ConfigError naming the dotted path of the first offending key
    """
    resolved = _merge(copy.deepcopy(default_params), params or {}, path='')
    _check_values(resolved)
    return resolved


def _merge(defaults, user, path):
    for key, value in user.items():
        where = path + key
        if key not in defaults:
            raise ConfigError('unknown configuration key : {}'.format(where))
        if isinstance(defaults[key], dict) and where not in FREE_FORM:
            if not isinstance(value, dict):
                raise ConfigError('{} must be an object'.format(where))
            _merge(defaults[key], value, where + '.')
        else:
            defaults[key] = copy.deepcopy(value)
    return defaults


def _check(condition, path, message):
    if not condition:
        raise ConfigError('{} : {}'.format(path, message))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_values(p):
    _check(_is_int(p['seed']) and p['seed'] >= 0, 'seed', 'must be a nonnegative integer')

    data = p['data']
    _check(_is_int(data['test_images_per_identity']) and data['test_images_per_identity'] >= 2,
           'data.test_images_per_identity', 'must be an integer >= 2 (one query, one gallery image)')

    synth = p['synth']
    for key in ('identities', 'images_per_identity', 'n_attributes', 'n_parts', 'width', 'height',
                'channels', 'cameras', 'mask_scale', 'background_margin'):
        _check(_is_int(synth[key]), 'synth.' + key, 'must be an integer')
    for key in ('attribute_noise', 'feature_noise', 'attribute_strength', 'identity_strength'):
        _check(_is_number(synth[key]), 'synth.' + key, 'must be a finite number')
    _check(synth['seed'] is None or (_is_int(synth['seed']) and synth['seed'] >= 0),
           'synth.seed', 'must be null or a nonnegative integer')
    _check(synth['images_per_identity'] > data['test_images_per_identity'],
           'synth.images_per_identity', 'must exceed data.test_images_per_identity')

    model = p['model']
    _check(_is_int(model['embedding_dim']) and model['embedding_dim'] >= 1,
           'model.embedding_dim', 'must be a positive integer')
    hidden = model['hidden_dims']
    _check(isinstance(hidden, list) and all(_is_int(d) and d >= 1 for d in hidden),
           'model.hidden_dims', 'must be a list of positive integers')
    _check(len(hidden) + 1 <= MAX_LAYERS, 'model.hidden_dims',
           'at most {} graph layers are supported'.format(MAX_LAYERS))
    _check(_is_number(model['slope']) and 0 < model['slope'] <= 1, 'model.slope', 'must be in (0, 1]')
    for key in ('bnneck', 'shared_projection', 'train_embeddings', 'identity_bias'):
        _check(isinstance(model[key], bool), 'model.' + key, 'must be a boolean')
    _check(model['metric_feature'] in METRIC_FEATURES, 'model.metric_feature',
           'must be one of {}'.format(METRIC_FEATURES))
    _check(model['degree'] in DEGREE_MODES, 'model.degree', 'must be one of {}'.format(DEGREE_MODES))
    _check(model['dtype'] in dtypes, 'model.dtype', 'must be one of {}'.format(sorted(dtypes)))

    loss = p['loss']
    for key, value in loss['weights'].items():
        _check(_is_number(value) and value >= 0, 'loss.weights.' + key, 'must be a finite number >= 0')
    _check(_is_number(loss['margin']) and loss['margin'] >= 0, 'loss.margin', 'must be >= 0')
    _check(loss['mining'] in MININGS, 'loss.mining', 'must be one of {}'.format(MININGS))
    _check(_is_number(loss['center_lr']) and 0 <= loss['center_lr'] <= 1, 'loss.center_lr',
           'must be in [0, 1]')

    optim = p['optim']
    _check(_is_int(optim['steps']) and optim['steps'] >= 0, 'optim.steps', 'must be an integer >= 0')
    for key in ('P', 'K'):
        _check(_is_int(optim[key]) and optim[key] >= 2, 'optim.' + key, 'must be an integer >= 2')
    _check(isinstance(optim['algo']['name'], str), 'optim.algo.name', 'must be a string')
    _check(isinstance(optim['algo']['params'], dict), 'optim.algo.params', 'must be an object')
    lr = optim['algo']['params'].get('lr', None)
    _check(lr is None or (_is_number(lr) and lr >= 0), 'optim.algo.params.lr', 'must be >= 0')
    multipliers = optim['lr_multipliers']
    _check(isinstance(multipliers, dict) and all(_is_number(v) and v > 0 for v in multipliers.values()),
           'optim.lr_multipliers', 'must map tensor names to numbers > 0')
    _check(optim['lr_schedule']['name'] in LR_SCHEDULES, 'optim.lr_schedule.name',
           'must be one of {}'.format(LR_SCHEDULES))
    _check(optim['budget_secs'] is None or (_is_number(optim['budget_secs']) and optim['budget_secs'] > 0),
           'optim.budget_secs', 'must be null or a positive number')
    _check(isinstance(optim['freeze'], list) and all(isinstance(n, str) for n in optim['freeze']),
           'optim.freeze', 'must be a list of tensor names')

    ev = p['eval']
    _check(ev['feature'] in SIGNATURE_FEATURES, 'eval.feature', 'must be one of {}'.format(SIGNATURE_FEATURES))
    _check(ev['distance'] in DISTANCES, 'eval.distance', 'must be one of {}'.format(DISTANCES))
    _check(_is_int(ev['batch_size']) and ev['batch_size'] >= 1, 'eval.batch_size', 'must be a positive integer')

    gc = p['gradcheck']
    _check(_is_number(gc['tolerance']) and gc['tolerance'] >= 0, 'gradcheck.tolerance', 'must be >= 0')
    _check(_is_number(gc['step']) and gc['step'] > 0, 'gradcheck.step', 'must be > 0')
    _check(_is_number(gc['fraction']) and 0 < gc['fraction'] <= 1, 'gradcheck.fraction', 'must be in (0, 1]')
    _check(_is_int(gc['full_below']) and gc['full_below'] >= 0, 'gradcheck.full_below', 'must be >= 0')
    for key in ('P', 'K'):
        _check(_is_int(gc[key]) and gc[key] >= 2, 'gradcheck.' + key, 'must be an integer >= 2')
    _check(gc['corrupt'] is None or isinstance(gc['corrupt'], str), 'gradcheck.corrupt',
           'must be null or a tensor name')

    _check(_is_int(p['report']['log_every']) and p['report']['log_every'] >= 1,
           'report.log_every', 'must be a positive integer')


def synth_config(params):
    """SynthConfig of resolved params, the top-level seed filling a null synth seed"""
    synth = dict(params['synth'])
    if synth['seed'] is None:
        synth['seed'] = params['seed']
    return SynthConfig(**synth)

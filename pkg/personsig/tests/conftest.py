import copy

import pytest

SMALL_PARAMS = {
    'seed': 0,
    'data': {'test_images_per_identity': 2},
    'synth': {'identities': 6, 'images_per_identity': 5, 'n_attributes': 4,
              'width': 4, 'height': 4, 'channels': 8, 'cameras': 3},
    'model': {'embedding_dim': 6, 'hidden_dims': [5]},
    'optim': {'steps': 5, 'P': 3, 'K': 2},
    'report': {'log_every': 1},
}


def _update(params, overrides):
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(params.get(key), dict):
            _update(params[key], value)
        else:
            params[key] = value
    return params


@pytest.fixture
def small_params():
    """factory of small synthetic run parameters, nested overrides are merged"""
    def make(**overrides):
        return _update(copy.deepcopy(SMALL_PARAMS), overrides)
    return make

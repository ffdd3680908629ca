"""
This module contains common functions and exceptions used across
the pipeline: shape checks, tensor conversion, seeded random streams
and optimizer lookup.
"""
import zlib

import numpy as np
import torch
from torch import optim as optimizers


class ShapeMismatchError(ValueError):
    """raised when arrays or tensors do not have the expected shape"""
    pass


class AnnotationError(ValueError):
    """raised when an annotation file is malformed"""
    pass


class SchemaError(ValueError):
    """raised when an attribute/part schema is inconsistent"""
    pass


class GraphError(ValueError):
    """raised when a correlation matrix violates its preconditions"""
    pass


class NonFiniteError(ValueError):
    """raised when a tensor that must be finite contains nan or inf"""
    pass


class BatchStructureError(ValueError):
    """
    raised when a batch does not have the P x K structure needed
    by the triplet loss, or when a PK batch cannot be sampled.
    """
    pass


class ConfigError(ValueError):
    """raised when a run configuration is invalid"""
    pass


class EmptyGalleryError(ValueError):
    """raised when no gallery entry is left after exclusions"""
    pass


class DatasetError(IOError):
    """raised when a dataset directory is missing files or is inconsistent"""
    pass


class FormatError(IOError):
    """raised when a binary file does not follow its declared format"""
    pass


dtypes = {
    'float64': torch.float64,
    'float32': torch.float32,
}


def get_dtype(name):
    """get a torch dtype from its name ('float64' or 'float32')"""
    if name not in dtypes:
        raise ConfigError('Unknown dtype : {}, expected one of {}'.format(name, sorted(dtypes)))
    return dtypes[name]


def as_tensor(x, dtype=torch.float64):
    """
    convert `x` (numpy array, list or tensor) into a torch tensor of
    `dtype`. Tensors already of the right dtype are returned as is so
    that they keep their autograd history.
    """
    if isinstance(x, torch.Tensor):
        return x if x.dtype == dtype else x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def check_shape_or_exception(x, shape, what='input'):
    """
    check that `x` has shape `shape`, raise ShapeMismatchError if not.
    `None` entries in `shape` match any size.

    Parameters
    ----------

    x : numpy array or torch tensor
    shape : tuple of int or None
    what : str
        name used in the error message
    """
    actual = tuple(x.shape)
    if len(actual) != len(shape) or any(s is not None and s != a for s, a in zip(shape, actual)):
        raise ShapeMismatchError(
            'Wrong shape for {}, expected : {}, got : {}'.format(what, shape, actual))


def check_finite_or_exception(x, what='input'):
    if isinstance(x, torch.Tensor):
        finite = bool(torch.isfinite(x).all())
    else:
        finite = bool(np.all(np.isfinite(x)))
    if not finite:
        raise NonFiniteError('{} contains non-finite values'.format(what))


def rng(seed, name):
    """
    Random generator of the named sub-stream `name` derived from `seed`.
    Two different names give independent streams, so adding a consumer
    of randomness never shifts the draws of another one.

    Parameters
    ----------

    seed : int
    name : str

    Returns
    -------

    numpy.random.Generator
    """
    key = zlib.crc32(name.encode('utf-8'))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))


def sub_rng(seed, name, index):
    """random generator of item `index` inside the named stream `name`"""
    key = zlib.crc32(name.encode('utf-8'))
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(index))))


def build_optimizer(algo_name, algo_params, parameters):
    """
    build a torch optimizer instance from its name and params

    Parameters
    ----------
        algo_name: str
            name of the optimizer class in `torch.optim` (e.g 'SGD', 'Adam')
        algo_params: dict
            parameters of the optimizer
        parameters: iterable of torch.nn.Parameter or of dicts
            parameters to optimize, or parameter groups
    """
    optimizer = _get_optimizer(algo_name)
    return optimizer(parameters, **algo_params)


def _get_optimizer(name):
    """Get a torch optimizer class from its name"""
    if hasattr(optimizers, name) and name[0].isupper():
        return getattr(optimizers, name)
    else:
        raise ConfigError('unknown optimizer : {}'.format(name))


def callback_trigger(callbacks, event_name, *args, **kwargs):
    """

    call an event on a list of callbacks.
    the event_name correspond to a method of the class Callback.
    Available are :
        - on_train_begin
        - on_train_end
        - on_step_begin
        - on_step_end

    Parameters
    ----------

    callbacks : list of Callback
    event_name : str
        event to call
    """
    for cb in callbacks:
        getattr(cb, event_name)(*args, **kwargs)

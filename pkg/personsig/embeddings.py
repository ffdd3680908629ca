"""
Attribute word embeddings Z (N_A x D_w).

Either loaded from a plain-text vector file (one line per word,
`name v1 v2 ... v_Dw`) or synthesized deterministically from the
attribute name.
"""
import os
import hashlib

import numpy as np

from .common import SchemaError


def synthesize_embedding(name, dim):
    """
    vector of `dim` standard normal draws seeded by a hash of `name`.
    The same name always gives the same vector.
    """
    digest = hashlib.sha256(name.encode('utf-8')).digest()
    seed = int.from_bytes(digest[:8], 'little')
    return np.random.default_rng(seed).standard_normal(dim)


def synthesize_embeddings(names, dim):
    return np.stack([synthesize_embedding(name, dim) for name in names])


def load_embeddings(path, names, dim):
    """
    read the vectors of `names` from a text vector file.

    Parameters
    ----------

    path : str
    names : list of str
        attribute names, gives the row order of the result
    dim : int
        expected vector dimension D_w

    Returns
    -------

    array (len(names), dim)
    """
    if not os.path.exists(path):
        raise IOError('embedding file not found : {}'.format(path))
    vectors = {}
    with open(path, encoding='utf-8') as fd:
        for line_nb, line in enumerate(fd, start=1):
            tokens = line.split()
            if not tokens:
                continue
            name, values = tokens[0], tokens[1:]
            if name not in names:
                continue
            if len(values) != dim:
                raise SchemaError('embedding of "{}" at line {} has dim {}, expected {}'.format(
                    name, line_nb, len(values), dim))
            try:
                vectors[name] = np.array([float(v) for v in values])
            except ValueError:
                raise SchemaError('non-numeric value in the embedding of "{}" at line {}'.format(
                    name, line_nb))
    missing = [name for name in names if name not in vectors]
    if missing:
        raise SchemaError('no embedding for attribute "{}" in {}'.format(missing[0], path))
    Z = np.stack([vectors[name] for name in names])
    if not np.all(np.isfinite(Z)):
        raise SchemaError('non-finite embedding values in {}'.format(path))
    return Z


def get_embeddings(names, dim, path=None):
    """load embeddings from `path` if given, synthesize them otherwise"""
    if path:
        return load_embeddings(path, names, dim)
    return synthesize_embeddings(names, dim)

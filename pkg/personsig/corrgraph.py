"""
Correlation graph between attributes and body parts.

Nodes are ordered attributes first (indices 0..N_A-1) then parts.
The correlation matrix is the block matrix

    M = [[AA, AP],
         [PA, PP]]

where AA holds conditional attribute co-occurrence probabilities, PP is
all ones (every part is assumed recognizable), PA holds the prevalence
of each attribute on the row of the part it is attached to, and AP is
the binary attachment table transposed. The matrix fed to the graph
convolutions is the normalized

    M_hat = (I + D)^-1/2 (M + I) (I + D)^-1/2

with D the diagonal degree matrix of M.
"""
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np

from .common import GraphError
from .common import ShapeMismatchError

logger = logging.getLogger(__name__)

Blocks = namedtuple('Blocks', ['AA', 'PP', 'PA', 'AP'])

CorrelationGraph = namedtuple(
    'CorrelationGraph',
    ['attribute_names', 'part_names', 'blocks', 'M', 'degree', 'normalized', 'degree_mode'])

DEGREE_MODES = ('row', 'col', 'sym')


def build_blocks(stats, attach):
    """
    Build the four correlation blocks from attribute statistics and
    the attachment table.

    Parameters
    ----------

    stats : ontology.AttributeStats
    attach : ontology.AttachmentTable

    Returns
    -------

    Blocks
        AA_ij = L_ij / K_i (a row of zeros when K_i = 0),
        PP = ones, PA_ij = k_j * attach_ij, AP = attach^T
    """
    a = np.asarray(attach.attach)
    occurrence = np.asarray(stats.occurrence, dtype=np.float64)
    cooccurrence = np.asarray(stats.cooccurrence, dtype=np.float64)
    n_parts, n_attributes = a.shape
    if occurrence.shape != (n_attributes,) or cooccurrence.shape != (n_attributes, n_attributes):
        raise ShapeMismatchError(
            'attachment table has {} attributes but statistics have shape {}'.format(
                n_attributes, cooccurrence.shape))
    AA = np.zeros((n_attributes, n_attributes))
    observed = occurrence > 0
    AA[observed] = cooccurrence[observed] / occurrence[observed][:, None]
    for j in np.flatnonzero(~observed):
        logger.warning('attribute "{}" never occurs, its AA row is zero'.format(
            attach.attribute_names[j]))
    PP = np.ones((n_parts, n_parts))
    PA = a * np.asarray(stats.prevalence, dtype=np.float64)[None, :]
    AP = a.T.astype(np.float64)
    return Blocks(AA=AA, PP=PP, PA=PA, AP=AP)


def assemble(blocks):
    """assemble the correlation matrix M = [[AA, AP], [PA, PP]]"""
    AA, PP, PA, AP = [np.asarray(b, dtype=np.float64) for b in blocks]
    n_a, n_p = AA.shape[0], PP.shape[0]
    expected = {'AA': (n_a, n_a), 'PP': (n_p, n_p), 'PA': (n_p, n_a), 'AP': (n_a, n_p)}
    for name, block in zip(('AA', 'PP', 'PA', 'AP'), (AA, PP, PA, AP)):
        if block.shape != expected[name]:
            raise ShapeMismatchError('block {} has shape {}, expected {}'.format(
                name, block.shape, expected[name]))
    M = np.empty((n_a + n_p, n_a + n_p))
    M[:n_a, :n_a] = AA
    M[:n_a, n_a:] = AP
    M[n_a:, :n_a] = PA
    M[n_a:, n_a:] = PP
    return M


def extract_blocks(M, n_attributes):
    """inverse of `assemble`"""
    M = np.asarray(M)
    n = n_attributes
    return Blocks(AA=M[:n, :n].copy(), PP=M[n:, n:].copy(), PA=M[n:, :n].copy(), AP=M[:n, n:].copy())


def degree(M, mode='row'):
    """
    degree vector of M.

    mode : 'row' (row sums), 'col' (column sums) or 'sym' (mean of both)
    """
    if mode == 'row':
        return M.sum(axis=1)
    elif mode == 'col':
        return M.sum(axis=0)
    elif mode == 'sym':
        return 0.5 * (M.sum(axis=1) + M.sum(axis=0))
    else:
        raise GraphError('unknown degree mode : {}, expected one of {}'.format(mode, DEGREE_MODES))


def normalize(M, mode='row'):
    """
    Normalize the correlation matrix.

    Parameters
    ----------

    M : array (N_G, N_G), finite and nonnegative
    mode : str
        degree definition, see `degree`

    Returns
    -------

    tuple (M_hat, D)
        M_hat = (I + D)^-1/2 (M + I) (I + D)^-1/2
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeMismatchError('M must be square, got shape {}'.format(M.shape))
    if not np.all(np.isfinite(M)):
        raise GraphError('M contains non-finite entries')
    if (M < 0).any():
        i, j = np.argwhere(M < 0)[0]
        raise GraphError('negative entry in M at ({}, {})'.format(i, j))
    D = degree(M, mode)
    scale = 1. / np.sqrt(1. + D)
    M_hat = scale[:, None] * (M + np.eye(M.shape[0])) * scale[None, :]
    return M_hat, D


def build_graph(stats, attach, degree_mode='row'):
    """build blocks, assemble M and normalize it"""
    blocks = build_blocks(stats, attach)
    M = assemble(blocks)
    M_hat, D = normalize(M, degree_mode)
    for a in (M, M_hat, D) + tuple(blocks):
        a.flags.writeable = False
    logger.info('Correlation graph : N_G={} (N_A={}, N_P={}), degree={}'.format(
        M.shape[0], blocks.AA.shape[0], blocks.PP.shape[0], degree_mode))
    return CorrelationGraph(
        attribute_names=tuple(attach.attribute_names),
        part_names=tuple(attach.part_names),
        blocks=blocks,
        M=M,
        degree=D,
        normalized=M_hat,
        degree_mode=degree_mode)


def block_norms(graph):
    """Frobenius norm of each block, keyed by block name"""
    return OrderedDict((name, float(np.linalg.norm(getattr(graph.blocks, name))))
                       for name in Blocks._fields)


def graph_to_dict(graph):
    """json document of the export-graph format"""
    return OrderedDict([
        ('nodes', list(graph.attribute_names) + list(graph.part_names)),
        ('n_attributes', len(graph.attribute_names)),
        ('n_parts', len(graph.part_names)),
        ('degree_mode', graph.degree_mode),
        ('blocks', OrderedDict((name, getattr(graph.blocks, name).tolist())
                               for name in Blocks._fields)),
        ('M', graph.M.tolist()),
        ('D', graph.degree.tolist()),
        ('M_hat', graph.normalized.tolist()),
    ])


def graph_from_dict(doc):
    """inverse of `graph_to_dict`"""
    n_a = doc['n_attributes']
    nodes = doc['nodes']
    blocks = Blocks(**{name: np.array(doc['blocks'][name], dtype=np.float64)
                       for name in Blocks._fields})
    return CorrelationGraph(
        attribute_names=tuple(nodes[:n_a]),
        part_names=tuple(nodes[n_a:]),
        blocks=blocks,
        M=np.array(doc['M'], dtype=np.float64),
        degree=np.array(doc['D'], dtype=np.float64),
        normalized=np.array(doc['M_hat'], dtype=np.float64),
        degree_mode=doc['degree_mode'])

"""
Gallery ranking and retrieval evaluation.

For a query, gallery entries with the query's identity and camera are
excluded, as well as entries flagged junk. The remaining entries are
sorted by ascending distance, ties broken by gallery index. A query whose
effective gallery has no true match is skipped and counted.
"""
import os
import logging
from collections import namedtuple
from collections import OrderedDict

import numpy as np
from scipy.spatial.distance import cdist

from .common import EmptyGalleryError
from .common import ShapeMismatchError
from .common import check_finite_or_exception
from .metrics import average_precision
from .metrics import mean_ap
from .metrics import mean_cmc
from .serialization import SignatureSet
from .utils import write_csv
from .utils import write_json

logger = logging.getLogger(__name__)

Signature = namedtuple('Signature', ['vector', 'identity', 'camera'])
RetrievalRun = namedtuple('RetrievalRun', [
    'ranked', 'average_precision', 'cmc', 'mAP', 'R1', 'R5', 'R10',
    'query_indices', 'n_skipped'])

DISTANCES = ('euclidean', 'cosine')


def signature_set(vectors, identities, cameras, junk=None):
    """build a SignatureSet, checking shapes and finiteness"""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ShapeMismatchError('signatures must be a 2D array, got shape {}'.format(vectors.shape))
    check_finite_or_exception(vectors, 'signatures')
    n = len(vectors)
    junk = np.zeros(n, dtype=bool) if junk is None else np.asarray(junk, dtype=bool)
    identities = np.asarray(identities, dtype=np.int64)
    cameras = np.asarray(cameras, dtype=np.int64)
    for name, a in (('identities', identities), ('cameras', cameras), ('junk', junk)):
        if a.shape != (n,):
            raise ShapeMismatchError('{} must have shape ({},), got {}'.format(name, n, a.shape))
    return SignatureSet(vectors=vectors, identities=identities, cameras=cameras, junk=junk)


def pairwise_distance(queries, gallery, distance='euclidean'):
    """
    (Q, G) distance matrix between query and gallery vectors

    Parameters
    ----------

    queries : array (Q, d)
    gallery : array (G, d)
    distance : 'euclidean' or 'cosine'
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    if queries.shape[1] != gallery.shape[1]:
        raise ShapeMismatchError('query signatures have dim {}, gallery ones {}'.format(
            queries.shape[1], gallery.shape[1]))
    if distance not in DISTANCES:
        raise ValueError('unknown distance : {}, expected one of {}'.format(distance, DISTANCES))
    return cdist(queries, gallery, metric=distance)


def exclusions(query, gallery):
    """bool mask of gallery entries that do not take part in the ranking of `query`"""
    same_view = (gallery.identities == query.identity) & (gallery.cameras == query.camera)
    return same_view | gallery.junk


def rank(query, gallery, excluded=None, distance='euclidean', distances=None):
    """
    Rank the gallery for one query.

    Parameters
    ----------

    query : Signature
    gallery : SignatureSet
    excluded : bool array (G,) or None
        defaults to `exclusions(query, gallery)`
    distances : array (G,) or None
        precomputed distances from the query to the gallery

    Returns
    -------

    int array of gallery indices, by ascending distance
    """
    if excluded is None:
        excluded = exclusions(query, gallery)
    kept = np.flatnonzero(~np.asarray(excluded, dtype=bool))
    if len(kept) == 0:
        raise EmptyGalleryError('empty gallery')
    if distances is None:
        distances = pairwise_distance(query.vector, gallery.vectors[kept], distance)[0]
    else:
        distances = np.asarray(distances)[kept]
    order = np.argsort(distances, kind='stable')
    return kept[order]


def evaluate(queries, gallery, distance='euclidean'):
    """
    Retrieval evaluation of every query against the gallery.
    Queries whose effective gallery is empty or holds no true match are
    skipped and counted in `n_skipped`.

    Parameters
    ----------

    queries : SignatureSet
    gallery : SignatureSet
    distance : 'euclidean' or 'cosine'

    Returns
    -------

    RetrievalRun
        ranked, average_precision : per valid query
        cmc : curve of length G averaged over valid queries
        query_indices : indices of the valid queries in `queries`
    """
    dist = pairwise_distance(queries.vectors, gallery.vectors, distance)
    length = len(gallery.vectors)
    ranked, all_matches, valid = [], [], []
    for i in range(len(queries.vectors)):
        query = Signature(queries.vectors[i], queries.identities[i], queries.cameras[i])
        try:
            order = rank(query, gallery, distances=dist[i])
        except EmptyGalleryError:
            continue
        matches = gallery.identities[order] == query.identity
        if not matches.any():
            continue
        ranked.append(order)
        all_matches.append(matches)
        valid.append(i)
    n_skipped = len(queries.vectors) - len(valid)
    if n_skipped:
        logger.info('{} queries without a true match in the gallery were skipped'.format(n_skipped))
    if len(valid) == 0:
        raise ValueError('no valid query: no query has a true match in the gallery')
    curve = mean_cmc(all_matches, length)
    return RetrievalRun(
        ranked=ranked,
        average_precision=np.array([average_precision(m) for m in all_matches]),
        cmc=curve,
        mAP=mean_ap(all_matches),
        R1=_rank_k(curve, 1),
        R5=_rank_k(curve, 5),
        R10=_rank_k(curve, 10),
        query_indices=np.array(valid, dtype=np.int64),
        n_skipped=n_skipped)


def _rank_k(curve, k):
    return float(curve[min(k, len(curve)) - 1])


def make_report(run, feature, distance, extra=None):
    """report dict of a RetrievalRun, labeled with the feature and distance used"""
    report = OrderedDict([
        ('feature', feature),
        ('distance', distance),
        ('mAP', run.mAP),
        ('R1', run.R1),
        ('R5', run.R5),
        ('R10', run.R10),
        ('n_queries', len(run.query_indices)),
        ('n_skipped', run.n_skipped),
        ('cmc', [float(v) for v in run.cmc]),
        ('per_query_ap', [float(v) for v in run.average_precision]),
    ])
    report.update(extra or {})
    return report


SUMMARY_FIELDS = ['feature', 'distance', 'mAP', 'R1', 'R5', 'R10', 'n_queries', 'n_skipped']


def write_report(report, outdir):
    """
    write report_<feature>.json and the summary row report_<feature>.csv

    Returns
    -------

    tuple of the two filenames
    """
    name = 'report_{}'.format(report['feature'])
    json_filename = os.path.join(outdir, name + '.json')
    csv_filename = os.path.join(outdir, name + '.csv')
    write_json(report, json_filename)
    fields = SUMMARY_FIELDS + [k for k in ('attribute_accuracy',) if k in report]
    write_csv([report], csv_filename, fieldnames=fields)
    return json_filename, csv_filename

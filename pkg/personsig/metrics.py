"""
This module contains the evaluation metrics: retrieval metrics computed
from the match indicators of ranked galleries, and attribute recognition
accuracy.
"""
import numpy as np
from sklearn.metrics import accuracy_score


def average_precision(matches):
    """
    average precision of one ranked gallery.

    Parameters
    ----------

    matches : bool array (G,)
        matches[r] is True when the item at rank r + 1 is a true match

    Returns
    -------

    float, mean over the positives of the precision at their rank.
    nan when there is no positive.
    """
    matches = np.asarray(matches, dtype=bool)
    num_rel = matches.sum()
    if num_rel == 0:
        return float('nan')
    hits = np.cumsum(matches)
    precision = hits / np.arange(1, len(matches) + 1, dtype=np.float64)
    return float(precision[matches].sum() / num_rel)


def cmc(matches, length=None):
    """
    cumulative match characteristic of one ranked gallery:
    cmc[r - 1] = 1 if the first true match has rank <= r.

    Parameters
    ----------

    matches : bool array (G,)
    length : int or None
        length of the returned curve, the last value is repeated when
        `length` exceeds G. Defaults to G.
    """
    matches = np.asarray(matches, dtype=bool)
    length = len(matches) if length is None else length
    curve = np.zeros(length)
    if matches.any():
        first = int(np.argmax(matches))
        curve[first:] = 1
    return curve


def mean_ap(all_matches):
    """mean average precision over queries (queries without positive excluded)"""
    aps = [average_precision(m) for m in all_matches]
    aps = [ap for ap in aps if not np.isnan(ap)]
    if len(aps) == 0:
        raise ValueError('no query has a positive in its gallery')
    return float(np.mean(aps))


def mean_cmc(all_matches, length=None):
    """CMC curve averaged over queries that have a positive"""
    valid = [np.asarray(m, dtype=bool) for m in all_matches if np.any(m)]
    if len(valid) == 0:
        raise ValueError('no query has a positive in its gallery')
    length = max(len(m) for m in valid) if length is None else length
    return np.mean([cmc(m, length) for m in valid], axis=0)


def attribute_accuracy(y_true, y_pred):
    """
    attribute recognition accuracy: fraction of correctly predicted
    binary labels over all (image, attribute) pairs.

    Parameters
    ----------

    y_true : int array (N, N_A) of 0/1
    y_pred : int array (N, N_A) of 0/1
    """
    y_true = np.asarray(y_true).astype(np.int64).ravel()
    y_pred = np.asarray(y_pred).astype(np.int64).ravel()
    return float(accuracy_score(y_true, y_pred))


def per_attribute_accuracy(y_true, y_pred):
    """accuracy of each attribute column"""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return np.array([accuracy_score(y_true[:, j], y_pred[:, j]) for j in range(y_true.shape[1])])


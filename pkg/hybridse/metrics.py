"""
Evaluation metrics.

All functions take plain sequences or numpy arrays and compute in 64-bit.
Metrics that are mathematically undefined for their input raise
:class:`hybridse.errors.UndefinedMetricError` rather than returning a
sentinel, except :func:`ndcg_at_k`, whose "no relevant documents" case is
an expected outcome for some queries and is reported as ``None``.
"""
import collections

import numpy as np
import scipy.stats
from scipy.stats.contingency import crosstab

from hybridse.errors import InputError, UndefinedMetricError

#: Returned by :func:`ndcg_at_k` for a query without relevant documents
NO_RELEVANT_DOCUMENTS = None

VMeasureBreakdown = collections.namedtuple(
    'VMeasureBreakdown', ['homogeneity', 'completeness', 'v'])


def _paired(a, b, name, minimum=1):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InputError('{}: inputs have different lengths ({} and '
                         '{})'.format(name, a.size, b.size))
    if a.size < minimum:
        raise InputError('{} needs at least {} values, got {}'.format(
            name, minimum, a.size))
    return a, b


def _binary_labels(labels, n, name):
    labels = np.asarray(labels).ravel()
    if labels.size != n:
        raise InputError('{}: {} labels for {} scores'.format(
            name, labels.size, n))
    if not np.all(np.isin(labels, (0, 1))):
        raise InputError('{}: labels must be 0 or 1'.format(name))
    return labels.astype(bool)


def spearman(gold, predicted):
    """Spearman rank correlation with average ranks for ties.

    Examples
    --------
    >>> spearman([1, 2, 3], [1, 3, 2])
    0.5
    """
    gold, predicted = _paired(gold, predicted, 'spearman', minimum=2)
    for label, values in (('gold', gold), ('predicted', predicted)):
        if np.all(values == values[0]):
            raise UndefinedMetricError('Spearman correlation is undefined '
                                       'for constant {} scores'.format(label))
    a = scipy.stats.rankdata(gold)
    b = scipy.stats.rankdata(predicted)
    a -= a.mean()
    b -= b.mean()
    rho = float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))
    return min(1.0, max(-1.0, rho))


def v_measure(classes, clusters):
    """Homogeneity, completeness and their harmonic mean.

    Entropies use the natural logarithm. When the reference entropy of a
    score is zero (a single class, or a single cluster) that score is 1.

    Returns
    -------
    VMeasureBreakdown
    """
    classes = np.asarray(classes).ravel()
    clusters = np.asarray(clusters).ravel()
    if classes.size != clusters.size:
        raise InputError('v_measure: {} class labels for {} cluster '
                         'labels'.format(classes.size, clusters.size))
    if classes.size == 0:
        raise InputError('v_measure needs at least one item')
    table = crosstab(classes, clusters).count.astype(np.float64)
    total = table.sum()
    h_class = scipy.stats.entropy(table.sum(axis=1))
    h_cluster = scipy.stats.entropy(table.sum(axis=0))
    # H(class | cluster): column entropies weighted by column mass
    h_class_given_cluster = sum(
        table[:, k].sum() / total * scipy.stats.entropy(table[:, k])
        for k in range(table.shape[1]))
    h_cluster_given_class = sum(
        table[c, :].sum() / total * scipy.stats.entropy(table[c, :])
        for c in range(table.shape[0]))
    homogeneity = 1.0 if h_class == 0 else \
        1.0 - h_class_given_cluster / h_class
    completeness = 1.0 if h_cluster == 0 else \
        1.0 - h_cluster_given_class / h_cluster
    if homogeneity + completeness > 0:
        v = 2.0 * homogeneity * completeness / (homogeneity + completeness)
    else:
        v = 0.0
    return VMeasureBreakdown(float(homogeneity), float(completeness),
                             float(v))


def dcg(relevances, k=10):
    """Discounted cumulative gain with exponential gain ``2**rel - 1``"""
    rel = np.asarray(relevances, dtype=np.float64)[:k]
    discounts = np.log2(np.arange(2, rel.size + 2))
    return float(np.sum((np.power(2.0, rel) - 1.0) / discounts))


def ndcg_at_k(ranked_ids, judgments, k=10):
    """Normalized DCG of the first ``k`` ranked documents.

    Parameters
    ----------
    ranked_ids : list
        Document ids in ranked order.
    judgments : dict
        Document id to graded relevance; missing documents count as 0.
    k : int

    Returns
    -------
    float or None
        ``None`` (:data:`NO_RELEVANT_DOCUMENTS`) when no judged document
        has positive relevance.

    Examples
    --------
    >>> ndcg_at_k(['a', 'b', 'c'], {'c': 3})
    0.5
    """
    ranked_ids = list(ranked_ids)
    if not ranked_ids:
        raise InputError('ndcg needs a non-empty ranking')
    grades = [g for g in judgments.values() if g < 0]
    if grades:
        raise InputError('Relevance grades must be non-negative')
    ideal = dcg(sorted(judgments.values(), reverse=True), k)
    if ideal == 0:
        return NO_RELEVANT_DOCUMENTS
    gains = [judgments.get(doc_id, 0) for doc_id in ranked_ids]
    return dcg(gains, k) / ideal


def ndcg_at_10(ranked_ids, judgments):
    return ndcg_at_k(ranked_ids, judgments, k=10)


def auroc(scores, labels):
    """Area under the ROC curve as a Mann-Whitney statistic.

    Equals the probability that a random positive scores above a random
    negative, counting ties as one half.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positive = _binary_labels(labels, scores.size, 'auroc')
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError('AUROC is undefined when only one class '
                                   'is present')
    ranks = scipy.stats.rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _threshold_counts(scores, positive):
    """True and false positive counts at each distinct score, descending"""
    order = np.argsort(-scores, kind='mergesort')
    scores = scores[order]
    positive = positive[order]
    # last index of each run of equal scores
    distinct = np.flatnonzero(np.diff(scores)) if scores.size > 1 \
        else np.array([], dtype=int)
    ends = np.r_[distinct, scores.size - 1]
    tp = np.cumsum(positive)[ends]
    fp = (ends + 1) - tp
    return tp.astype(np.float64), fp.astype(np.float64), scores[ends]


def roc_curve(scores, labels):
    """False and true positive rates over descending thresholds.

    Returns
    -------
    (fpr, tpr, thresholds)
        The first point is (0, 0) at threshold +inf.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positive = _binary_labels(labels, scores.size, 'roc_curve')
    n_pos = positive.sum()
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError('ROC curve is undefined when only one '
                                   'class is present')
    tp, fp, thresholds = _threshold_counts(scores, positive)
    return (np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos],
            np.r_[np.inf, thresholds])


def precision_recall_curve(scores, labels):
    """Recall and precision at each distinct score, descending.

    Returns
    -------
    (recall, precision, thresholds)
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positive = _binary_labels(labels, scores.size, 'precision_recall_curve')
    n_pos = positive.sum()
    if n_pos == 0:
        raise UndefinedMetricError('Precision-recall is undefined without '
                                   'positive labels')
    tp, fp, thresholds = _threshold_counts(scores, positive)
    return tp / n_pos, tp / (tp + fp), thresholds


def auprc(scores, labels):
    """Average precision: precision weighted by each recall increment.

    Examples
    --------
    >>> auprc([0.5, 0.5, 0.5, 0.5], [1, 0, 0, 0])
    0.25
    """
    recall, precision, _ = precision_recall_curve(scores, labels)
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def mae(predictions, targets):
    """Mean absolute error"""
    predictions, targets = _paired(predictions, targets, 'mae')
    return float(np.mean(np.abs(predictions - targets)))

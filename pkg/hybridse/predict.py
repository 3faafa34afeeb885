"""
Downstream prediction from sentence embeddings.

Note embeddings are averaged into one feature vector per admission; a
feed-forward head with a single hidden layer is then trained either as a
binary classifier (sigmoid output, binary cross-entropy) or as a regressor
(linear output, squared error). :func:`cross_validate` runs the stratified
k-fold protocol and reports AUROC and AUPRC, or MAE next to the MAE of
predicting the training-fold mean.

Dataset files are text::

    <dim>\t<kind>
    <admission_id>\t<label>\t<v1>,<v2>,...,<v_dim>
"""
import collections
import contextlib
import os

import numpy as np
import pandas as pd
import scipy.special

from hybridse import autodiff as ad
from hybridse.benchmark import read_tsv
from hybridse.config import HeadConfig
from hybridse.encoder import Module, linear
from hybridse.errors import FormatError, InputError, UsageError
from hybridse.logging import get_logger
from hybridse.metrics import auprc, auroc, mae, precision_recall_curve, \
    roc_curve
from hybridse.optim import Adam
from hybridse.util import atomic_write, derive_seeds, executor_for, \
    read_lines, run_ordered

_logger = get_logger(__name__)

CLASSIFICATION = 'classification'
REGRESSION = 'regression'
KINDS = (CLASSIFICATION, REGRESSION)

AdmissionSample = collections.namedtuple(
    'AdmissionSample', ['admission_id', 'feature', 'label'])


def _check_kind(kind):
    if kind not in KINDS:
        raise UsageError('Task kind must be one of {}, got "{}"'.format(
            ', '.join(KINDS), kind))


def aggregate_admission(note_embeddings):
    """Mean of an admission's note embeddings (one note per row)"""
    notes = np.asarray(note_embeddings, dtype=np.float64)
    if notes.ndim == 1:
        notes = notes[None, :]
    if notes.ndim != 2 or notes.shape[0] == 0:
        raise InputError('An admission needs at least one note embedding')
    return notes.mean(axis=0)


class AdmissionDataset(object):
    """Feature vectors with one label each.

    Parameters
    ----------
    samples : list of AdmissionSample
    kind : str
        ``'classification'`` (labels 0/1) or ``'regression'``.
    """
    def __init__(self, samples, kind):
        _check_kind(kind)
        self.kind = kind
        self.samples = [AdmissionSample(str(s.admission_id),
                                        np.asarray(s.feature,
                                                   dtype=np.float64),
                                        float(s.label)) for s in samples]
        if not self.samples:
            raise InputError('Dataset has no samples')
        ids = [s.admission_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise InputError('Duplicate admission ids in dataset')
        dims = set(s.feature.shape for s in self.samples)
        if len(dims) != 1 or len(dims.pop()) != 1:
            raise InputError('Feature vectors must be 1-D and share one '
                             'dimension')
        if not np.all(np.isfinite(self.features)):
            raise InputError('Features must be finite')
        if not np.all(np.isfinite(self.labels)):
            raise InputError('Labels must be finite')
        if kind == CLASSIFICATION and not np.all(np.isin(self.labels,
                                                         (0, 1))):
            raise InputError('Classification labels must be 0 or 1')

    def __len__(self):
        return len(self.samples)

    def __repr__(self):
        return '{}({} samples, dim={}, kind={!r})'.format(
            self.__class__.__name__, len(self), self.dim, self.kind)

    @property
    def dim(self):
        return self.samples[0].feature.shape[0]

    @property
    def ids(self):
        return [s.admission_id for s in self.samples]

    @property
    def features(self):
        return np.stack([s.feature for s in self.samples])

    @property
    def labels(self):
        return np.array([s.label for s in self.samples])

    def sorted(self):
        """Copy with samples ordered by admission id"""
        return AdmissionDataset(sorted(self.samples,
                                       key=lambda s: s.admission_id),
                                self.kind)


def build_admission_dataset(store, records, admission_labels, kind):
    """One averaged feature vector per labeled admission.

    Parameters
    ----------
    store : EmbeddingStore
        Sentence embeddings keyed by record id.
    records : list of SentenceRecord
        Map record ids to admissions.
    admission_labels : dict
        Admission id to label.
    kind : str

    Raises
    ------
    InputError
        If a labeled admission has no embedded note sentence.
    """
    by_admission = collections.defaultdict(list)
    for record in records:
        if record.record_id in store:
            by_admission[record.admission_id].append(record.record_id)
    samples = []
    for admission_id in sorted(admission_labels):
        record_ids = by_admission.get(admission_id, [])
        if not record_ids:
            raise InputError('Admission "{}" has no embedded notes'.format(
                admission_id))
        samples.append(AdmissionSample(
            admission_id, aggregate_admission(store.rows(record_ids)),
            admission_labels[admission_id]))
    _logger.info('Built %d admissions from %d sentence embeddings',
                 len(samples), len(store))
    return AdmissionDataset(samples, kind)


def read_admission_labels(path):
    """``admission_id<TAB>label`` lines as a dict"""
    labels = {}
    for lineno, (admission_id, label) in read_tsv(path, 2):
        try:
            labels[admission_id] = float(label)
        except ValueError:
            raise FormatError('Label is not a number: "{}"'.format(label),
                              path=path, line=lineno)
    return labels


def write_dataset(dataset, path):
    with atomic_write(path, 'w', encoding='utf-8') as f:
        f.write('{}\t{}\n'.format(dataset.dim, dataset.kind))
        for s in dataset.samples:
            label = int(s.label) if dataset.kind == CLASSIFICATION \
                else repr(s.label)
            f.write('{}\t{}\t{}\n'.format(
                s.admission_id, label,
                ','.join(repr(float(v)) for v in s.feature)))


def read_dataset(path):
    with contextlib.closing(read_lines(path)) as lines:
        _, header = next(lines, (1, ''))
    header = header.rstrip('\r\n').split('\t')
    if len(header) != 2 or not header[0].isdigit() or header[1] not in KINDS:
        raise FormatError('Header must be "<dim>\\t<kind>"', path=path,
                          line=1)
    dim, kind = int(header[0]), header[1]
    samples = []
    rows = read_tsv(path, 3, skip_lines=1)
    for lineno, (admission_id, label, values) in rows:
        try:
            feature = np.array([float(v) for v in values.split(',')])
            label = float(label)
        except ValueError:
            raise FormatError('Malformed number', path=path, line=lineno)
        if feature.shape != (dim,):
            raise FormatError('Expected {} feature values, found {}'.format(
                dim, feature.size), path=path, line=lineno)
        samples.append(AdmissionSample(admission_id, feature, label))
    return AdmissionDataset(samples, kind)


class FoldPlan(object):
    """Disjoint test folds covering every sample exactly once.

    Attributes
    ----------
    folds : tuple of ndarray
        Sorted sample indices of each test fold.
    seed : int
    """
    def __init__(self, folds, seed):
        self.folds = tuple(np.sort(np.asarray(f, dtype=int)) for f in folds)
        self.seed = seed
        self.n_samples = int(sum(len(f) for f in self.folds))
        union = np.concatenate(self.folds) if self.folds else np.array([])
        if not np.array_equal(np.sort(union), np.arange(self.n_samples)):
            raise InputError('Folds do not partition the samples')

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        for i in range(len(self)):
            yield self.split(i)

    def split(self, fold):
        """``(train indices, test indices)`` with ``fold`` held out"""
        test = self.folds[fold]
        train = np.setdiff1d(np.arange(self.n_samples), test)
        return train, test


def stratified_folds(labels, k=5, seed=0, kind=CLASSIFICATION):
    """Seeded fold assignment, stratified by class for classification.

    Members of each class (classes taken in sorted order) are shuffled and
    dealt round-robin into the folds; the dealing position carries over
    from one class to the next so fold sizes differ by at most one. For
    regression all samples form a single group.

    Raises
    ------
    UsageError
        If a class (or, for regression, the dataset) has fewer than ``k``
        members.
    """
    _check_kind(kind)
    labels = np.asarray(labels)
    if k < 2:
        raise UsageError('Need at least 2 folds, got {}'.format(k))
    if kind == CLASSIFICATION:
        groups = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    else:
        groups = [np.arange(labels.size)]
    for group in groups:
        if len(group) < k:
            raise UsageError('Cannot split a group of {} samples into {} '
                             'folds'.format(len(group), k))
    rng = np.random.default_rng(seed)
    assignment = np.empty(labels.size, dtype=int)
    position = 0
    for group in groups:
        shuffled = rng.permutation(group)
        assignment[shuffled] = (position + np.arange(len(shuffled))) % k
        position += len(shuffled)
    return FoldPlan([np.flatnonzero(assignment == f) for f in range(k)],
                    seed)


class HeadModel(Module):
    """Feed-forward network with one ReLU hidden layer and a scalar output.

    Inputs are standardized with the training set's per-feature mean and
    standard deviation; regression targets likewise. Zero deviations are
    replaced by 1.
    """
    def __init__(self, dim, kind, hidden=256, seed=0):
        super(HeadModel, self).__init__()
        _check_kind(kind)
        self.kind = kind
        rng = np.random.default_rng(seed)
        self._add('hidden.weight',
                  rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, hidden)))
        self._zeros('hidden.bias', (hidden,))
        self._add('output.weight',
                  rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, 1)))
        self._zeros('output.bias', (1,))
        self.feature_mean = np.zeros(dim)
        self.feature_scale = np.ones(dim)
        self.target_mean = 0.0
        self.target_scale = 1.0

    def __repr__(self):
        return '{}(dim={}, hidden={}, kind={!r})'.format(
            self.__class__.__name__, self['hidden.weight'].shape[0],
            self['hidden.weight'].shape[1], self.kind)

    def fit_scaling(self, features, targets):
        self.feature_mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.feature_scale = np.where(std > 0, std, 1.0)
        if self.kind == REGRESSION:
            self.target_mean = float(targets.mean())
            std = float(targets.std())
            self.target_scale = std if std > 0 else 1.0

    def standardize(self, features):
        return (np.asarray(features, dtype=np.float64) -
                self.feature_mean) / self.feature_scale

    def scaled_targets(self, targets):
        return (np.asarray(targets, dtype=np.float64) - self.target_mean) / \
            self.target_scale

    def forward(self, features):
        """Raw output (logit or standardized value) per row, shape (n,)"""
        x = ad.Tensor(self.standardize(features))
        hidden = ad.relu(linear(x, self['hidden.weight'],
                                self['hidden.bias']))
        out = linear(hidden, self['output.weight'], self['output.bias'])
        return ad.reshape(out, (out.shape[0],))

    def loss(self, features, targets):
        out = self.forward(features)
        if self.kind == CLASSIFICATION:
            return ad.bce_with_logits(out, targets)
        diff = out - ad.Tensor(self.scaled_targets(targets))
        return ad.mean(diff * diff)

    def predict(self, features):
        """Positive-class probabilities, or predicted target values"""
        with ad.no_grad():
            out = self.forward(features).data.astype(np.float64)
        if self.kind == CLASSIFICATION:
            return scipy.special.expit(out)
        return out * self.target_scale + self.target_mean


def train_head(features, targets, kind, config=None):
    """Fit a :class:`HeadModel` for ``config.epochs`` passes over the data.

    Each epoch visits the samples in a fresh seeded order, in batches of
    ``config.batch_size`` (the last batch may be smaller).

    Raises
    ------
    InputError
        If the training set is empty or has non-finite features.
    """
    config = config if config is not None else HeadConfig()
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if features.ndim != 2 or features.shape[0] == 0:
        raise InputError('Head training needs a non-empty 2-D feature '
                         'matrix, got shape {}'.format(features.shape))
    if not np.all(np.isfinite(features)):
        raise InputError('Head training features must be finite')
    if targets.size != features.shape[0]:
        raise InputError('{} targets for {} samples'.format(
            targets.size, features.shape[0]))
    init_seed, order_seed = derive_seeds(config.seed, 2)
    head = HeadModel(features.shape[1], kind, hidden=config.hidden,
                     seed=init_seed)
    head.fit_scaling(features, targets)
    optimizer = Adam(head.parameters(), lr=config.lr)
    rng = np.random.default_rng(order_seed)
    n = features.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss = head.loss(features[batch], targets[batch])
            ad.backward(loss)
            optimizer.step()
            total += float(loss.item()) * len(batch)
        _logger.debug('head epoch %d loss %.6f', epoch + 1, total / n)
    return head


def _run_fold(job):
    """Train on one fold's training part and score its test part"""
    features, labels, train, test, kind, config = job
    head = train_head(features[train], labels[train], kind, config)
    predictions = head.predict(features[test])
    truth = labels[test]
    if kind == CLASSIFICATION:
        return dict(metrics=collections.OrderedDict(
                        [('auroc', auroc(predictions, truth)),
                         ('auprc', auprc(predictions, truth))]),
                    roc=roc_curve(predictions, truth),
                    pr=precision_recall_curve(predictions, truth),
                    predictions=predictions)
    baseline = np.full(truth.shape, labels[train].mean())
    return dict(metrics=collections.OrderedDict(
                    [('mae', mae(predictions, truth)),
                     ('baseline_mae', mae(baseline, truth))]),
                predictions=predictions)


class CrossValidationResult(object):
    """Per-fold metrics of one cross-validation run.

    Attributes
    ----------
    kind : str
    folds : pandas.DataFrame
        One row per fold (index ``fold``, from 1), one column per metric.
    curves : list of dict
        Classification only: per fold, ``roc`` as (fpr, tpr, thresholds)
        and ``pr`` as (recall, precision, thresholds).
    predictions : pandas.Series
        Held-out prediction of every sample, indexed by admission id.
    """
    def __init__(self, kind, folds, curves, predictions):
        self.kind = kind
        self.folds = folds
        self.curves = curves
        self.predictions = predictions

    def __repr__(self):
        return '{}({!r}, {} folds)'.format(self.__class__.__name__,
                                           self.kind, len(self.folds))

    @property
    def summary(self):
        """Mean and sample standard deviation of every metric"""
        return pd.DataFrame({'mean': self.folds.mean(),
                             'std': self.folds.std(ddof=1)})

    def format_summary(self):
        return ''.join('{}\t{:.4f}\t{:.4f}\n'.format(metric, row['mean'],
                                                     row['std'])
                       for metric, row in self.summary.iterrows())

    def write(self, directory):
        """Write fold metrics, summary and per-fold curve files"""
        written = []

        def _table(name, frame, index=True):
            path = os.path.join(directory, name)
            with atomic_write(path, 'w', encoding='utf-8') as f:
                frame.to_csv(f, sep='\t', index=index, float_format='%.6f',
                             lineterminator='\n')
            written.append(path)

        _table('folds.tsv', self.folds)
        path = os.path.join(directory, 'summary.tsv')
        with atomic_write(path, 'w', encoding='utf-8') as f:
            f.write(self.format_summary())
        written.append(path)
        for fold, curve in enumerate(self.curves, 1):
            fpr, tpr, _ = curve['roc']
            recall, precision, _ = curve['pr']
            _table('roc_fold{}.tsv'.format(fold),
                   pd.DataFrame({'fpr': fpr, 'tpr': tpr}), index=False)
            _table('pr_fold{}.tsv'.format(fold),
                   pd.DataFrame({'recall': recall, 'precision': precision}),
                   index=False)
        return written


def cross_validate(dataset, kind=None, config=None, num_processors=1):
    """Stratified k-fold evaluation of a freshly trained head per fold.

    Samples are ordered by admission id before folds are planned, so the
    outcome does not depend on input order.

    Parameters
    ----------
    dataset : AdmissionDataset
    kind : str, optional
        Defaults to ``dataset.kind``.
    config : HeadConfig, optional
    num_processors : int
        Folds train in parallel processes when above 1.

    Returns
    -------
    CrossValidationResult
    """
    config = config if config is not None else HeadConfig()
    kind = kind or dataset.kind
    _check_kind(kind)
    dataset = dataset.sorted()
    features, labels = dataset.features, dataset.labels
    plan = stratified_folds(labels, k=config.folds, seed=config.seed,
                            kind=kind)
    fold_seeds = derive_seeds(config.seed, len(plan))
    jobs = [(features, labels, train, test, kind,
             config.replace(seed=fold_seed))
            for (train, test), fold_seed in zip(plan, fold_seeds)]
    _logger.info('Cross-validating %s head on %d samples, %d folds',
                 kind, len(dataset), len(plan))
    with executor_for(num_processors) as executor:
        outcomes = run_ordered(executor, _run_fold, jobs)
    folds = pd.DataFrame([o['metrics'] for o in outcomes],
                         index=pd.Index(np.arange(1, len(plan) + 1),
                                        name='fold'))
    held_out = np.empty(len(dataset))
    for (_, test), outcome in zip(plan, outcomes):
        held_out[test] = outcome['predictions']
    curves = [dict(roc=o['roc'], pr=o['pr']) for o in outcomes
              if 'roc' in o]
    result = CrossValidationResult(
        kind, folds, curves,
        pd.Series(held_out, index=pd.Index(dataset.ids,
                                           name='admission_id')))
    for metric, row in result.summary.iterrows():
        _logger.info('%s: %.4f +/- %.4f', metric, row['mean'], row['std'])
    return result

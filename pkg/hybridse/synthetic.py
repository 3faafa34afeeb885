"""
Synthetic clinical-style data for running every pipeline stage without
access-restricted notes.

:func:`generate_synthetic_corpus` fills sentence templates from
topic-specific vocabulary pools, so embeddings of a working encoder should
cluster by topic. :func:`make_admission_dataset` draws feature/label sets
for the prediction heads.
"""
import collections

import numpy as np

from hybridse.benchmark import read_tsv
from hybridse.corpus import SentenceRecord, write_records, word_count
from hybridse.errors import UsageError
from hybridse.predict import AdmissionDataset, AdmissionSample, \
    CLASSIFICATION, REGRESSION
from hybridse.util import atomic_write

TOPICS = collections.OrderedDict([
    ('renal', dict(
        subjects=['creatinine', 'eGFR', 'urine output', 'potassium',
                  'the kidney ultrasound', 'proteinuria', 'BUN'],
        findings=['acute kidney injury', 'chronic kidney disease',
                  'hyperkalemia', 'oliguria', 'nephropathy',
                  'renal insufficiency', 'volume overload'],
        actions=['started dialysis', 'held the ACE inhibitor',
                 'consulted nephrology', 'adjusted diuretics',
                 'repeated the renal panel'])),
    ('cardiac', dict(
        subjects=['troponin', 'the ECG', 'ejection fraction',
                  'blood pressure', 'the echocardiogram', 'BNP',
                  'heart rate'],
        findings=['atrial fibrillation', 'heart failure',
                  'myocardial infarction', 'chest pain', 'tachycardia',
                  'a new murmur', 'cardiomyopathy'],
        actions=['started anticoagulation', 'consulted cardiology',
                 'gave metoprolol', 'ordered a stress test',
                 'increased the beta blocker'])),
    ('respiratory', dict(
        subjects=['oxygen saturation', 'the chest x-ray', 'respiratory rate',
                  'the arterial blood gas', 'sputum culture',
                  'peak flow', 'breath sounds'],
        findings=['pneumonia', 'COPD exacerbation', 'hypoxia',
                  'pleural effusion', 'wheezing', 'respiratory distress',
                  'atelectasis'],
        actions=['started nebulizers', 'placed on BiPAP',
                 'consulted pulmonology', 'began antibiotics',
                 'weaned supplemental oxygen'])),
    ('neurologic', dict(
        subjects=['the head CT', 'mental status', 'the EEG',
                  'pupil reactivity', 'motor strength', 'the MRI brain',
                  'gait'],
        findings=['acute stroke', 'seizure activity', 'confusion',
                  'left-sided weakness', 'aphasia', 'syncope',
                  'encephalopathy'],
        actions=['consulted neurology', 'loaded levetiracetam',
                 'started aspirin', 'ordered frequent neuro checks',
                 'obtained a lumbar puncture'])),
    ('hepatic', dict(
        subjects=['bilirubin', 'the liver enzymes', 'INR', 'albumin',
                  'the abdominal ultrasound', 'ammonia', 'ascitic fluid'],
        findings=['cirrhosis', 'hepatic encephalopathy', 'jaundice',
                  'ascites', 'variceal bleeding', 'hepatitis',
                  'portal hypertension'],
        actions=['started lactulose', 'performed paracentesis',
                 'consulted hepatology', 'gave vitamin K',
                 'scheduled an endoscopy'])),
    ('infectious', dict(
        subjects=['the white count', 'blood cultures', 'lactate',
                  'temperature', 'the urinalysis', 'procalcitonin',
                  'the wound culture'],
        findings=['sepsis', 'cellulitis', 'bacteremia',
                  'urinary tract infection', 'fever', 'an abscess',
                  'C. diff colitis'],
        actions=['started vancomycin', 'consulted infectious disease',
                 'drew repeat cultures', 'narrowed antibiotics',
                 'removed the central line'])),
])

TEMPLATES = (
    'The patient was admitted with {finding} and {action}.',
    'On review {subject} was consistent with {finding} so the team '
    '{action}.',
    'Overnight {subject} worsened in the setting of {finding}.',
    'We {action} given concern for {finding} today.',
    'Repeat {subject} this morning suggested ongoing {finding}.',
    'History is notable for {finding} and {subject} was checked on '
    'arrival.',
    'Plan: {action} and follow {subject} closely for {finding}.',
)

SyntheticCorpus = collections.namedtuple('SyntheticCorpus',
                                         ['records', 'labels'])
SyntheticCorpus.__doc__ = """Sentence records with aligned topic labels"""

SENTENCES_PER_ADMISSION = 5


def _sentence(pool, rng):
    template = TEMPLATES[rng.integers(len(TEMPLATES))]
    return template.format(**{key[:-1]: pool[key][rng.integers(
        len(pool[key]))] for key in ('subjects', 'findings', 'actions')})


def generate_synthetic_corpus(n_sentences, n_topics=2, seed=42):
    """Templated sentences from ``n_topics`` vocabulary pools.

    Topics are assigned by a seeded shuffle of a balanced assignment, so
    every topic appears. Each sentence is its own document; consecutive
    groups of sentences share an admission.

    Returns
    -------
    SyntheticCorpus

    Raises
    ------
    UsageError
        Unless ``2 <= n_topics <= len(TOPICS)`` and
        ``n_sentences >= n_topics``.
    """
    if not 2 <= n_topics <= len(TOPICS):
        raise UsageError('n_topics must be between 2 and {}, got {}'.format(
            len(TOPICS), n_topics))
    if n_sentences < n_topics:
        raise UsageError('n_sentences ({}) must be at least n_topics '
                         '({})'.format(n_sentences, n_topics))
    topics = list(TOPICS)[:n_topics]
    rng = np.random.default_rng(seed)
    assignment = rng.permutation(np.arange(n_sentences) % n_topics)
    records, labels = [], []
    for i, topic_index in enumerate(assignment):
        topic = topics[topic_index]
        text = _sentence(TOPICS[topic], rng)
        records.append(SentenceRecord(
            'syn{:06d}'.format(i),
            'adm{:05d}'.format(i // SENTENCES_PER_ADMISSION), 0, text,
            word_count(text)))
        labels.append(topic)
    return SyntheticCorpus(records, labels)


def write_synthetic_corpus(corpus, records_path, labels_path):
    """Records as JSON lines, labels as ``record_id<TAB>topic`` lines"""
    write_records(corpus.records, records_path)
    with atomic_write(labels_path, 'w', encoding='utf-8') as f:
        for record, label in zip(corpus.records, corpus.labels):
            f.write('{}\t{}\n'.format(record.record_id, label))


def read_topic_labels(path):
    """Record id to topic label, in file order"""
    return collections.OrderedDict(
        (fields[0], fields[1]) for _, fields in read_tsv(path, 2))


def make_admission_dataset(n_samples, kind=CLASSIFICATION, dim=8,
                           positives=None, signal=2.0, oracle=False,
                           shuffle_labels=False, seed=0):
    """Random admissions with a controllable label signal.

    Parameters
    ----------
    n_samples : int
    kind : str
        ``'classification'`` or ``'regression'``.
    dim : int
        Feature dimension (ignored when ``oracle`` is set).
    positives : int, optional
        Classification only; defaults to 11% of the samples.
    signal : float
        Shift of the first feature per standardized label unit.
    oracle : bool
        Features are the labels themselves (a single column).
    shuffle_labels : bool
        Permute labels after drawing features, destroying the signal.
    seed : int

    Returns
    -------
    AdmissionDataset
        Regression targets are eGFR-like values in [5, 120].
    """
    if n_samples < 1:
        raise UsageError('n_samples must be positive')
    rng = np.random.default_rng(seed)
    if kind == CLASSIFICATION:
        if positives is None:
            positives = int(round(0.11 * n_samples))
        if not 0 <= positives <= n_samples:
            raise UsageError('positives must be between 0 and n_samples')
        labels = rng.permutation(
            np.r_[np.ones(positives), np.zeros(n_samples - positives)])
    elif kind == REGRESSION:
        labels = np.clip(rng.normal(60.0, 20.0, size=n_samples), 5.0, 120.0)
    else:
        raise UsageError('Unknown task kind "{}"'.format(kind))
    if oracle:
        features = labels[:, None].copy()
    else:
        features = rng.normal(size=(n_samples, dim))
        spread = labels.std()
        features[:, 0] += signal * (labels - labels.mean()) / \
            (spread if spread > 0 else 1.0)
    if shuffle_labels:
        labels = rng.permutation(labels)
    return AdmissionDataset(
        [AdmissionSample('adm{:05d}'.format(i), features[i], labels[i])
         for i in range(n_samples)], kind)

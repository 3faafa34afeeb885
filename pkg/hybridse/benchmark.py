"""
Embedding benchmarks: semantic similarity, clustering and retrieval.

Each task type knows how to embed its own texts with any embedder (an
object with ``embed(texts, ids)`` returning an
:class:`~hybridse.store.EmbeddingStore`, such as
:class:`~hybridse.encoder.EncoderEmbedder` or
:class:`~hybridse.store.HybridEmbedder`) and how to score the result.
Scores are reported on a 0-100 scale.

Task files are tab-separated text:

* similarity: ``text_a  text_b  gold_score``
* clustering: ``text  label``
* retrieval: queries ``id  text``, corpus ``id  text`` and judgments
  ``query_id  doc_id  grade``
"""
from abc import ABCMeta, abstractmethod
import collections

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from hybridse.errors import FormatError, InputError, NumericError, \
    UndefinedMetricError, UsageError
from hybridse.logging import get_logger
from hybridse.metrics import ndcg_at_k, spearman, v_measure
from hybridse.store import l2_normalize
from hybridse.util import derive_seeds, read_lines

_logger = get_logger(__name__)

DEFAULT_MAX_ITERS = 300

StsPair = collections.namedtuple('StsPair', ['text_a', 'text_b',
                                             'gold_score'])
KMeansResult = collections.namedtuple('KMeansResult',
                                      ['labels', 'centroids', 'inertia'])
TaskScore = collections.namedtuple('TaskScore', ['task', 'kind', 'metric',
                                                 'score'])


def read_tsv(path, n_columns, skip_lines=0):
    """``(line number, fields)`` for every non-blank line of a TSV file"""
    rows = []
    for lineno, line in read_lines(path):
        if lineno <= skip_lines:
            continue
        line = line.rstrip('\r\n')
        if not line.strip():
            continue
        fields = line.split('\t')
        if len(fields) != n_columns:
            raise FormatError('Expected {} tab-separated fields, found '
                              '{}'.format(n_columns, len(fields)),
                              path=path, line=lineno)
        rows.append((lineno, fields))
    return rows


def _number(text, path, lineno, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise FormatError('Not a number: "{}"'.format(text), path=path,
                          line=lineno)
    if not np.isfinite(value):
        raise FormatError('Value must be finite', path=path, line=lineno)
    return value


class EvalTask(object, metaclass=ABCMeta):
    """A labeled evaluation task.

    Parameters
    ----------
    name : str
        Used in reports.
    """
    kind = None
    metric = None

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return '{}({!r}, {} items)'.format(self.__class__.__name__,
                                           self.name, len(self))

    @abstractmethod
    def __len__(self):
        pass

    @abstractmethod
    def embed(self, embedder):
        """Embed every text the task needs into one store"""

    @abstractmethod
    def score(self, store, seed=0):
        """Score a store produced by :meth:`embed`; 0-100 scale"""

    def evaluate(self, embedder, seed=0):
        value = self.score(self.embed(embedder), seed=seed)
        _logger.info('%s on %s: %s %.2f', getattr(embedder, 'name', '?'),
                     self.name, self.metric, value)
        return TaskScore(self.name, self.kind, self.metric, value)


class StsTask(EvalTask):
    """Sentence pairs with annotated similarity scores"""
    kind = 'sts'
    metric = 'spearman'

    def __init__(self, name, pairs):
        super(StsTask, self).__init__(name)
        self.pairs = [StsPair(a, b, float(g)) for a, b, g in pairs]
        if not all(np.isfinite(p.gold_score) for p in self.pairs):
            raise InputError('Gold scores must be finite')

    def __len__(self):
        return len(self.pairs)

    @staticmethod
    def pair_ids(index):
        return 'a:{}'.format(index), 'b:{}'.format(index)

    def embed(self, embedder):
        texts, ids = [], []
        for i, pair in enumerate(self.pairs):
            texts.extend([pair.text_a, pair.text_b])
            ids.extend(self.pair_ids(i))
        return embedder.embed(texts, ids)

    def score(self, store, seed=0):
        return sts_evaluate(store, self)

    @classmethod
    def from_file(cls, path, name=None):
        pairs = [(a, b, _number(g, path, lineno))
                 for lineno, (a, b, g) in read_tsv(path, 3)]
        return cls(name or path, pairs)


class ClusterTask(EvalTask):
    """Texts with class labels; ``k`` is the number of distinct labels"""
    kind = 'cluster'
    metric = 'v_measure'

    def __init__(self, name, items, n_runs=1):
        super(ClusterTask, self).__init__(name)
        self.items = [(text, str(label)) for text, label in items]
        self.k = len(set(label for _, label in self.items))
        if self.k < 2:
            raise InputError('A clustering task needs at least two '
                             'distinct labels, found {}'.format(self.k))
        self.n_runs = n_runs

    def __len__(self):
        return len(self.items)

    @property
    def labels(self):
        return [label for _, label in self.items]

    @staticmethod
    def item_id(index):
        return 'item:{}'.format(index)

    def embed(self, embedder):
        return embedder.embed([text for text, _ in self.items],
                              [self.item_id(i) for i in range(len(self))])

    def score(self, store, seed=0):
        return cluster_evaluate(store, self, seed=seed, n_runs=self.n_runs)

    @classmethod
    def from_file(cls, path, name=None, n_runs=1):
        return cls(name or path, [tuple(fields)
                                  for _, fields in read_tsv(path, 2)],
                   n_runs=n_runs)


class RetrievalTask(EvalTask):
    """Queries, a document corpus and graded relevance judgments"""
    kind = 'retrieval'
    metric = 'ndcg_at_10'

    def __init__(self, name, queries, corpus, judgments):
        super(RetrievalTask, self).__init__(name)
        self.queries = [(str(q), text) for q, text in queries]
        self.corpus = [(str(d), text) for d, text in corpus]
        if not self.corpus:
            raise InputError('Retrieval corpus is empty')
        doc_ids = set(d for d, _ in self.corpus)
        query_ids = set(q for q, _ in self.queries)
        self.judgments = collections.defaultdict(dict)
        for (query_id, doc_id), grade in judgments.items():
            if doc_id not in doc_ids:
                raise InputError('Judged document "{}" is not in the '
                                 'corpus'.format(doc_id))
            if query_id not in query_ids:
                raise InputError('Judged query "{}" is not among the '
                                 'queries'.format(query_id))
            if grade != int(grade) or grade < 0:
                raise InputError('Relevance grades must be non-negative '
                                 'integers, got {}'.format(grade))
            self.judgments[query_id][doc_id] = int(grade)

    def __len__(self):
        return len(self.queries)

    def embed(self, embedder):
        texts = [t for _, t in self.queries] + [t for _, t in self.corpus]
        ids = ['q:' + q for q, _ in self.queries] + \
            ['d:' + d for d, _ in self.corpus]
        return embedder.embed(texts, ids)

    def score(self, store, seed=0):
        queries = store.subset(['q:' + q for q, _ in self.queries])
        corpus = store.subset(['d:' + d for d, _ in self.corpus])
        return retrieval_evaluate(queries, corpus, self)

    @classmethod
    def from_files(cls, queries_path, corpus_path, qrels_path, name=None):
        queries = [tuple(f) for _, f in read_tsv(queries_path, 2)]
        corpus = [tuple(f) for _, f in read_tsv(corpus_path, 2)]
        judgments = {}
        for lineno, (q, d, grade) in read_tsv(qrels_path, 3):
            judgments[(q, d)] = _number(grade, qrels_path, lineno, int)
        return cls(name or queries_path, queries, corpus, judgments)


def row_cosines(a, b):
    """Cosine similarity of matching rows of two matrices"""
    a = l2_normalize(a, 'first input')
    b = l2_normalize(b, 'second input')
    return np.sum(a * b, axis=1)


def sts_evaluate(store, task):
    """Spearman correlation (x100) of gold scores and embedding cosines.

    Parameters
    ----------
    store : EmbeddingStore
        Holds ``a:<i>`` and ``b:<i>`` rows for every pair (see
        :meth:`StsTask.embed`).
    task : StsTask or list of StsPair

    Raises
    ------
    AlignmentError
        If a pair has no embedding.
    UndefinedMetricError
        If the predicted cosines are constant.
    """
    pairs = task.pairs if isinstance(task, StsTask) else list(task)
    ids = [StsTask.pair_ids(i) for i in range(len(pairs))]
    first = store.rows([a for a, _ in ids])
    second = store.rows([b for _, b in ids])
    predicted = row_cosines(first, second)
    return 100.0 * spearman([p.gold_score for p in pairs], predicted)


def _kmeans_plus_plus(points, k, rng):
    n = len(points)
    chosen = [int(rng.integers(n))]
    nearest = cdist(points, points[chosen], 'sqeuclidean')[:, 0]
    while len(chosen) < k:
        total = nearest.sum()
        if total > 0:
            pick = int(rng.choice(n, p=nearest / total))
        else:
            # every remaining point duplicates a centre
            remaining = np.setdiff1d(np.arange(n), chosen)
            pick = int(rng.choice(remaining))
        chosen.append(pick)
        nearest = np.minimum(
            nearest, cdist(points, points[[pick]], 'sqeuclidean')[:, 0])
    return points[chosen].copy()


def kmeans(data, k, seed=0, max_iters=DEFAULT_MAX_ITERS):
    """Lloyd's algorithm from a seeded k-means++ initialization.

    Parameters
    ----------
    data : EmbeddingStore or array_like
        Points as rows.
    k : int
    seed : int
    max_iters : int
        Iterations stop earlier once the assignment no longer changes.

    Returns
    -------
    KMeansResult
        ``labels`` per row, final ``centroids`` and the within-cluster sum
        of squares after each assignment step in ``inertia``.
    """
    points = np.asarray(getattr(data, 'matrix', data), dtype=np.float64)
    n = len(points)
    if k < 1 or n < k:
        raise UsageError('k-means needs 1 <= k <= number of points (k={}, '
                         'points={})'.format(k, n))
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plus_plus(points, k, rng)
    labels = None
    inertia = []
    for _ in range(max_iters):
        distances = cdist(points, centroids, 'sqeuclidean')
        new_labels = distances.argmin(axis=1)
        inertia.append(float(distances[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return KMeansResult(labels, centroids, inertia)


def cluster_evaluate(store, task, seed=0, n_runs=1):
    """Mean V-measure (x100) of k-means clusterings against task labels"""
    ids = [ClusterTask.item_id(i) for i in range(len(task))]
    points = store.rows(ids)
    scores = []
    for run_seed in derive_seeds(seed, n_runs):
        result = kmeans(points, task.k, seed=run_seed)
        scores.append(v_measure(task.labels, result.labels).v)
    return 100.0 * float(np.mean(scores))


def retrieve(query, corpus, top_k=None):
    """Corpus ids ranked by exact cosine similarity to ``query``.

    Ties are broken by ascending id. ``top_k`` larger than the corpus
    returns the full ranking.

    Raises
    ------
    NumericError
        If the query vector has zero norm.
    """
    query = np.asarray(query, dtype=np.float64).ravel()
    norm = np.linalg.norm(query)
    if norm == 0:
        raise NumericError('Zero-norm query embedding')
    if len(corpus) == 0:
        raise UsageError('Cannot retrieve from an empty corpus')
    similarities = l2_normalize(corpus.matrix, 'corpus') @ (query / norm)
    order = sorted(range(len(corpus)),
                   key=lambda i: (-similarities[i], corpus.ids[i]))
    if top_k is not None:
        order = order[:top_k]
    return [corpus.ids[i] for i in order]


def retrieval_evaluate(queries, corpus, task, k=10):
    """Mean nDCG@k (x100) over queries with at least one relevant document.

    Parameters
    ----------
    queries : EmbeddingStore
        Rows ``q:<query id>``.
    corpus : EmbeddingStore
        Rows ``d:<doc id>``.
    task : RetrievalTask
    """
    scores = []
    for query_id, _ in task.queries:
        ranked = [doc[2:] for doc in retrieve(
            queries.vector('q:' + query_id), corpus, top_k=k)]
        value = ndcg_at_k(ranked, task.judgments.get(query_id, {}), k=k)
        if value is not None:
            scores.append(value)
    if not scores:
        raise UndefinedMetricError('No query of task "{}" has a relevant '
                                   'document'.format(task.name))
    return 100.0 * float(np.mean(scores))


def compare(embedders, tasks, seed=0):
    """Score every embedder on every task.

    Parameters
    ----------
    embedders : dict
        Model name to embedder, e.g. ``{'base': ..., 'simcse': ...,
        'tsdae': ..., 'hybrid': ...}``.
    tasks : list of EvalTask
    seed : int

    Returns
    -------
    pandas.DataFrame
        One row per (model, task) with columns ``model``, ``task``,
        ``kind``, ``metric`` and ``score``.
    """
    rows = []
    for model_name, embedder in embedders.items():
        for task in tasks:
            result = task.evaluate(embedder, seed=seed)
            rows.append(dict(model=model_name, **result._asdict()))
    return pd.DataFrame(rows, columns=['model', 'task', 'kind', 'metric',
                                       'score'])


def format_report(results):
    """One ``name<TAB>metric<TAB>score`` line per row, scores to 2 d.p.

    Parameters
    ----------
    results : pandas.DataFrame or list of TaskScore
        With a ``model`` column the name is ``<model>/<task>``.
    """
    if isinstance(results, pd.DataFrame):
        records = results.to_dict('records')
    else:
        records = [r._asdict() for r in results]
    lines = []
    for row in records:
        name = row['task'] if 'model' not in row else \
            '{}/{}'.format(row['model'], row['task'])
        lines.append('{}\t{}\t{:.2f}\n'.format(name, row['metric'],
                                               row['score']))
    return ''.join(lines)

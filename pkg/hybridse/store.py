"""
Embedding stores and hybrid concatenation.

An :class:`EmbeddingStore` is an immutable named matrix whose rows are
aligned with a list of unique record ids. Stores are persisted in a small
binary format (all integers little-endian)::

    b"EMBD"
    u32   version (1)
    u32   row count
    u32   dimension
    u16   name length, name bytes
    per row: u16 id length, id bytes
    f32   count x dim values, row-major
"""
import struct

import numpy as np
import pandas as pd

from hybridse.errors import AlignmentError, FormatError, InputError, \
    NumericError
from hybridse.logging import get_logger
from hybridse.util import atomic_write, ByteReader, pack_text

MAGIC = b'EMBD'
VERSION = 1

_logger = get_logger(__name__)


class EmbeddingStore(object):
    """A named matrix of embeddings with one record id per row.

    Parameters
    ----------
    name : str
    ids : list of str
        Unique row identifiers.
    matrix : array_like
        Shape (len(ids), dim); stored as float32.
    dim : int, optional
        Required only when ``ids`` is empty.
    """
    def __init__(self, name, ids, matrix, dim=None):
        self.name = name
        self.ids = tuple(ids)
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.size == 0 and matrix.ndim != 2:
            matrix = matrix.reshape(0, dim or 0)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.ids):
            raise InputError('Store "{}" has {} ids but a matrix of shape '
                             '{}'.format(name, len(self.ids), matrix.shape))
        if dim is not None and matrix.shape[1] != dim:
            raise InputError('Store "{}" declares dim {} but has {} '
                             'columns'.format(name, dim, matrix.shape[1]))
        if not np.all(np.isfinite(matrix)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(matrix), axis=1))[0])
            raise NumericError('Store "{}" has non-finite values in row '
                               '{}'.format(name, bad), row=bad)
        self._index = {}
        for i, record_id in enumerate(self.ids):
            if record_id in self._index:
                raise InputError('Duplicate record id "{}" in store '
                                 '"{}"'.format(record_id, name))
            self._index[record_id] = i
        matrix = matrix.copy()
        matrix.setflags(write=False)
        self.matrix = matrix

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.ids)

    def __contains__(self, record_id):
        return record_id in self._index

    def __repr__(self):
        return 'EmbeddingStore({!r}, count={}, dim={})'.format(
            self.name, len(self), self.dim)

    def __eq__(self, other):
        return isinstance(other, EmbeddingStore) and \
            self.name == other.name and self.ids == other.ids and \
            np.array_equal(self.matrix, other.matrix)

    def __ne__(self, other):
        return not self == other

    def position(self, record_id):
        try:
            return self._index[record_id]
        except KeyError:
            raise AlignmentError('No embedding for record "{}" in store '
                                 '"{}"'.format(record_id, self.name),
                                 record_id=record_id)

    def vector(self, record_id):
        return self.matrix[self.position(record_id)]

    def rows(self, record_ids):
        """Matrix of the rows for ``record_ids``, in that order"""
        return self.matrix[[self.position(r) for r in record_ids]] \
            .reshape(len(record_ids), self.dim)

    def subset(self, record_ids, name=None):
        record_ids = list(record_ids)
        return EmbeddingStore(name or self.name, record_ids,
                              self.rows(record_ids), dim=self.dim)

    def dataframe(self):
        """A :class:`pandas.DataFrame` indexed by record id"""
        return pd.DataFrame(self.matrix, index=pd.Index(self.ids, name='id'))


def l2_normalize(matrix, label='input'):
    """Rows scaled to unit length.

    Raises
    ------
    NumericError
        If a row has zero norm; the message names the row.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    zero = np.flatnonzero(norms[:, 0] == 0)
    if zero.size:
        raise NumericError('Zero-norm embedding at row {} of the {}'.format(
            zero[0], label), row=int(zero[0]))
    return matrix / norms


def check_aligned(a, b):
    """Raise AlignmentError unless both stores list the same ids in order"""
    for i, (id_a, id_b) in enumerate(zip(a.ids, b.ids)):
        if id_a != id_b:
            raise AlignmentError(
                'Stores "{}" and "{}" diverge at row {}: "{}" vs "{}"'.format(
                    a.name, b.name, i, id_a, id_b), record_id=id_a)
    if len(a) != len(b):
        longer = a if len(a) > len(b) else b
        first = longer.ids[min(len(a), len(b))]
        raise AlignmentError(
            'Stores "{}" ({} rows) and "{}" ({} rows) differ in length; '
            'first unmatched id "{}"'.format(a.name, len(a), b.name, len(b),
                                             first), record_id=first)


def concat_embeddings(a, b, normalize=True, name=None):
    """Hybrid store: the rows of ``a`` followed by the rows of ``b``.

    With ``normalize`` each component row is scaled to unit length first,
    so every hybrid row has norm sqrt(2) and the cosine of two hybrid rows
    is the mean of the two component cosines.

    Parameters
    ----------
    a, b : EmbeddingStore
        Must list identical ids in identical order.
    normalize : bool
    name : str, optional
        Defaults to ``"<a.name>+<b.name>"``, which records the order.
    """
    check_aligned(a, b)
    left, right = a.matrix, b.matrix
    if normalize:
        left = l2_normalize(left, 'store "{}"'.format(a.name))
        right = l2_normalize(right, 'store "{}"'.format(b.name))
    matrix = np.concatenate([left, right], axis=1)
    return EmbeddingStore(name or '{}+{}'.format(a.name, b.name), a.ids,
                          matrix, dim=a.dim + b.dim)


def dumps(store):
    parts = [MAGIC, struct.pack('<III', VERSION, len(store), store.dim),
             pack_text(store.name)]
    parts.extend(pack_text(record_id) for record_id in store.ids)
    parts.append(np.ascontiguousarray(store.matrix, dtype='<f4').tobytes())
    return b''.join(parts)


def loads(data, path=None):
    reader = ByteReader(data, path=path)
    reader.magic(MAGIC)
    version_offset = reader.offset
    version = reader.u32('version')
    if version != VERSION:
        raise FormatError('Unsupported store version {}'.format(version),
                          offset=version_offset, path=path)
    count = reader.u32('row count')
    dim = reader.u32('dimension')
    name = reader.text(reader.u16('name length'), 'store name')
    ids = [reader.text(reader.u16('id length'), 'record id')
           for _ in range(count)]
    values = reader.float32(count * dim, 'embedding matrix')
    reader.expect_end()
    try:
        return EmbeddingStore(name, ids, values.reshape(count, dim), dim=dim)
    except InputError as e:
        raise FormatError(str(e), path=path)


def write_store(store, path):
    """Write ``store`` atomically in the binary store format"""
    data = dumps(store)
    with atomic_write(path) as f:
        f.write(data)
    _logger.info('Wrote store "%s" (%d x %d) to %s', store.name, len(store),
                 store.dim, path)


def read_store(path):
    """Read a store, raising FormatError on any malformed content"""
    with open(path, 'rb') as f:
        data = f.read()
    return loads(data, path=path)


class HybridEmbedder(object):
    """Embed texts with two embedders and concatenate the results.

    Parameters
    ----------
    first, second : embedder
        Objects with an ``embed(texts, ids)`` method returning an
        :class:`EmbeddingStore`.
    normalize : bool
        L2-normalize each component before concatenation.
    """
    def __init__(self, first, second, normalize=True, name=None):
        self.first = first
        self.second = second
        self.normalize = normalize
        self.name = name or '{}+{}'.format(first.name, second.name)

    @property
    def dim(self):
        return self.first.dim + self.second.dim

    def embed(self, texts, ids=None):
        return concat_embeddings(self.first.embed(texts, ids),
                                 self.second.embed(texts, ids),
                                 normalize=self.normalize, name=self.name)

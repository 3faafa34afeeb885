"""
A small pre-norm transformer encoder that maps a sentence to one vector.

The encoder is built from :mod:`hybridse.autodiff` operations, so the same
forward pass serves training (with gradients and seeded dropout) and
inference (inside :func:`hybridse.autodiff.no_grad`). Sentence vectors are
the mean of the final token states over non-padding positions.

Examples
--------
>>> from hybridse.config import EncoderConfig
>>> from hybridse.corpus import build_vocab
>>> vocab = build_vocab(['the kidney function is stable today'],
...                     min_frequency=1)
>>> model = EncoderModel(EncoderConfig(vocab_size=len(vocab), d_model=16,
...                                    n_heads=2, d_ffn=32), seed=0)
>>> store = embed_sentences(model, vocab, ['the kidney is stable'],
...                         ids=['s0'])
>>> store.matrix.shape
(1, 16)
"""
import collections
import copy

import numpy as np

from hybridse import autodiff as ad
from hybridse.autodiff import Tensor
from hybridse.checkpoint import load_checkpoint, prefixed, save_checkpoint, \
    split_sections
from hybridse.config import EncoderConfig
from hybridse.corpus import BOS, EOS, PAD, tokenize
from hybridse.errors import FormatError, InputError
from hybridse.logging import get_logger
from hybridse.store import EmbeddingStore

_logger = get_logger(__name__)

INIT_STD = 0.02
MASKED_SCORE = -1e9


class Module(object):
    """Owner of an ordered set of named, gradient-requiring parameters"""
    def __init__(self):
        self._parameters = collections.OrderedDict()

    def _add(self, name, array):
        tensor = Tensor(array, requires_grad=True, name=name)
        self._parameters[name] = tensor
        return tensor

    def _normal(self, rng, name, shape):
        return self._add(name, rng.normal(0.0, INIT_STD, size=shape))

    def _zeros(self, name, shape):
        return self._add(name, np.zeros(shape))

    def _ones(self, name, shape):
        return self._add(name, np.ones(shape))

    def __getitem__(self, name):
        return self._parameters[name]

    def parameters(self):
        """Name to :class:`Tensor`, in creation order"""
        return collections.OrderedDict(self._parameters)

    def state_dict(self):
        return collections.OrderedDict(
            (name, t.data.copy()) for name, t in self._parameters.items())

    def load_state_dict(self, state):
        """Replace parameter values; names and shapes must match exactly"""
        missing = [n for n in self._parameters if n not in state]
        unexpected = [n for n in state if n not in self._parameters]
        if missing or unexpected:
            raise FormatError('Parameter names do not match the model '
                              '(missing: {}; unexpected: {})'.format(
                                  ', '.join(missing) or 'none',
                                  ', '.join(unexpected) or 'none'))
        for name, tensor in self._parameters.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise FormatError('Parameter "{}" has shape {}, expected '
                                  '{}'.format(name, value.shape,
                                              tensor.shape))
            tensor.data = value.astype(tensor.dtype, copy=True)
            tensor.grad = None

    def num_parameters(self):
        return int(sum(t.size for t in self._parameters.values()))

    def copy(self):
        """Independent copy with the same parameter values"""
        clone = copy.copy(self)
        clone._parameters = collections.OrderedDict(
            (name, Tensor(t.data.copy(), requires_grad=True, name=name,
                          dtype=t.dtype))
            for name, t in self._parameters.items())
        return clone

    def same_parameters(self, other):
        """True if both modules hold bit-identical parameter values"""
        mine, theirs = self.state_dict(), other.state_dict()
        return list(mine) == list(theirs) and all(
            np.array_equal(mine[k], theirs[k]) for k in mine)


def linear(x, weight, bias):
    return ad.add(ad.matmul(x, weight), bias)


def _split_heads(x, n_heads):
    batch, length, width = x.shape
    x = ad.reshape(x, (batch, length, n_heads, width // n_heads))
    return ad.transpose(x, (0, 2, 1, 3))


def multi_head_attention(module, prefix, x, memory, bias, n_heads, drop):
    """Scaled dot-product attention of ``x`` over ``memory``.

    Parameters
    ----------
    module : Module
        Holds ``<prefix>.wq``, ``.bq``, ``.wk``, ``.bk``, ``.wv``, ``.bv``,
        ``.wo`` and ``.bo``.
    x : Tensor
        Queries, shape (batch, target length, d_model).
    memory : Tensor
        Keys and values, shape (batch, source length, d_model).
    bias : ndarray or None
        Added to the attention scores; broadcastable to
        (batch, heads, target length, source length). Masked positions hold
        a large negative value.
    drop : callable
        Dropout applied to the attention weights.
    """
    batch, length, width = x.shape
    head_width = width // n_heads
    p = lambda name: module['{}.{}'.format(prefix, name)]
    q = _split_heads(linear(x, p('wq'), p('bq')), n_heads)
    k = _split_heads(linear(memory, p('wk'), p('bk')), n_heads)
    v = _split_heads(linear(memory, p('wv'), p('bv')), n_heads)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                      1.0 / np.sqrt(head_width))
    if bias is not None:
        scores = ad.add(scores, bias)
    weights = drop(ad.softmax(scores, axis=-1))
    context = ad.transpose(ad.matmul(weights, v), (0, 2, 1, 3))
    context = ad.reshape(context, (batch, length, width))
    return linear(context, p('wo'), p('bo'))


def feed_forward(module, prefix, x, drop):
    p = lambda name: module['{}.{}'.format(prefix, name)]
    hidden = drop(ad.relu(linear(x, p('w1'), p('b1'))))
    return linear(hidden, p('w2'), p('b2'))


def add_attention_parameters(module, rng, prefix, width):
    for proj in ('q', 'k', 'v', 'o'):
        module._normal(rng, '{}.w{}'.format(prefix, proj), (width, width))
        module._zeros('{}.b{}'.format(prefix, proj), (width,))


def add_feed_forward_parameters(module, rng, prefix, width, hidden):
    module._normal(rng, prefix + '.w1', (width, hidden))
    module._zeros(prefix + '.b1', (hidden,))
    module._normal(rng, prefix + '.w2', (hidden, width))
    module._zeros(prefix + '.b2', (width,))


def add_layer_norm_parameters(module, prefix, width):
    module._ones(prefix + '.gain', (width,))
    module._zeros(prefix + '.bias', (width,))


def layer_norm(module, prefix, x):
    return ad.layer_norm(x, module[prefix + '.gain'],
                         module[prefix + '.bias'])


def padding_bias(mask, dtype):
    """Attention score bias hiding padded keys: shape (batch, 1, 1, length)"""
    bias = np.where(mask, 0.0, MASKED_SCORE).astype(dtype)
    return bias[:, None, None, :]


def dropout_fn(rate, rng, active):
    if not active or rate == 0:
        return lambda t: t
    return lambda t: ad.dropout(t, rate, rng)


class EncoderModel(Module):
    """Token and position embeddings followed by pre-norm transformer layers.

    Parameters
    ----------
    config : EncoderConfig
    seed : int
        Seeds the normal(0, 0.02) initialization.

    Attributes
    ----------
    config : EncoderConfig
    dim : int
        Width of the sentence vectors (``config.d_model``).
    """
    def __init__(self, config=None, seed=0):
        super(EncoderModel, self).__init__()
        self.config = config if config is not None else EncoderConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self._normal(rng, 'token_embedding', (cfg.vocab_size, cfg.d_model))
        self._normal(rng, 'position_embedding',
                     (cfg.max_seq_len, cfg.d_model))
        for layer in range(cfg.n_layers):
            prefix = 'layers.{}'.format(layer)
            add_layer_norm_parameters(self, prefix + '.ln1', cfg.d_model)
            add_attention_parameters(self, rng, prefix + '.attn',
                                     cfg.d_model)
            add_layer_norm_parameters(self, prefix + '.ln2', cfg.d_model)
            add_feed_forward_parameters(self, rng, prefix + '.ffn',
                                        cfg.d_model, cfg.d_ffn)
        add_layer_norm_parameters(self, 'final_ln', cfg.d_model)
        _logger.debug('Encoder initialized with %d parameters (seed %d)',
                      self.num_parameters(), seed)

    @property
    def dim(self):
        return self.config.d_model

    def __repr__(self):
        return 'EncoderModel({!r})'.format(self.config)

    def forward(self, ids, mask=None, dropout_active=False, seed=None):
        """Token states of a padded batch.

        Parameters
        ----------
        ids : ndarray of int, shape (batch, length)
        mask : ndarray of bool, optional
            True at real tokens; defaults to ``ids != PAD``.
        dropout_active : bool
            Apply dropout with masks drawn from a stream seeded by ``seed``.
        seed : int, optional

        Returns
        -------
        Tensor of shape (batch, length, d_model)
        """
        cfg = self.config
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise InputError('Expected a (batch, length) id matrix, got '
                             'shape {}'.format(ids.shape))
        if ids.shape[1] > cfg.max_seq_len:
            raise InputError('Sequence length {} exceeds max_seq_len '
                             '{}'.format(ids.shape[1], cfg.max_seq_len))
        if mask is None:
            mask = ids != PAD
        mask = np.asarray(mask, dtype=bool)
        drop = dropout_fn(cfg.dropout_rate, np.random.default_rng(seed),
                          dropout_active)
        tokens = ad.embedding(self['token_embedding'], ids)
        positions = ad.embedding(self['position_embedding'],
                                 np.arange(ids.shape[1]))
        x = drop(ad.add(tokens, positions))
        bias = padding_bias(mask, x.dtype)
        for layer in range(cfg.n_layers):
            prefix = 'layers.{}'.format(layer)
            h = layer_norm(self, prefix + '.ln1', x)
            x = ad.add(x, drop(multi_head_attention(
                self, prefix + '.attn', h, h, bias, cfg.n_heads, drop)))
            h = layer_norm(self, prefix + '.ln2', x)
            x = ad.add(x, drop(feed_forward(self, prefix + '.ffn', h, drop)))
        return layer_norm(self, 'final_ln', x)

    def encode(self, ids, mask=None, dropout_active=False, seed=None):
        """Pooled sentence vectors, shape (batch, d_model)"""
        ids = np.asarray(ids)
        if mask is None:
            mask = ids != PAD
        states = self.forward(ids, mask, dropout_active=dropout_active,
                              seed=seed)
        return mean_pool(states, mask)


def encode_ids(vocab, sentence, max_seq_len):
    """``[BOS] + token ids + [EOS]``, truncated so EOS stays last.

    Examples
    --------
    >>> from hybridse.corpus import Vocabulary
    >>> encode_ids(Vocabulary(['a']), 'a b', 64)
    [2, 4, 1, 3]
    """
    ids = vocab.encode(tokenize(sentence))[:max(0, max_seq_len - 2)]
    return [BOS] + ids + [EOS]


def pad_batch(sequences, pad_id=PAD):
    """Right-pad id sequences into a matrix plus a real-token mask"""
    length = max(len(s) for s in sequences) if sequences else 0
    ids = np.full((len(sequences), length), pad_id, dtype=np.int64)
    mask = np.zeros((len(sequences), length), dtype=bool)
    for row, seq in enumerate(sequences):
        ids[row, :len(seq)] = seq
        mask[row, :len(seq)] = True
    return ids, mask


def mean_pool(states, mask):
    """Mean of token states over the unmasked positions of each row.

    Raises
    ------
    InputError
        If a row has no unmasked position.
    """
    states = ad.as_tensor(states)
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise InputError('Row {} of the mask has no real tokens'.format(
            empty[0]))
    weights = (mask / counts[:, None]).astype(states.dtype)[:, :, None]
    return ad.sum(ad.mul(states, weights), axis=1)


def _chunks(token_ids, window):
    if not token_ids:
        return [[BOS, EOS]]
    return [[BOS] + token_ids[i:i + window] + [EOS]
            for i in range(0, len(token_ids), window)]


def embed_texts(model, vocab, texts, ids=None, batch_size=64, name=None):
    """Deterministic sentence embeddings.

    Texts longer than the model window are split into windows of
    ``max_seq_len - 2`` tokens; the pooled vectors of the windows are
    averaged.

    Parameters
    ----------
    model : EncoderModel
    vocab : Vocabulary
    texts : list of str
    ids : list of str, optional
        Record ids; defaults to the text positions as strings.
    batch_size : int
    name : str, optional
        Name of the returned store.

    Returns
    -------
    EmbeddingStore
    """
    texts = list(texts)
    if ids is None:
        ids = [str(i) for i in range(len(texts))]
    ids = list(ids)
    if len(ids) != len(texts):
        raise InputError('{} ids given for {} texts'.format(len(ids),
                                                            len(texts)))
    name = name or 'encoder'
    if not texts:
        return EmbeddingStore(name, [], np.zeros((0, model.dim)),
                              dim=model.dim)
    window = model.config.max_seq_len - 2
    chunks, owners = [], []
    for row, text in enumerate(texts):
        for chunk in _chunks(vocab.encode(tokenize(text)), window):
            chunks.append(chunk)
            owners.append(row)
    pooled = np.zeros((len(chunks), model.dim), dtype=np.float64)
    with ad.no_grad():
        for start in range(0, len(chunks), batch_size):
            batch, mask = pad_batch(chunks[start:start + batch_size])
            pooled[start:start + len(batch)] = model.encode(batch, mask).data
    owners = np.asarray(owners)
    sums = np.zeros((len(texts), model.dim), dtype=np.float64)
    np.add.at(sums, owners, pooled)
    matrix = sums / np.bincount(owners, minlength=len(texts))[:, None]
    _logger.debug('Embedded %d texts (%d windows) with %s', len(texts),
                  len(chunks), name)
    return EmbeddingStore(name, ids, matrix, dim=model.dim)


def embed_sentences(model, vocab, sentences, ids=None, batch_size=64,
                    name=None):
    """Embed :class:`~hybridse.corpus.SentenceRecord` objects or strings.

    Records are keyed by their ``record_id``.
    """
    sentences = list(sentences)
    texts = [s if isinstance(s, str) else s.text for s in sentences]
    if ids is None and sentences and not isinstance(sentences[0], str):
        ids = [s.record_id for s in sentences]
    return embed_texts(model, vocab, texts, ids=ids, batch_size=batch_size,
                       name=name)


class EncoderEmbedder(object):
    """Embedder interface over one encoder and its vocabulary"""
    def __init__(self, model, vocab, name='encoder', batch_size=64):
        self.model = model
        self.vocab = vocab
        self.name = name
        self.batch_size = batch_size

    @property
    def dim(self):
        return self.model.dim

    def embed(self, texts, ids=None):
        return embed_texts(self.model, self.vocab, texts, ids=ids,
                           batch_size=self.batch_size, name=self.name)


def encode_corpus(model, vocab, records):
    """Truncated id sequences for training, one per record"""
    return [encode_ids(vocab, r if isinstance(r, str) else r.text,
                       model.config.max_seq_len) for r in records]


def save_encoder(model, path, extra_sections=None):
    """Write ``model`` (and optional extra named parameter sections)"""
    params = prefixed('encoder', model.state_dict())
    for section, state in (extra_sections or {}).items():
        params.update(prefixed(section, state))
    save_checkpoint(path, {'encoder': model.config.as_dict()}, params)


def load_sections(path):
    """Configuration and per-section parameters of a checkpoint"""
    config, params = load_checkpoint(path)
    try:
        encoder_config = EncoderConfig.from_dict(config['encoder'])
    except (KeyError, TypeError):
        raise FormatError('Checkpoint has no encoder configuration',
                          path=path)
    sections = split_sections(params)
    if 'encoder' not in sections:
        raise FormatError('Checkpoint has no encoder parameters', path=path)
    return encoder_config, sections


def load_encoder(path):
    encoder_config, sections = load_sections(path)
    model = EncoderModel(encoder_config)
    model.load_state_dict(sections['encoder'])
    return model

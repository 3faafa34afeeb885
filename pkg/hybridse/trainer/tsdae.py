"""
Denoising auto-encoder fine-tuning.

A sentence is corrupted by deleting a fraction of its words, the encoder
compresses the corrupted sentence into one pooled vector, and a one-layer
transformer decoder reconstructs the original sentence from that vector
alone: its cross-attention memory has length one. The decoder's output
projection is the transpose of the encoder's token embedding table.
"""
import collections

import numpy as np

from hybridse import autodiff as ad
from hybridse.checkpoint import prefixed
from hybridse.config import CorruptionConfig, TsdaeConfig
from hybridse.corpus import BOS, EOS, PAD
from hybridse.encoder import Module, add_attention_parameters, \
    add_feed_forward_parameters, add_layer_norm_parameters, dropout_fn, \
    feed_forward, layer_norm, load_sections, multi_head_attention, \
    pad_batch, save_encoder, EncoderModel, MASKED_SCORE
from hybridse.errors import FormatError, InputError
from hybridse.trainer.base import Trainer, TrainingResult
from hybridse.util import derive_seeds

_FRAMING = frozenset((PAD, BOS, EOS))

CorruptedPair = collections.namedtuple('CorruptedPair',
                                       ['original', 'corrupted'])


def deletion_count(words, ratio):
    """Words to delete: ``ratio * words`` rounded half up, keeping one.

    >>> deletion_count(10, 0.6), deletion_count(1, 0.6)
    (6, 0)
    """
    return min(int(np.floor(ratio * words + 0.5)), words - 1)


def corrupt(ids, config=None, rng=None):
    """Delete a seeded random subset of the words of a sentence.

    Parameters
    ----------
    ids : list of int
        Token ids, optionally framed by BOS/EOS; framing and padding ids are
        never deleted.
    config : CorruptionConfig, optional
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded with ``config.seed``.

    Returns
    -------
    CorruptedPair
        The survivors keep their original order.

    Raises
    ------
    InputError
        If the sentence has no word tokens.
    """
    config = config if config is not None else CorruptionConfig()
    ids = [int(i) for i in ids]
    words = [pos for pos, token in enumerate(ids) if token not in _FRAMING]
    if not words:
        raise InputError('Cannot corrupt a sentence without word tokens')
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n_delete = deletion_count(len(words), config.deletion_ratio)
    deleted = set()
    if n_delete:
        deleted = set(np.asarray(words)[
            rng.choice(len(words), size=n_delete, replace=False)].tolist())
    corrupted = [token for pos, token in enumerate(ids) if pos not in deleted
                 and token != PAD]
    return CorruptedPair(ids, corrupted)


class DecoderModel(Module):
    """One pre-norm transformer decoder layer with a tied output projection.

    Parameters
    ----------
    encoder : EncoderModel
        Supplies the architecture and the token embedding table shared as
        the output projection.
    seed : int
    """
    def __init__(self, encoder, seed=0):
        super(DecoderModel, self).__init__()
        self.encoder = encoder
        cfg = encoder.config
        rng = np.random.default_rng(seed)
        self._normal(rng, 'position_embedding',
                     (cfg.max_seq_len, cfg.d_model))
        add_layer_norm_parameters(self, 'self_ln', cfg.d_model)
        add_attention_parameters(self, rng, 'self_attn', cfg.d_model)
        add_layer_norm_parameters(self, 'cross_ln', cfg.d_model)
        add_attention_parameters(self, rng, 'cross_attn', cfg.d_model)
        add_layer_norm_parameters(self, 'ffn_ln', cfg.d_model)
        add_feed_forward_parameters(self, rng, 'ffn', cfg.d_model,
                                    cfg.d_ffn)
        add_layer_norm_parameters(self, 'final_ln', cfg.d_model)

    @property
    def config(self):
        return self.encoder.config

    @property
    def output_embedding(self):
        """The encoder's token embedding Tensor (shared storage)"""
        return self.encoder['token_embedding']

    def copy(self, encoder=None):
        clone = super(DecoderModel, self).copy()
        clone.encoder = encoder if encoder is not None else self.encoder
        return clone

    def forward(self, memory, ids, mask=None, dropout_active=False,
                seed=None, memory_scale=1.0):
        """Next-token logits for every position of ``ids``.

        Parameters
        ----------
        memory : Tensor
            Sentence vectors, shape (batch, d_model).
        ids : ndarray of int
            Decoder inputs (teacher forcing), shape (batch, length).
        mask : ndarray of bool, optional
            Real-token mask; defaults to ``ids != PAD``.
        memory_scale : float
            Multiplies the memory; 0 removes the sentence vector.

        Returns
        -------
        Tensor of shape (batch, length, vocab_size)
        """
        cfg = self.config
        ids = np.asarray(ids)
        if mask is None:
            mask = ids != PAD
        mask = np.asarray(mask, dtype=bool)
        batch, length = ids.shape
        if length > cfg.max_seq_len:
            raise InputError('Sequence length {} exceeds max_seq_len '
                             '{}'.format(length, cfg.max_seq_len))
        memory = ad.as_tensor(memory)
        if memory.shape != (batch, cfg.d_model):
            raise InputError('Memory of shape {} does not match a batch of '
                             '{}'.format(memory.shape, batch))
        if memory_scale != 1.0:
            memory = ad.scale(memory, memory_scale)
        memory = ad.reshape(memory, (batch, 1, cfg.d_model))
        drop = dropout_fn(cfg.dropout_rate, np.random.default_rng(seed),
                          dropout_active)
        tokens = ad.embedding(self.output_embedding, ids)
        positions = ad.embedding(self['position_embedding'],
                                 np.arange(length))
        x = drop(ad.add(tokens, positions))
        causal = np.tril(np.ones((length, length), dtype=bool))
        allowed = causal[None, None, :, :] & mask[:, None, None, :]
        bias = np.where(allowed, 0.0, MASKED_SCORE).astype(x.dtype)
        h = layer_norm(self, 'self_ln', x)
        x = ad.add(x, drop(multi_head_attention(
            self, 'self_attn', h, h, bias, cfg.n_heads, drop)))
        h = layer_norm(self, 'cross_ln', x)
        x = ad.add(x, drop(multi_head_attention(
            self, 'cross_attn', h, memory, None, cfg.n_heads, drop)))
        h = layer_norm(self, 'ffn_ln', x)
        x = ad.add(x, drop(feed_forward(self, 'ffn', h, drop)))
        x = layer_norm(self, 'final_ln', x)
        return ad.matmul(x, ad.transpose(self.output_embedding))


def sequence_cross_entropy(logits, targets, mask):
    """Mean over sentences of the mean token cross-entropy.

    Parameters
    ----------
    logits : Tensor
        Shape (batch, length, vocab).
    targets : ndarray of int
        Shape (batch, length).
    mask : ndarray of bool
        Positions that count; each row needs at least one.
    """
    logits = ad.as_tensor(logits)
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=bool)
    batch, length, vocab = logits.shape
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise InputError('Every sentence needs at least one target token')
    weights = (mask / counts[:, None]).reshape(-1)
    flat = ad.reshape(logits, (batch * length, vocab))
    return ad.cross_entropy(flat, np.where(mask, targets, 0).reshape(-1),
                            weights=weights)


def _teacher_forcing(originals):
    inputs, mask = pad_batch([seq[:-1] for seq in originals])
    targets, _ = pad_batch([seq[1:] for seq in originals])
    return inputs, targets, mask


def reconstruction_loss(encoder, decoder, pairs, dropout_active=False,
                        seed=None, memory_scale=1.0):
    """Cross-entropy of reconstructing originals from corrupted sentences.

    The corrupted sentence is encoded and pooled into one vector, which is
    the decoder's only view of the sentence. The decoder predicts every
    token after BOS of the original with teacher forcing.

    Parameters
    ----------
    encoder : EncoderModel
    decoder : DecoderModel
    pairs : CorruptedPair or list of CorruptedPair
    dropout_active : bool
    seed : int, optional
        Seeds the dropout masks of both modules.
    memory_scale : float
        Scales the sentence vector; 0 hides it from the decoder.

    Returns
    -------
    Tensor
        Scalar: the mean over pairs of each pair's mean token loss.
    """
    if isinstance(pairs, CorruptedPair):
        pairs = [pairs]
    if not pairs:
        raise InputError('No sentence pairs to reconstruct')
    vocab_size = encoder.config.vocab_size
    for pair in pairs:
        bad = [t for t in pair.original if not 0 <= t < vocab_size]
        if bad:
            raise InputError('Token id {} out of range [0, {})'.format(
                bad[0], vocab_size))
        if len(pair.original) < 2:
            raise InputError('Original sentence needs at least two ids')
    encoder_seed, decoder_seed = derive_seeds(seed or 0, 2)
    ids, mask = pad_batch([p.corrupted for p in pairs])
    memory = encoder.encode(ids, mask, dropout_active=dropout_active,
                            seed=encoder_seed)
    inputs, targets, target_mask = _teacher_forcing(
        [p.original for p in pairs])
    logits = decoder.forward(memory, inputs, target_mask,
                             dropout_active=dropout_active,
                             seed=decoder_seed, memory_scale=memory_scale)
    return sequence_cross_entropy(logits, targets, target_mask)


def greedy_decode(encoder, decoder, corrupted, max_length):
    """Reconstruct sentences token by token, always taking the argmax.

    Returns the predicted ids after BOS, ``max_length`` per sentence.
    """
    ids, mask = pad_batch(list(corrupted))
    max_length = min(max_length, encoder.config.max_seq_len)
    with ad.no_grad():
        memory = encoder.encode(ids, mask)
        prefix = np.full((len(ids), 1), BOS, dtype=np.int64)
        for _ in range(max_length):
            logits = decoder.forward(memory, prefix).data[:, -1, :]
            prefix = np.concatenate(
                [prefix, logits.argmax(axis=1)[:, None]], axis=1)
    return prefix[:, 1:]


def reconstruction_accuracy(encoder, decoder, pairs):
    """Fraction of original tokens (after BOS) reproduced in place"""
    pairs = list(pairs)
    targets = [p.original[1:] for p in pairs]
    length = max(len(t) for t in targets)
    predicted = greedy_decode(encoder, decoder, [p.corrupted for p in pairs],
                              length)
    hits = total = 0
    for row, target in enumerate(targets):
        width = min(len(target), predicted.shape[1])
        hits += int(np.sum(predicted[row, :width] == target[:width]))
        total += len(target)
    return hits / total


def majority_accuracy(pairs, corpus):
    """Accuracy of always predicting the most frequent corpus token"""
    counts = collections.Counter(t for seq in corpus for t in seq[1:])
    token = min(counts, key=lambda t: (-counts[t], t))
    targets = [t for p in pairs for t in p.original[1:]]
    return sum(1 for t in targets if t == token) / len(targets)


class TsdaeTrainer(Trainer):
    """Joint encoder and decoder training on word-deleted sentences.

    Parameters
    ----------
    model : EncoderModel
    config : TsdaeConfig, optional
    decoder : DecoderModel, optional
        Starting decoder; a fresh one seeded from ``config.seed`` by default.
    verbose, run_name
        See :class:`hybridse.trainer.base.Trainer`.
    """
    name = 'tsdae'

    def __init__(self, model, config=None, decoder=None, verbose=False,
                 run_name=None):
        super(TsdaeTrainer, self).__init__(
            model, config if config is not None else TsdaeConfig(),
            verbose=verbose, run_name=run_name)
        self.decoder = decoder
        self._encoder = None
        self._decoder = None

    def min_corpus_size(self):
        return 1

    def _prepare(self):
        self._encoder = self.model.copy()
        if self.decoder is None:
            self._decoder = DecoderModel(self._encoder,
                                         seed=derive_seeds(self.config.seed,
                                                           3)[2])
        else:
            self._decoder = self.decoder.copy(encoder=self._encoder)
        parameters = prefixed('encoder', self._encoder.parameters())
        parameters.update(prefixed('decoder', self._decoder.parameters()))
        return parameters

    def loss(self, batch, seed):
        rng = np.random.default_rng(seed)
        corruption = CorruptionConfig(
            deletion_ratio=self.config.deletion_ratio, seed=0)
        pairs = [corrupt(seq, corruption, rng=rng) for seq in batch]
        return reconstruction_loss(self._encoder, self._decoder, pairs,
                                   dropout_active=True, seed=seed)

    def _result(self, losses, grad_norms):
        return TrainingResult(self.name, self._encoder, losses, grad_norms,
                              extras={'decoder': self._decoder})


def train_tsdae(model, corpus, config=None, decoder=None, vocab=None,
                verbose=False):
    """Denoising fine-tuning of a copy of ``model``.

    Returns
    -------
    TrainingResult
        ``result.model`` is the trained encoder, ``result.decoder`` the
        decoder trained alongside it.
    """
    trainer = TsdaeTrainer(model, config, decoder=decoder, verbose=verbose)
    if vocab is not None:
        return trainer.train_corpus(corpus, vocab)
    return trainer.train(corpus)


def save_tsdae(encoder, decoder, path):
    """One checkpoint holding the encoder and decoder sections"""
    save_encoder(encoder, path,
                 extra_sections={'decoder': decoder.state_dict()})


def load_tsdae(path):
    """Encoder and decoder written by :func:`save_tsdae`"""
    encoder_config, sections = load_sections(path)
    encoder = EncoderModel(encoder_config)
    encoder.load_state_dict(sections['encoder'])
    if 'decoder' not in sections:
        raise FormatError('Checkpoint has no decoder section', path=path)
    decoder = DecoderModel(encoder)
    decoder.load_state_dict(sections['decoder'])
    return encoder, decoder

import collections

import numpy as np
import pytest

from hybridse import autodiff as ad
from hybridse.checkpoint import load_checkpoint, save_checkpoint
from hybridse.config import EncoderConfig
from hybridse.corpus import BOS, build_vocab, EOS, PAD
from hybridse.encoder import embed_sentences, embed_texts, encode_ids, \
    EncoderEmbedder, EncoderModel, load_encoder, mean_pool, pad_batch, \
    save_encoder
from hybridse.errors import FormatError, InputError
from hybridse.testing import assert_gradients_match, with_float64
from hybridse.trainer.tsdae import DecoderModel, save_tsdae

SENTENCES = ['the creatinine rose overnight after contrast',
             'the patient denies chest pain at rest',
             'renal function returned to baseline today',
             'started on heparin drip for the clot']


def _small_config(vocab_size, **kwargs):
    settings = dict(vocab_size=vocab_size, d_model=16, n_layers=1,
                    n_heads=2, d_ffn=32, max_seq_len=16)
    settings.update(kwargs)
    return EncoderConfig(**settings)


class TestEncoder(object):
    def setup_method(self):
        self.vocab = build_vocab(SENTENCES, min_frequency=1)
        self.model = EncoderModel(_small_config(len(self.vocab)), seed=3)

    def test_shapes(self):
        ids, mask = pad_batch([encode_ids(self.vocab, s, 16)
                               for s in SENTENCES])
        assert self.model.forward(ids, mask).shape == ids.shape + (16,)
        assert self.model.encode(ids, mask).shape == (4, 16)

    def test_seeded_initialization(self):
        again = EncoderModel(self.model.config, seed=3)
        other = EncoderModel(self.model.config, seed=4)
        assert self.model.same_parameters(again)
        assert not self.model.same_parameters(other)

    def test_inference_is_deterministic(self):
        a = embed_texts(self.model, self.vocab, SENTENCES)
        b = embed_texts(self.model, self.vocab, SENTENCES)
        assert a.matrix.tobytes() == b.matrix.tobytes()

    def test_padding_does_not_change_embeddings(self):
        batched = embed_texts(self.model, self.vocab, SENTENCES)
        for i, sentence in enumerate(SENTENCES):
            alone = embed_texts(self.model, self.vocab, [sentence])
            assert np.allclose(alone.matrix[0], batched.matrix[i],
                               atol=1e-5)

    def test_batch_size_irrelevant(self):
        a = embed_texts(self.model, self.vocab, SENTENCES, batch_size=1)
        b = embed_texts(self.model, self.vocab, SENTENCES, batch_size=3)
        assert np.allclose(a.matrix, b.matrix, atol=1e-5)

    def test_seeded_dropout(self):
        ids, mask = pad_batch([encode_ids(self.vocab, s, 16)
                               for s in SENTENCES])
        a = self.model.encode(ids, mask, dropout_active=True, seed=1)
        b = self.model.encode(ids, mask, dropout_active=True, seed=1)
        c = self.model.encode(ids, mask, dropout_active=True, seed=2)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_long_text_is_windowed(self):
        text = ' '.join(SENTENCES * 3)
        store = embed_texts(self.model, self.vocab, [text])
        assert store.matrix.shape == (1, 16)
        assert np.all(np.isfinite(store.matrix))

    def test_empty_text_embeds(self):
        store = embed_texts(self.model, self.vocab, [''], ids=['blank'])
        assert store.ids == ('blank',)

    def test_empty_input(self):
        store = embed_texts(self.model, self.vocab, [])
        assert len(store) == 0
        assert store.dim == 16

    def test_id_count_mismatch(self):
        with pytest.raises(InputError):
            embed_texts(self.model, self.vocab, SENTENCES, ids=['a'])

    def test_sequence_too_long(self):
        with pytest.raises(InputError):
            self.model.forward(np.full((1, 17), 4))

    def test_embed_records_uses_record_ids(self):
        Record = collections.namedtuple('Record', ['record_id', 'text'])
        records = [Record('n{}:0'.format(i), s)
                   for i, s in enumerate(SENTENCES)]
        store = embed_sentences(self.model, self.vocab, records, name='x')
        assert store.ids == tuple(r.record_id for r in records)
        assert store.name == 'x'

    def test_embedder_interface(self):
        embedder = EncoderEmbedder(self.model, self.vocab, name='simcse')
        store = embedder.embed(SENTENCES[:2], ['a', 'b'])
        assert embedder.dim == 16
        assert store.name == 'simcse'

    def test_copy_is_independent(self):
        clone = self.model.copy()
        clone['final_ln.bias'].data += 1.0
        assert not self.model.same_parameters(clone)
        assert np.all(self.model['final_ln.bias'].data == 0)


def test_encode_ids_truncates_before_eos():
    vocab = build_vocab(['a b c d e f'], min_frequency=1)
    ids = encode_ids(vocab, 'a b c d e f', 5)
    assert len(ids) == 5
    assert ids[0] == BOS and ids[-1] == EOS


def test_pad_batch():
    ids, mask = pad_batch([[2, 5, 3], [2, 3]])
    assert ids.tolist() == [[2, 5, 3], [2, 3, PAD]]
    assert mask.tolist() == [[True, True, True], [True, True, False]]


def test_mean_pool_ignores_padding():
    states = np.arange(12.0).reshape(1, 4, 3)
    pooled = mean_pool(states, [[True, True, False, False]])
    assert np.allclose(pooled.data, [[1.5, 2.5, 3.5]])


def test_mean_pool_empty_row():
    with pytest.raises(InputError):
        mean_pool(np.ones((2, 3, 4)), [[True, False, False],
                                       [False, False, False]])


def test_mean_pool_gradient():
    rng = np.random.default_rng(0)
    mask = np.array([[True, True, False], [True, True, True]])
    w = rng.normal(size=(2, 4))
    assert_gradients_match(lambda s: ad.sum(mean_pool(s, mask) * w),
                           [rng.normal(size=(2, 3, 4))])


@with_float64
def test_encoder_gradient_end_to_end():
    model = EncoderModel(_small_config(12, d_model=8, d_ffn=16,
                                       dropout_rate=0.0), seed=0)
    ids, mask = pad_batch([[2, 5, 7, 3], [2, 9, 3]])
    w = np.random.default_rng(1).normal(size=(2, 8))

    def fn(table):
        model._parameters['token_embedding'] = table
        return ad.sum(model.encode(ids, mask) * w)
    assert_gradients_match(fn, [model['token_embedding'].data.copy()])


class TestEncoderCheckpoint(object):
    def setup_method(self):
        self.vocab = build_vocab(SENTENCES, min_frequency=1)
        self.model = EncoderModel(_small_config(len(self.vocab)), seed=5)

    def test_round_trip_embeds_identically(self, tmp_path):
        path = str(tmp_path / 'enc.ckpt')
        save_encoder(self.model, path)
        loaded = load_encoder(path)
        assert loaded.config == self.model.config
        assert loaded.same_parameters(self.model)
        assert embed_texts(loaded, self.vocab, SENTENCES) == \
            embed_texts(self.model, self.vocab, SENTENCES)

    def test_decoder_section_ignored(self, tmp_path):
        path = str(tmp_path / 'tsdae.ckpt')
        save_tsdae(self.model, DecoderModel(self.model, seed=1), path)
        assert load_encoder(path).same_parameters(self.model)

    def test_missing_parameter(self, tmp_path):
        path = str(tmp_path / 'enc.ckpt')
        save_encoder(self.model, path)
        config, params = load_checkpoint(path)
        del params['encoder.final_ln.gain']
        save_checkpoint(path, config, params)
        with pytest.raises(FormatError):
            load_encoder(path)

    def test_no_encoder_config(self, tmp_path):
        path = str(tmp_path / 'bad.ckpt')
        save_checkpoint(path, {}, self.model.state_dict())
        with pytest.raises(FormatError):
            load_encoder(path)

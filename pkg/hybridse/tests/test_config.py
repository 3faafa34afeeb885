import json

import pytest

from hybridse.config import EncoderConfig, HeadConfig, PipelineConfig, \
    SimcseConfig, TsdaeConfig
from hybridse.errors import ConfigurationError


def test_defaults():
    cfg = EncoderConfig()
    assert (cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.d_ffn) == \
        (64, 2, 4, 256)
    assert SimcseConfig().temperature == 0.05
    assert TsdaeConfig().deletion_ratio == 0.6
    assert HeadConfig().folds == 5


def test_unknown_keyword():
    with pytest.raises(ConfigurationError) as excinfo:
        SimcseConfig(temprature=0.1)
    assert 'Unknown keyword argument(s): temprature' in str(excinfo.value)


@pytest.mark.parametrize('cls, kwargs', [
    (EncoderConfig, dict(d_model=10, n_heads=4)),
    (EncoderConfig, dict(dropout_rate=1.0)),
    (SimcseConfig, dict(batch_size=1)),
    (SimcseConfig, dict(temperature=0)),
    (TsdaeConfig, dict(deletion_ratio=1.0)),
    (TsdaeConfig, dict(steps=-1)),
    (HeadConfig, dict(folds=1)),
    (HeadConfig, dict(hidden=True)),
])
def test_invalid_values(cls, kwargs):
    with pytest.raises(ConfigurationError):
        cls(**kwargs)


def test_round_trip_and_equality():
    cfg = SimcseConfig(steps=10, lr=0.01)
    assert SimcseConfig.from_dict(cfg.as_dict()) == cfg
    assert cfg != SimcseConfig()
    assert cfg.replace(steps=20).steps == 20
    assert cfg.replace(steps=20).lr == 0.01


def test_explicit_tracking():
    cfg = TsdaeConfig(steps=5)
    assert cfg.is_explicit('steps')
    assert not cfg.is_explicit('seed')


class TestPipelineConfig(object):
    def setup_method(self):
        self.config = PipelineConfig(seed=7, simcse={'seed': 3},
                                     paths={'records': 'r.jsonl'})

    def test_seed_propagates_unless_explicit(self):
        assert self.config.simcse.seed == 3
        assert self.config.tsdae.seed == 7
        assert self.config.heads.seed == 7

    def test_sections_are_objects(self):
        assert isinstance(self.config.encoder, EncoderConfig)
        assert isinstance(self.config.heads, HeadConfig)

    def test_json_is_canonical(self):
        text = self.config.to_json()
        assert text == PipelineConfig.from_json(text).to_json()
        assert list(json.loads(text)) == sorted(json.loads(text))

    def test_merged_overrides(self):
        merged = self.config.merged({'seed': 11, 'tsdae.steps': 4,
                                     'paths.vocab': 'v.tsv',
                                     'simcse.lr': None})
        assert merged.tsdae.steps == 4
        # inherited seeds follow the new global seed, explicit ones stay
        assert merged.tsdae.seed == 11
        assert merged.simcse.seed == 3
        assert merged.path('vocab') == 'v.tsv'
        assert merged.path('records') == 'r.jsonl'
        assert merged.simcse.lr == 1e-3

    def test_merged_keeps_defaults_implicit(self):
        merged = self.config.merged({'encoder.d_model': 32})
        assert merged.encoder.is_explicit('d_model')
        assert not merged.encoder.is_explicit('vocab_size')

    def test_merged_unknown_section(self):
        with pytest.raises(ConfigurationError):
            self.config.merged({'decoder.steps': 1})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig(encoder={'width': 3})

    def test_invalid_json(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig.from_json('{"seed": ')
        with pytest.raises(ConfigurationError):
            PipelineConfig.from_json('[1, 2]')

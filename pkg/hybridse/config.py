"""
Configuration objects for every seeded or tunable stage.

Each configuration class declares its fields and defaults in ``_defaults``.
Unknown keys are rejected, values are validated on construction, and the
whole object round-trips through plain dictionaries so it can be stored in
a JSON run file or inside a checkpoint.
"""
import copy
import json
import numbers

from hybridse.errors import ConfigurationError


class Config(object):
    """Base class for configuration objects.

    Parameters
    ----------
    **kwargs : dict
        Field values overriding the class defaults.

    Examples
    --------
    >>> cfg = SimcseConfig(temperature=0.1)
    >>> cfg.temperature
    0.1
    >>> cfg.batch_size
    32
    """
    _defaults = {}

    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(self._defaults)
        if unknown:
            raise ConfigurationError(
                '{}: Unknown keyword argument(s): {}'.format(
                    self.__class__.__name__, ', '.join(sorted(unknown))))
        values = copy.deepcopy(self._defaults)
        values.update(kwargs)
        for key, value in values.items():
            setattr(self, key, value)
        self._explicit = frozenset(kwargs)
        self.validate()

    def validate(self):
        pass

    def is_explicit(self, key):
        """True if ``key`` was supplied at construction, not defaulted"""
        return key in self._explicit

    def as_dict(self):
        return {key: getattr(self, key) for key in sorted(self._defaults)}

    @classmethod
    def from_dict(cls, values):
        return cls(**dict(values))

    def replace(self, **kwargs):
        """Copy of this configuration with some fields changed"""
        values = {k: getattr(self, k) for k in self._explicit}
        values.update(kwargs)
        return self.__class__(**values)

    def __eq__(self, other):
        return type(self) is type(other) and \
            self.as_dict() == other.as_dict()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '{}({})'.format(
            self.__class__.__name__,
            ', '.join('{}={!r}'.format(k, v)
                      for k, v in self.as_dict().items()))

    def _require(self, condition, message):
        if not condition:
            raise ConfigurationError('{}: {}'.format(
                self.__class__.__name__, message))

    def _positive_int(self, *names):
        for name in names:
            value = getattr(self, name)
            self._require(isinstance(value, numbers.Integral) and
                          not isinstance(value, bool) and value > 0,
                          '{} must be a positive integer, got {!r}'.format(
                              name, value))

    def _non_negative_int(self, *names):
        for name in names:
            value = getattr(self, name)
            self._require(isinstance(value, numbers.Integral) and
                          not isinstance(value, bool) and value >= 0,
                          '{} must be a non-negative integer, got {!r}'.format(
                              name, value))

    def _positive_real(self, *names):
        for name in names:
            value = getattr(self, name)
            self._require(isinstance(value, numbers.Real) and
                          not isinstance(value, bool) and value > 0,
                          '{} must be a positive number, got {!r}'.format(
                              name, value))

    def _seed(self, name='seed'):
        value = getattr(self, name)
        self._require(isinstance(value, numbers.Integral) and
                      not isinstance(value, bool) and value >= 0,
                      '{} must be a non-negative integer'.format(name))


class EncoderConfig(Config):
    """Architecture of the transformer encoder (and its TSDAE decoder)"""
    _defaults = {
        'vocab_size': 8192,
        'd_model': 64,
        'n_layers': 2,
        'n_heads': 4,
        'd_ffn': 256,
        'max_seq_len': 64,
        'dropout_rate': 0.1,
    }

    def validate(self):
        self._positive_int('vocab_size', 'd_model', 'n_layers', 'n_heads',
                           'd_ffn', 'max_seq_len')
        self._require(self.d_model % self.n_heads == 0,
                      'd_model ({}) must be divisible by n_heads ({})'.format(
                          self.d_model, self.n_heads))
        self._require(self.max_seq_len >= 2, 'max_seq_len must be >= 2')
        self._require(isinstance(self.dropout_rate, numbers.Real) and
                      0 <= self.dropout_rate < 1,
                      'dropout_rate must lie in [0, 1)')


class SimcseConfig(Config):
    """Contrastive fine-tuning settings.

    The temperature, batch size, step count and learning rate are desk-scale
    choices; none of them is reported for the full-size model.
    """
    _defaults = {
        'temperature': 0.05,
        'batch_size': 32,
        'steps': 300,
        'lr': 1e-3,
        'seed': 42,
    }

    def validate(self):
        self._positive_real('temperature', 'lr')
        self._positive_int('batch_size')
        self._non_negative_int('steps')
        self._require(self.batch_size >= 2,
                      'batch_size must be >= 2 (a batch of 1 has no '
                      'negatives)')
        self._seed()


class CorruptionConfig(Config):
    _defaults = {
        'deletion_ratio': 0.6,
        'seed': 0,
    }

    def validate(self):
        self._require(isinstance(self.deletion_ratio, numbers.Real) and
                      0 <= self.deletion_ratio < 1,
                      'deletion_ratio must lie in [0, 1)')
        self._seed()


class TsdaeConfig(Config):
    """Denoising fine-tuning settings"""
    _defaults = {
        'deletion_ratio': 0.6,
        'batch_size': 32,
        'steps': 300,
        'lr': 1e-3,
        'seed': 42,
    }

    def validate(self):
        self._require(isinstance(self.deletion_ratio, numbers.Real) and
                      0 <= self.deletion_ratio < 1,
                      'deletion_ratio must lie in [0, 1)')
        self._positive_real('lr')
        self._positive_int('batch_size')
        self._non_negative_int('steps')
        self._seed()


class HeadConfig(Config):
    """Downstream prediction head and cross-validation settings"""
    _defaults = {
        'hidden': 256,
        'epochs': 50,
        'lr': 1e-3,
        'batch_size': 32,
        'seed': 42,
        'folds': 5,
    }

    def validate(self):
        self._positive_int('hidden', 'epochs', 'batch_size')
        self._positive_real('lr')
        self._positive_int('folds')
        self._require(self.folds >= 2, 'folds must be >= 2')
        self._seed()


class PipelineConfig(Config):
    """Everything one command-line run needs.

    ``paths`` maps logical names (``corpus``, ``vocab``, ``out_dir``...) to
    filesystem paths. The nested stage configurations are held as objects;
    the global ``seed`` is pushed into every stage that did not set its own.
    """
    _defaults = {
        'paths': {},
        'encoder': {},
        'simcse': {},
        'tsdae': {},
        'heads': {},
        'seed': 42,
        'min_frequency': 2,
        'normalize': True,
        'num_processors': 1,
    }

    _sections = {
        'encoder': EncoderConfig,
        'simcse': SimcseConfig,
        'tsdae': TsdaeConfig,
        'heads': HeadConfig,
    }

    def validate(self):
        self._seed()
        self._positive_int('min_frequency', 'num_processors')
        self._require(isinstance(self.paths, dict),
                      'paths must be a mapping')
        self._inherited_seed = set()
        for name, cls in self._sections.items():
            section = getattr(self, name)
            if isinstance(section, dict):
                section = cls(**section)
            self._require(isinstance(section, cls),
                          '{} must be a mapping'.format(name))
            if 'seed' in section._defaults and \
                    not section.is_explicit('seed'):
                section = section.replace(seed=self.seed)
                self._inherited_seed.add(name)
            setattr(self, name, section)

    def as_dict(self):
        values = super(PipelineConfig, self).as_dict()
        for name in self._sections:
            values[name] = getattr(self, name).as_dict()
        values['paths'] = dict(sorted(self.paths.items()))
        return values

    def path(self, name, default=None):
        return self.paths.get(name, default)

    def to_json(self):
        """Canonical JSON text, stable across runs"""
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + '\n'

    @classmethod
    def from_json(cls, text):
        try:
            values = json.loads(text)
        except ValueError as e:
            raise ConfigurationError('Configuration is not valid JSON: '
                                     '{}'.format(e))
        if not isinstance(values, dict):
            raise ConfigurationError('Configuration must be a JSON object')
        return cls.from_dict(values)

    def merged(self, overrides):
        """New configuration with dotted-key overrides applied.

        Parameters
        ----------
        overrides : dict
            Keys such as ``'seed'``, ``'simcse.steps'`` or
            ``'paths.corpus'``; ``None`` values are ignored.
        """
        values = self.as_dict()
        # sections keep only their explicit fields, so defaults stay defaults
        for name in self._sections:
            section = getattr(self, name)
            values[name] = {k: getattr(section, k) for k in section._explicit}
        for name in self._inherited_seed:
            del values[name]['seed']
        for key, value in overrides.items():
            if value is None:
                continue
            target = values
            parts = key.split('.')
            for part in parts[:-1]:
                if part not in target or not isinstance(target[part], dict):
                    raise ConfigurationError(
                        'Unknown configuration section: {}'.format(key))
                target = target[part]
            target[parts[-1]] = value
        return self.from_dict(values)

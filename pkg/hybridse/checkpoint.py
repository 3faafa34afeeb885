"""
Binary checkpoints of named model parameters.

Layout (all integers little-endian)::

    b"MGEH"
    u32   format version (1)
    u32   length of the configuration block
    ...   configuration as UTF-8 JSON with sorted keys
    u32   number of parameters
    per parameter:
      u16   name length, name bytes
      u32   rank
      u32   one per dimension
      f32   values, row-major

Encoder and decoder parameters share one file; their names carry an
``encoder.`` or ``decoder.`` prefix (see :func:`split_sections`).
"""
import collections
import json
import struct

import numpy as np

from hybridse.errors import FormatError
from hybridse.logging import get_logger
from hybridse.util import atomic_write, ByteReader, pack_text

MAGIC = b'MGEH'
VERSION = 1

_logger = get_logger(__name__)


def dumps(config, params):
    """Serialize a configuration dict and named arrays to bytes.

    Parameters
    ----------
    config : dict
        JSON-serializable architecture configuration.
    params : OrderedDict
        Parameter name to array; order is preserved in the file.
    """
    config_raw = json.dumps(config, sort_keys=True).encode('utf-8')
    parts = [MAGIC, struct.pack('<II', VERSION, len(config_raw)),
             config_raw, struct.pack('<I', len(params))]
    for name, array in params.items():
        array = np.asarray(array)
        parts.append(pack_text(name))
        parts.append(struct.pack('<I', array.ndim))
        parts.append(struct.pack('<{}I'.format(array.ndim), *array.shape))
        parts.append(np.ascontiguousarray(array, dtype='<f4').tobytes())
    return b''.join(parts)


def loads(data, path=None):
    """Inverse of :func:`dumps`.

    Returns
    -------
    (config dict, OrderedDict of float32 arrays)

    Raises
    ------
    FormatError
        On bad magic, an unknown version, a malformed configuration block,
        truncation or trailing bytes. Nothing is returned in that case.
    """
    reader = ByteReader(data, path=path)
    reader.magic(MAGIC)
    version_offset = reader.offset
    version = reader.u32('format version')
    if version != VERSION:
        raise FormatError('Unsupported checkpoint version {}'.format(version),
                          offset=version_offset, path=path)
    config_len = reader.u32('configuration length')
    config_offset = reader.offset
    try:
        config = json.loads(reader.text(config_len, 'configuration'))
    except ValueError:
        raise FormatError('Checkpoint configuration is not valid JSON',
                          offset=config_offset, path=path)
    params = collections.OrderedDict()
    for _ in range(reader.u32('parameter count')):
        name_offset = reader.offset
        name = reader.text(reader.u16('name length'), 'parameter name')
        if name in params:
            raise FormatError('Duplicate parameter "{}"'.format(name),
                              offset=name_offset, path=path)
        rank = reader.u32('rank of ' + name)
        shape = tuple(reader.u32('dimension of ' + name)
                      for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        params[name] = reader.float32(count, 'values of ' + name) \
            .astype(np.float32).reshape(shape)
    reader.expect_end()
    return config, params


def save_checkpoint(path, config, params):
    """Write a checkpoint atomically"""
    data = dumps(config, params)
    with atomic_write(path) as f:
        f.write(data)
    _logger.info('Wrote checkpoint %s (%d parameters, %d bytes)', path,
                 len(params), len(data))


def load_checkpoint(path):
    with open(path, 'rb') as f:
        data = f.read()
    return loads(data, path=path)


def prefixed(prefix, params):
    return collections.OrderedDict(
        ('{}.{}'.format(prefix, k), v) for k, v in params.items())


def split_sections(params):
    """Group ``section.name`` keys by their leading section.

    >>> sorted(split_sections({'encoder.a': 1, 'decoder.b': 2}))
    ['decoder', 'encoder']
    """
    sections = collections.OrderedDict()
    for key, value in params.items():
        section, sep, name = key.partition('.')
        if not sep:
            raise FormatError('Parameter "{}" has no section prefix'.format(
                key))
        sections.setdefault(section, collections.OrderedDict())[name] = value
    return sections

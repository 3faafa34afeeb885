from concurrent.futures import Executor, Future, ProcessPoolExecutor
import contextlib
import os
import struct
import tempfile

import numpy as np

from hybridse.errors import FormatError, UsageError

__all__ = ['atomic_write', 'derive_seeds', 'RunLock', 'ByteReader',
           'pack_text', 'read_lines', 'SerialExecutor', 'executor_for',
           'run_ordered']


@contextlib.contextmanager
def atomic_write(path, mode='wb', encoding=None):
    """Write to a temporary sibling of ``path`` and rename on success.

    If the body raises, the temporary file is removed and ``path`` is left
    untouched, so readers never see a partial artifact.

    Examples
    --------
    >>> import os, tempfile
    >>> target = os.path.join(tempfile.mkdtemp(), 'out.txt')
    >>> with atomic_write(target, 'w') as f:
    ...     _ = f.write('done')
    >>> open(target).read()
    'done'
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(prefix='.' + os.path.basename(path),
                                    suffix='.tmp', dir=directory)
    try:
        with os.fdopen(fd, mode, encoding=encoding) as f:
            yield f
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def derive_seeds(seed, count):
    """Independent integer seeds derived from one seed.

    The same (seed, count) always yields the same list.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


class RunLock(object):
    """Exclusive lock file guarding an output directory.

    Parameters
    ----------
    directory : str
        Directory to lock; created if missing.
    """
    LOCK_NAME = '.hybridse.lock'

    def __init__(self, directory):
        self.directory = directory
        self.path = os.path.join(directory, self.LOCK_NAME)
        self._fd = None

    def __enter__(self):
        os.makedirs(self.directory, exist_ok=True)
        try:
            self._fd = os.open(self.path,
                               os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise UsageError('Output directory {} is locked by another run '
                             '(remove {} if stale)'.format(self.directory,
                                                           self.path))
        os.write(self._fd, str(os.getpid()).encode('ascii'))
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        os.close(self._fd)
        os.remove(self.path)
        self._fd = None


class ByteReader(object):
    """Sequential little-endian reader over an in-memory byte string.

    Every read checks the remaining length first and raises
    :class:`hybridse.errors.FormatError` carrying the offset of the field
    that could not be read.
    """
    def __init__(self, data, path=None):
        self.data = data
        self.offset = 0
        self.path = path

    def _take(self, n, what):
        if self.offset + n > len(self.data):
            raise FormatError('Truncated file while reading {}'.format(what),
                              offset=self.offset, path=self.path)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def magic(self, expected):
        start = self.offset
        found = self._take(len(expected), 'magic bytes')
        if found != expected:
            raise FormatError('Bad magic bytes {!r} (expected {!r})'.format(
                found, expected), offset=start, path=self.path)

    def u16(self, what='u16'):
        return struct.unpack('<H', self._take(2, what))[0]

    def u32(self, what='u32'):
        return struct.unpack('<I', self._take(4, what))[0]

    def text(self, length, what='string'):
        start = self.offset
        raw = self._take(length, what)
        try:
            return raw.decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError('{} is not valid UTF-8'.format(what),
                              offset=start, path=self.path)

    def float32(self, count, what='float data'):
        raw = self._take(4 * count, what)
        if count == 0:
            return np.zeros(0, dtype='<f4')
        return np.frombuffer(raw, dtype='<f4', count=count).copy()

    def expect_end(self):
        if self.offset != len(self.data):
            raise FormatError('{} unexpected trailing bytes'.format(
                len(self.data) - self.offset), offset=self.offset,
                path=self.path)


def pack_text(text, width='H'):
    """UTF-8 bytes of ``text`` behind an unsigned length prefix"""
    raw = text.encode('utf-8')
    size = struct.calcsize('<' + width)
    if len(raw) >= 2 ** (8 * size):
        raise FormatError('Text of {} bytes does not fit a {}-byte length '
                          'prefix'.format(len(raw), size))
    return struct.pack('<' + width, len(raw)) + raw


def read_lines(path):
    """``(line number, text)`` for every line of a UTF-8 text file.

    ``\\r\\n`` endings are read as ``\\n``. A line that is not valid UTF-8
    raises :class:`hybridse.errors.FormatError` naming the file and line.
    """
    with open(path, 'rb') as f:
        for lineno, raw in enumerate(f, 1):
            if raw.endswith(b'\r\n'):
                raw = raw[:-2] + b'\n'
            try:
                line = raw.decode('utf-8')
            except UnicodeDecodeError as e:
                raise FormatError('Invalid UTF-8 at column {}'.format(
                    e.start + 1), path=path, line=lineno)
            yield lineno, line


class SerialExecutor(Executor):
    """ Execute tasks in serial (immediately on submission) """
    def submit(self, fn, *args, **kwargs):
        f = Future()
        try:
            result = fn(*args, **kwargs)
        except BaseException as e:
            f.set_exception(e)
        else:
            f.set_result(result)

        return f


def executor_for(num_processors):
    """A process pool, or a :class:`SerialExecutor` for one processor"""
    if num_processors == 1:
        return SerialExecutor()
    return ProcessPoolExecutor(max_workers=num_processors)


def run_ordered(executor, fn, items):
    """Submit ``fn(item)`` for every item; results come back in item order"""
    futures = [executor.submit(fn, item) for item in items]
    try:
        return [f.result() for f in futures]
    finally:
        for f in futures:
            f.cancel()

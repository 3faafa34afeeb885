"""
Package-wide logging.

All hybridse loggers live below the ``hybridse`` base logger. The first call
to :func:`get_logger` configures that base logger through
:func:`setup_logger`; later calls reuse it. The ``HYBRIDSE_LOG`` environment
variable, when set, wins over the level passed in code.

Levels in use: INFO for stage start and finish with sizes, DEBUG for
per-step losses, and :data:`EXTENDED_DEBUG` for per-operation graph detail
in :mod:`hybridse.autodiff`.
"""
import logging
import os
import platform
import time
import warnings

import numpy as np

import hybridse

LOG_LEVEL_ENV_VAR = 'HYBRIDSE_LOG'
BASE_LOGGER_NAME = 'hybridse'
EXTENDED_DEBUG = 5
NAMED_LOG_LEVELS = {'NOTSET': logging.NOTSET,
                    'EXTENDED_DEBUG': EXTENDED_DEBUG,
                    'DEBUG': logging.DEBUG,
                    'INFO': logging.INFO,
                    'WARNING': logging.WARNING,
                    'ERROR': logging.ERROR,
                    'CRITICAL': logging.CRITICAL}
LOG_FORMAT = '%(asctime)s.%(msecs).3d - %(name)s - %(levelname)s - ' \
             '%(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

logging.addLevelName(EXTENDED_DEBUG, 'EXTENDED_DEBUG')


def formatter(time_utc=False):
    """Formatter for hybridse log records.

    Parameters
    ----------
    time_utc : bool
        Stamp records in UTC rather than local time.
    """
    fmt = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    if time_utc:
        fmt.converter = time.gmtime
    return fmt


def resolve_level(level):
    """The level to use given ``HYBRIDSE_LOG`` and a fallback ``level``.

    The variable may hold an integer or one of :data:`NAMED_LOG_LEVELS`
    (case-sensitive); anything else is a ValueError.
    """
    value = os.environ.get(LOG_LEVEL_ENV_VAR)
    if value is None:
        return level
    if value in NAMED_LOG_LEVELS:
        return NAMED_LOG_LEVELS[value]
    try:
        return int(value)
    except ValueError:
        raise ValueError('{}="{}" is not a log level; use an integer or one '
                         'of {}'.format(LOG_LEVEL_ENV_VAR, value,
                                        ', '.join(NAMED_LOG_LEVELS)))


def _utc_offset_hours():
    offset = time.altzone if time.localtime().tm_isdst > 0 else time.timezone
    return -offset / 3600.0


def setup_logger(level=logging.WARNING, console_output=True, file_output=False,
                 time_utc=False, capture_warnings=True):
    """(Re)configure the ``hybridse`` base logger.

    Existing handlers on the base logger are discarded. Most code should call
    :func:`get_logger`, which only sets up the base logger once.

    Parameters
    ----------
    level : int
        Level used unless ``HYBRIDSE_LOG`` is set.
    console_output : bool
        Attach a stream handler writing to standard error.
    file_output : str or False
        Also append records to this file.
    time_utc : bool
        Stamp records in UTC.
    capture_warnings : bool
        Route :mod:`warnings` through logging.

    Returns
    -------
    logging.Logger
    """
    log = logging.getLogger(BASE_LOGGER_NAME)
    log.setLevel(resolve_level(level))
    log.handlers = []

    fmt = formatter(time_utc=time_utc)
    handlers = []
    if console_output:
        handlers.append(logging.StreamHandler())
    if file_output:
        handlers.append(logging.FileHandler(file_output))
    for handler in handlers:
        handler.setFormatter(fmt)
        log.addHandler(handler)

    log.info('hybridse %s logging at level %s', hybridse.__version__,
             logging.getLevelName(log.level))
    if time_utc:
        log.info('Timestamps are UTC')
    else:
        log.info('Timestamps are local time, UTC%+.2f hours',
                 _utc_offset_hours())
    log.debug('Python %s on %s, numpy %s', platform.python_version(),
              platform.platform(), np.__version__)

    logging.captureWarnings(capture_warnings)
    return log


def get_logger(logger_name=BASE_LOGGER_NAME, run_name=None, log_level=None,
               **kwargs):
    """Logger in the hybridse namespace, setting up the base logger once.

    Parameters
    ----------
    logger_name : str
        Usually ``__name__`` (module code) or ``self.__module__``.
    run_name : str, optional
        Name of a command or training run; wraps the logger in a
        :class:`RunLoggerAdapter` that prefixes every message with it.
    log_level : bool or int, optional
        ``True`` means DEBUG, an integer is used as is; ``None`` and
        ``False`` keep the inherited level.
    **kwargs
        Passed to :func:`setup_logger` the first time only. Later calls warn
        that they are ignored.

    Examples
    --------
    >>> from hybridse.logging import get_logger
    >>> logger = get_logger(__name__)
    >>> logger.debug('Test message')
    """
    if BASE_LOGGER_NAME not in logging.Logger.manager.loggerDict:
        setup_logger(**kwargs)
    elif kwargs:
        warnings.warn('hybridse base logger is already configured, ignoring '
                      'keyword arguments {}'.format(sorted(kwargs)))

    logger = logging.getLogger(logger_name)
    if log_level is not None and log_level is not False:
        if isinstance(log_level, bool):
            log_level = logging.DEBUG
        elif not isinstance(log_level, int):
            raise ValueError('log_level must be a boolean, an integer or '
                             'None, got {!r}'.format(log_level))
        if logger.getEffectiveLevel() != log_level:
            logger.debug('Log level %d -> %d', logger.getEffectiveLevel(),
                         log_level)
            logger.setLevel(log_level)

    if run_name is None:
        return logger
    return RunLoggerAdapter(logger, {'run_name': run_name})


class RunLoggerAdapter(logging.LoggerAdapter):
    """Prefixes messages with ``[run_name]``"""
    def process(self, msg, kwargs):
        return '[{}] {}'.format(self.extra['run_name'], msg), kwargs

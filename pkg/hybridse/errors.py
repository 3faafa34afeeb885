"""
Exception types shared across hybridse.

Modules raise the most specific class available; the command-line driver
maps the families onto exit codes (see :mod:`hybridse.cli`).
"""


class HybridSEError(Exception):
    pass


class UsageError(HybridSEError, ValueError):
    """ An operation was called outside its preconditions """


class InputError(HybridSEError, ValueError):
    """ Input data is malformed or out of range """


class ShapeError(InputError):
    def __init__(self, operation, *shapes):
        self.operation = operation
        self.shapes = shapes
        super(ShapeError, self).__init__(
            '{}: incompatible shapes {}'.format(
                operation, ' and '.join(str(tuple(s)) for s in shapes)))


class NumericError(HybridSEError, ArithmeticError):
    def __init__(self, message, row=None):
        self.row = row
        super(NumericError, self).__init__(message)


class TrainingError(HybridSEError, RuntimeError):
    def __init__(self, message, parameter_name=None):
        self.parameter_name = parameter_name
        super(TrainingError, self).__init__(message)


class ConfigurationError(HybridSEError, ValueError):
    pass


class AlignmentError(HybridSEError, KeyError):
    def __init__(self, message, record_id=None):
        self.record_id = record_id
        super(AlignmentError, self).__init__(message)

    def __str__(self):
        # KeyError would repr() the message
        return self.args[0]


class FormatError(HybridSEError, ValueError):
    def __init__(self, message, offset=None, path=None, line=None):
        self.offset = offset
        self.path = path
        self.line = line
        where = ''
        if path is not None:
            where += ' in {}'.format(path)
        if line is not None:
            where += ' at line {}'.format(line)
        if offset is not None:
            where += ' at byte offset {}'.format(offset)
        super(FormatError, self).__init__(message + where)


class UndefinedMetricError(HybridSEError, ValueError):
    """ A metric is mathematically undefined for the given input """

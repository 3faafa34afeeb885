"""
Tools for exporting embedding stores to text formats for external
visualization and analysis.

Command-line usage
==================

At the command-line, run as follows::

    python -m hybridse.export store.embd <format>

where ``store.embd`` is an embedding store written by
:func:`hybridse.store.write_store` and ``<format>`` is one of:

- ``tsv``
- ``json``

The exported text is printed to standard out.

Interactive usage
=================

::

    from hybridse.export import export
    tsv_output = export(store, 'tsv')
"""
from hybridse.errors import UsageError


class Exporter(object):
    """Base class for embedding store exporters.

    Parameters
    ----------
    store : hybridse.store.EmbeddingStore
        The store to export.
    """
    def __init__(self, store):
        self.store = store

    def export(self):
        """Return the whole store as a single string"""
        raise NotImplementedError()


# Supported formats and the names of the classes implementing them
formats = {
    'tsv': 'TsvExporter',
    'json': 'JsonExporter',
}


class ExportError(UsageError):
    pass


def export(store, format):
    """Export ``store`` to ``format`` (a key of :data:`formats`)"""
    if format not in formats:
        raise ExportError('The format must be one of the following: ' +
                          ', '.join(sorted(formats)) + '.')
    # Imported at export time to avoid circular imports at module loading
    export_module = __import__('hybridse.export.' + format,
                               fromlist=[formats[format]])
    export_class = getattr(export_module, formats[format])
    return export_class(store).export()

"""
Test embedding stores export with every available exporter
"""
import json

import numpy as np
import pytest

from hybridse import export
from hybridse.cli import exit_code, EXIT_USAGE
from hybridse.errors import HybridSEError
from hybridse.export.__main__ import main
from hybridse.export.json import JsonExporter
from hybridse.store import EmbeddingStore, write_store


def _store():
    rng = np.random.default_rng(0)
    return EmbeddingStore('simcse+tsdae', ['n1:0', 'n1:1', 'n2:0'],
                          rng.normal(size=(3, 4)))


def test_every_format_exports():
    store = _store()
    for format in export.formats:
        assert export.export(store, format)


def test_tsv_recovers_float32():
    store = _store()
    lines = export.export(store, 'tsv').splitlines()
    assert [line.split('\t')[0] for line in lines] == list(store.ids)
    values = np.array([[float(v) for v in line.split('\t')[1:]]
                       for line in lines], dtype=np.float32)
    assert np.array_equal(values, store.matrix)


def test_json_content():
    store = _store()
    data = json.loads(JsonExporter(store).export())
    assert data['name'] == 'simcse+tsdae'
    assert data['dim'] == 4
    assert data['ids'] == list(store.ids)
    assert np.array_equal(np.array(data['vectors'], dtype=np.float32),
                          store.matrix)


def test_unknown_format():
    with pytest.raises(export.ExportError):
        export.export(_store(), 'xml')


def test_command_line(tmp_path, capsys):
    path = str(tmp_path / 'hybrid.embd')
    write_store(_store(), path)
    assert main(['export', path, 'tsv']) == 0
    assert capsys.readouterr().out == export.export(_store(), 'tsv')
    assert main(['export']) == 1
    with pytest.raises(export.ExportError):
        main(['export', str(tmp_path / 'missing.embd'), 'tsv'])


def test_export_error_maps_to_usage_exit():
    with pytest.raises(HybridSEError) as excinfo:
        export.export(_store(), 'xml')
    assert exit_code(excinfo.value) == EXIT_USAGE

"""
JSON export of an embedding store::

    {"name": ..., "dim": ..., "ids": [...], "vectors": [[...], ...]}
"""
import json

from hybridse.export import Exporter


class JsonExporter(Exporter):
    def export(self):
        return json.dumps({
            'name': self.store.name,
            'dim': self.store.dim,
            'ids': list(self.store.ids),
            'vectors': [[float(v) for v in row]
                        for row in self.store.matrix],
        }, indent=1)

"""
Tab-separated export: one ``id<TAB>v1<TAB>...<TAB>v_dim`` line per row.

Values are written with 9 significant digits, enough to recover every
float32 exactly.
"""
from hybridse.export import Exporter


class TsvExporter(Exporter):
    def export(self):
        lines = []
        for record_id, row in zip(self.store.ids, self.store.matrix):
            lines.append('\t'.join([record_id] +
                                   ['{:.9g}'.format(v) for v in row]))
        return ''.join(line + '\n' for line in lines)

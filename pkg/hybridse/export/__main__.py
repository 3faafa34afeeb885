import os
import sys

import hybridse.export
from hybridse.store import read_store


def validate_argv(argv):
    return len(argv) == 3


def main(argv):
    if not validate_argv(argv):
        print(hybridse.export.__doc__, end=' ')
        return 1

    store_filename = argv[1]
    format = argv[2]

    if format not in hybridse.export.formats:
        raise hybridse.export.ExportError(
            'The format must be one of the following: ' +
            ', '.join(sorted(hybridse.export.formats)) + '.')
    if not os.path.exists(store_filename):
        raise hybridse.export.ExportError(
            "File '%s' doesn't exist" % store_filename)

    store = read_store(store_filename)
    print(hybridse.export.export(store, format), end='')

    return 0


if __name__ == '__main__':
    sys.exit(main(sys.argv))

"""
this module contains a common set of general purpose utility functions
"""
import os
import csv
import json
import hashlib


def mkdir_path(path):
    """
    Create folder in `path` silently: if it exists, ignore, if not
    create all necessary folders reaching `path`
    """
    if not os.access(path, os.F_OK):
        os.makedirs(path)


def write_csv(iterable, filename, fieldnames=None):
    """
    write a list of dicts into a csv file.
    float values are written with `repr` so that two identical
    runs give byte-identical files.

    Parameters
    ----------

    iterable : list of dict
        this will constitute the rows of the csv file.
        the header will be `fieldnames` or the keys of the first dict.
    filename : str
        filename where to write the content
    fieldnames : list of str or None
    """
    if fieldnames is None:
        fieldnames = list(iterable[0].keys())
    with open(filename, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        for row in iterable:
            writer.writerow({k: _format_value(row[k]) for k in fieldnames})


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(obj, filename):
    """write `obj` as indented json with sorted keys (stable output)"""
    with open(filename, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(filename):
    with open(filename) as f:
        return json.load(f)


def sha256_file(filename, chunk_size=1 << 16):
    """hex sha256 digest of the content of `filename`"""
    h = hashlib.sha256()
    with open(filename, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            h.update(chunk)
    return h.hexdigest()

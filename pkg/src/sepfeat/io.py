"""CSV and JSON files.

A matrix file has a ``sample_id`` column followed by one column per feature.
Optional siblings ``<name>.labels.csv`` (sample_id,label) and
``<name>.mask.csv`` (feature,is_informative) carry ground truth.  Floats are
written with ``repr`` so that a read-back is exact and reruns produce
identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import DataMatrix
from .errors import InvalidData


def _fmt(v):
    return repr(float(v))


def sibling(path, kind):
    path = Path(path)
    stem = path.name[:-4] if path.name.endswith(".csv") else path.name
    return path.with_name(f"{stem}.{kind}.csv")


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidData(f"{path} is empty")
    return rows[0], rows[1:]


def write_matrix(m: DataMatrix, path, fmt=_fmt):
    """Write ``m`` plus label and mask siblings when present."""
    write_rows(path, ["sample_id", *m.feature_names],
               ([sid, *(fmt(v) for v in row)] for sid, row in zip(m.sample_ids, m.values)))
    if m.true_labels is not None:
        write_rows(sibling(path, "labels"), ["sample_id", "label"],
                   zip(m.sample_ids, (int(v) for v in m.true_labels)))
    if m.informative_mask is not None:
        write_rows(sibling(path, "mask"), ["feature", "is_informative"],
                   zip(m.feature_names, (int(v) for v in m.informative_mask)))


def _read_table(path, dtype):
    header, rows = read_rows(path)
    if not header or header[0] != "sample_id":
        raise InvalidData(f"{path}: first column must be sample_id")
    width = len(header)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise InvalidData(f"{path}: row {i + 2} has {len(r)} fields, expected {width}")
    try:
        values = np.array([[dtype(v) for v in r[1:]] for r in rows], dtype=float if dtype is float else np.int64)
    except ValueError as e:
        raise InvalidData(f"{path}: {e}") from None
    return header[1:], [r[0] for r in rows], values.reshape(len(rows), width - 1)


def read_matrix(path) -> DataMatrix:
    """Read a matrix file and any label / mask siblings."""
    names, ids, values = _read_table(path, float)
    labels = mask = None
    lp, mp = sibling(path, "labels"), sibling(path, "mask")
    if lp.exists():
        _, rows = read_rows(lp)
        lookup = {r[0]: int(r[1]) for r in rows}
        try:
            labels = [lookup[s] for s in ids]
        except KeyError as e:
            raise InvalidData(f"{lp}: no label for sample {e}") from None
    if mp.exists():
        _, rows = read_rows(mp)
        lookup = {r[0]: r[1].strip().lower() in ("1", "true") for r in rows}
        try:
            mask = [lookup[f] for f in names]
        except KeyError as e:
            raise InvalidData(f"{mp}: no entry for feature {e}") from None
    return DataMatrix(values, names, ids, true_labels=labels, informative_mask=mask)


def read_counts(path):
    from .preprocessing import CountMatrix

    names, ids, values = _read_table(path, int)
    return CountMatrix(values, names, ids)


def write_counts(c, path):
    write_rows(path, ["sample_id", *c.gene_names],
               ([cid, *(str(int(v)) for v in row)] for cid, row in zip(c.cell_ids, c.counts)))


def read_names(path):
    """One name per line; blank lines and ``#`` comments ignored."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))

"""Reading and writing view matrices, label files and fit results.

Matrices are features x samples.  Two on-disk formats are supported:

* ``csv``: header row ``<corner>,<sample ids...>``, then one row per feature
  ``<feature id>,<values...>``.
* ``mtx``: MatrixMarket ``coordinate`` (real, integer or pattern; general)
  or ``array`` format.  Optional sidecar files ``<path>.features`` and
  ``<path>.samples`` hold one identifier per line.

Every file written here goes through a temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import errno
import io as _io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import AlignmentError, FormatError, InvalidInputError
from .metrics import ari, nmi

FORMATS = ("csv", "mtx")
DEFAULT_LOG1P = {(1, 1): True, (1, 2): False, (2, 1): True, (2, 2): False}


@dataclass
class ViewMatrix:
    """A loaded features x samples matrix with its identifiers."""

    matrix: sp.csr_matrix
    feature_ids: list[str] | None = None
    sample_ids: list[str] | None = None
    path: str | None = None

    @property
    def shape(self):
        return self.matrix.shape


@dataclass
class RunConfig:
    views: dict[tuple[int, int], str]
    out_dir: str
    truth: str | None = None
    formats: dict[tuple[int, int], str | None] = field(default_factory=dict)
    log1p: dict[tuple[int, int], bool] = field(default_factory=lambda: dict(DEFAULT_LOG1P))

    def __post_init__(self):
        if set(self.views) != set(DEFAULT_LOG1P):
            raise InvalidInputError("need exactly the view roles (1,1), (1,2), (2,1), (2,2)")
        for role, path in self.views.items():
            if not path:
                raise InvalidInputError(f"empty path for view {role}")
        if not self.out_dir:
            raise InvalidInputError("empty output directory")


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".mtx", ".mm"):
        return "mtx"
    if suffix in (".csv", ".txt"):
        return "csv"
    raise FormatError(f"cannot infer format from suffix {suffix!r}", path)


def _check_value(v: float, path, line):
    if not np.isfinite(v):
        raise FormatError("non-finite value", path, line)
    if v < 0:
        raise InvalidInputError(f"{path}:{line}: negative entry {v!r}")


def _parse_float(tok: str, path, line) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"not a number: {tok!r}", path, line) from None
    _check_value(v, path, line)
    return v


def _read_csv(path) -> ViewMatrix:
    rows, cols, vals, features = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file", path, 1) from None
        samples = [s.strip() for s in header[1:]]
        if not samples:
            raise FormatError("header has no sample columns", path, 1)
        n = len(samples)
        for r, rec in enumerate(reader):
            line = reader.line_num
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != n + 1:
                raise FormatError(f"expected {n + 1} fields, found {len(rec)}", path, line)
            features.append(rec[0].strip())
            x = len(features) - 1
            for y, tok in enumerate(rec[1:]):
                v = _parse_float(tok, path, line)
                if v != 0:
                    rows.append(x)
                    cols.append(y)
                    vals.append(v)
    if not features:
        raise FormatError("no feature rows", path)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(features), n), dtype=float)
    return ViewMatrix(m, features, samples, str(path))


def _read_mtx(path) -> ViewMatrix:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise FormatError("missing %%MatrixMarket banner", path, 1)
    banner = lines[0].lower().split()
    if len(banner) != 5 or banner[1] != "matrix":
        raise FormatError("malformed banner", path, 1)
    layout, field_, symmetry = banner[2], banner[3], banner[4]
    if layout not in ("coordinate", "array") or field_ not in ("real", "integer", "pattern"):
        raise FormatError(f"unsupported MatrixMarket type {layout} {field_}", path, 1)
    if symmetry != "general":
        raise FormatError(f"unsupported symmetry {symmetry}", path, 1)
    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise FormatError("missing size line", path, len(lines))
    size_line, size = body[0]
    try:
        dims = [int(t) for t in size.split()]
    except ValueError:
        raise FormatError("malformed size line", path, size_line) from None
    entries = body[1:]
    if layout == "coordinate":
        if len(dims) != 3:
            raise FormatError("size line needs rows, columns, entries", path, size_line)
        q, n, nnz = dims
        if len(entries) != nnz:
            raise FormatError(f"expected {nnz} entries, found {len(entries)}", path,
                              entries[-1][0] if entries else size_line)
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.ones(nnz)
        for e, (line, text) in enumerate(entries):
            tok = text.split()
            want = 2 if field_ == "pattern" else 3
            if len(tok) != want:
                raise FormatError(f"expected {want} fields", path, line)
            try:
                i, j = int(tok[0]), int(tok[1])
            except ValueError:
                raise FormatError("non-integer index", path, line) from None
            if not (1 <= i <= q and 1 <= j <= n):
                raise FormatError(f"index ({i},{j}) outside {q}x{n}", path, line)
            rows[e], cols[e] = i - 1, j - 1
            if field_ != "pattern":
                vals[e] = _parse_float(tok[2], path, line)
        m = sp.csr_matrix((vals, (rows, cols)), shape=(q, n), dtype=float)
    else:
        if len(dims) != 2:
            raise FormatError("size line needs rows and columns", path, size_line)
        q, n = dims
        if len(entries) != q * n:
            raise FormatError(f"expected {q * n} values, found {len(entries)}", path, size_line)
        # column-major order
        dense = np.array([_parse_float(t.strip(), path, ln) for ln, t in entries])
        m = sp.csr_matrix(dense.reshape((n, q)).T)
    m.eliminate_zeros()
    features = _read_ids(str(path) + ".features", q)
    samples = _read_ids(str(path) + ".samples", n)
    return ViewMatrix(m, features, samples, str(path))


def _read_ids(path, expected: int):
    if not os.path.exists(path):
        return None
    ids = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(ids) != expected:
        raise FormatError(f"expected {expected} identifiers, found {len(ids)}", path)
    return ids


def load_matrix(path, fmt: str | None = None) -> ViewMatrix:
    """Load a nonnegative features x samples matrix as CSR."""
    fmt = fmt or infer_format(path)
    if not os.path.exists(path):
        raise FileNotFoundError(errno.ENOENT, "no such file", str(path))
    if fmt == "csv":
        return _read_csv(path)
    if fmt == "mtx":
        return _read_mtx(path)
    raise FormatError(f"unknown format {fmt!r}", path)


def load_views(paths: dict, formats: dict | None = None) -> dict:
    """Load the four views and require identical sample identifiers."""
    formats = formats or {}
    out = {role: load_matrix(paths[role], formats.get(role)) for role in sorted(paths)}
    ref_role = min(out)
    ref = out[ref_role]
    for role, vm in out.items():
        if vm.shape[1] != ref.shape[1]:
            raise AlignmentError(
                f"view {role} has {vm.shape[1]} samples, view {ref_role} has {ref.shape[1]}"
            )
        if vm.sample_ids is not None and ref.sample_ids is not None \
                and vm.sample_ids != ref.sample_ids:
            bad = next(i for i, (a, b) in enumerate(zip(vm.sample_ids, ref.sample_ids)) if a != b)
            raise AlignmentError(
                f"view {role} sample {bad + 1} is {vm.sample_ids[bad]!r}, "
                f"view {ref_role} has {ref.sample_ids[bad]!r}"
            )
    return out


def _fmt_value(v) -> str:
    fv = float(v)
    if fv.is_integer() and abs(fv) < 2 ** 53:
        return str(int(fv))
    return repr(fv)


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def save_matrix(path, matrix, feature_ids=None, sample_ids=None, fmt: str | None = None):
    """Write a matrix in ``csv`` or ``mtx`` format (integers written exactly)."""
    fmt = fmt or infer_format(path)
    m = sp.csr_matrix(matrix)
    q, n = m.shape
    feature_ids = list(feature_ids) if feature_ids is not None else [f"f{i + 1}" for i in range(q)]
    sample_ids = list(sample_ids) if sample_ids is not None else [f"s{j + 1}" for j in range(n)]
    if fmt == "csv":
        dense = m.toarray()
        rows = ([fid] + [_fmt_value(v) for v in row] for fid, row in zip(feature_ids, dense))
        atomic_write_text(path, _csv_text(["feature"] + sample_ids, rows))
    elif fmt == "mtx":
        coo = m.tocoo()
        order = np.lexsort((coo.row, coo.col))
        integral = bool(np.all(np.mod(coo.data, 1) == 0))
        lines = [f"%%MatrixMarket matrix coordinate {'integer' if integral else 'real'} general",
                 f"{q} {n} {coo.nnz}"]
        lines += [f"{coo.row[e] + 1} {coo.col[e] + 1} {_fmt_value(coo.data[e])}" for e in order]
        atomic_write_text(path, "\n".join(lines) + "\n")
        atomic_write_text(str(path) + ".features", "\n".join(feature_ids) + "\n")
        atomic_write_text(str(path) + ".samples", "\n".join(sample_ids) + "\n")
    else:
        raise FormatError(f"unknown format {fmt!r}", path)


def save_labels(path, ids, labels, id_header="sample_id"):
    """Two-column CSV of identifiers and 1-based cluster numbers."""
    rows = ((i, int(c) + 1) for i, c in zip(ids, labels))
    atomic_write_text(path, _csv_text([id_header, "cluster"], rows))


def load_labels(path):
    """Read a two-column ``id,label`` CSV; returns ``(ids, labels)``.

    Labels are kept as strings unless all of them parse as integers.
    """
    ids, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise FormatError("expected a header with two columns", path, 1)
        for rec in reader:
            if not rec:
                continue
            if len(rec) != 2:
                raise FormatError(f"expected 2 fields, found {len(rec)}", path, reader.line_num)
            ids.append(rec[0].strip())
            labels.append(rec[1].strip())
    try:
        labels = np.array([int(v) for v in labels], dtype=np.int64)
    except ValueError:
        labels = np.array(labels, dtype=object)
    return ids, labels


def align_to(ids, labels, sample_ids):
    """Reorder labels to follow ``sample_ids``."""
    if sample_ids is None or list(ids) == list(sample_ids):
        return labels
    where = {s: i for i, s in enumerate(ids)}
    missing = [s for s in sample_ids if s not in where]
    if missing or len(ids) != len(sample_ids):
        raise AlignmentError(f"label file does not cover samples, e.g. {missing[:3]}")
    return labels[[where[s] for s in sample_ids]]


def trace_rows(result):
    for it, row in enumerate(result.per_term_trace):
        yield [it, repr(float(row["total"]))] + [repr(float(v)) for v in row["losses"]] \
            + [repr(float(row["matching_kl"]))]


def save_result(result, out_dir, sample_ids=None, feature_ids=None, truth=None,
                config: dict | None = None):
    """Write a fit's labels, permutation, objective trace and summary to ``out_dir``.

    ``truth`` (sample labels in sample order) adds NMI and ARI to the summary.
    """
    from .scicml import VIEW_ROLES

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    cells = result.cell_labels.labels
    sample_ids = sample_ids or [f"s{j + 1}" for j in range(cells.size)]
    feature_ids = feature_ids or [None] * 4
    try:
        save_labels(out / "cell_labels.csv", sample_ids, cells)
        for (l, v), lab, fids in zip(VIEW_ROLES, result.feature_labels, feature_ids):
            fids = fids or [f"f{i + 1}" for i in range(len(lab))]
            save_labels(out / f"feature_labels_{l}_{v}.csv", fids, lab.labels, "feature_id")
        perm_rows = ((k + 1, int(a) + 1) for k, a in enumerate(result.h.map))
        atomic_write_text(out / "permutation.csv", _csv_text(["index", "h"], perm_rows))
        header = ["iteration", "total", "loss_1_1", "loss_1_2", "loss_2_1", "loss_2_2",
                  "matching_kl"]
        atomic_write_text(out / "trace.csv", _csv_text(header, trace_rows(result)))
        summary = {
            "iterations": result.iterations,
            "converged": result.converged,
            "objective": float(result.objective),
            "seed": result.seed,
            "n_samples": int(cells.size),
            "cluster_sizes": np.bincount(cells, minlength=result.cell_labels.k).tolist(),
            "permutation": [int(a) + 1 for a in result.h.map],
            "config": config or {},
        }
        if truth is not None:
            summary["nmi"] = nmi(truth, cells)
            summary["ari"] = ari(truth, cells)
        atomic_write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise OSError(f"failed writing results to {out}: {e}") from e

"""Text file formats: observations, dense matrices, run configs and reports.

Floats are written with ``repr``, the shortest decimal that parses back to the
same double, so every artifact round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path

import numpy as np

from .core import IMCError, ObservationSet

OBS_MAGIC = "imc-obs v1"
DENSE_MAGIC = "imc-dense v1"
TRACE_COLUMNS = ("phase", "iter", "data_passes", "loss", "rel_error", "procrustes_dist", "wall_ms")


class DataFormatError(IMCError):
    pass


def fmt_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _parse_header(line, magic, keys, path):
    line = line.strip()
    prefix = f"# {magic}"
    if not line.startswith(prefix):
        raise DataFormatError(f"{path}: line 1: expected header starting with '{prefix}'")
    fields = {}
    for tok in line[len(prefix):].split():
        if "=" not in tok:
            raise DataFormatError(f"{path}: line 1: malformed header field {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    out = []
    for k in keys:
        try:
            value = int(fields[k])
        except (KeyError, ValueError):
            raise DataFormatError(f"{path}: line 1: header lacks integer field {k}=") from None
        if value < 0:
            raise DataFormatError(f"{path}: line 1: {k} must be non-negative")
        out.append(value)
    return out


def save_observations(obs, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {OBS_MAGIC} d1={obs.d1} d2={obs.d2}\n")
        for i, j, v in zip(obs.rows.tolist(), obs.cols.tolist(), obs.values.tolist()):
            fh.write(f"{i} {j} {fmt_float(v)}\n")


def load_observations(path, d1=None, d2=None):
    """Read an ``imc-obs v1`` file; optionally check its dimensions."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    fd1, fd2 = _parse_header(lines[0], OBS_MAGIC, ("d1", "d2"), path)
    if (d1 is not None and d1 != fd1) or (d2 is not None and d2 != fd2):
        raise DataFormatError(f"{path}: dimensions {fd1}x{fd2} do not match expected {d1}x{d2}")
    rows, cols, vals = [], [], []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}: line {lineno}: expected 'i j value'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: cannot parse {line!r}") from None
        if not (0 <= i < fd1 and 0 <= j < fd2):
            raise DataFormatError(f"{path}: line {lineno}: index ({i}, {j}) out of range for {fd1}x{fd2}")
        if (i, j) in seen:
            raise DataFormatError(f"{path}: line {lineno}: duplicate entry ({i}, {j})")
        seen.add((i, j))
        rows.append(i)
        cols.append(j)
        vals.append(v)
    return ObservationSet(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                          np.array(vals, dtype=float), fd1, fd2)


def save_dense(a, path):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise IMCError("save_dense expects a 2-d array")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {DENSE_MAGIC} rows={a.shape[0]} cols={a.shape[1]}\n")
        for row in a.tolist():
            fh.write(",".join(fmt_float(x) for x in row) + "\n")


def load_dense(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    nrows, ncols = _parse_header(lines[0], DENSE_MAGIC, ("rows", "cols"), path)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != nrows:
        raise DataFormatError(f"{path}: header says {nrows} rows, found {len(body)}")
    out = np.empty((nrows, ncols))
    for k, line in enumerate(body):
        parts = line.split(",")
        if len(parts) != ncols:
            raise DataFormatError(f"{path}: line {k + 2}: expected {ncols} values, found {len(parts)}")
        try:
            out[k] = [float(x) for x in parts]
        except ValueError:
            raise DataFormatError(f"{path}: line {k + 2}: non-numeric value") from None
    return out


# --- run configuration files -------------------------------------------------

def parse_config_text(text, allowed, source="<config>"):
    """Parse flat ``key = value`` text with ``#`` comments into a dict of strings.

    Unknown keys and repeated keys are errors.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise IMCError(f"{source}: line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise IMCError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in out:
            raise IMCError(f"{source}: line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path, allowed):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    return parse_config_text(path.read_text(encoding="utf-8"), allowed, str(path))


def format_config(values):
    lines = ["# imcflow resolved configuration"]
    for key in sorted(values):
        v = values[key]
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = fmt_float(v)
        elif isinstance(v, (list, tuple)):
            v = ",".join(fmt_float(x) if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


# --- reports -------------------------------------------------------------------

def _cell(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def write_csv(path, rows, columns=None):
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def save_report(report, out_dir, echo=None):
    """Write ``trace.csv``, ``report.csv`` and ``config.echo`` into ``out_dir``.

    ``echo`` is the resolved run configuration; it defaults to the solver config.
    """
    out_dir = Path(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
        trace_rows = [dict(phase=r.phase, iter=r.iteration, data_passes=r.data_passes, loss=r.loss,
                           rel_error=r.rel_error, procrustes_dist=r.procrustes_dist, wall_ms=r.wall_ms)
                      for r in report.trace]
        write_csv(out_dir / "trace.csv", trace_rows, TRACE_COLUMNS)
        write_csv(out_dir / "report.csv", [report.summary()])
        (out_dir / "config.echo").write_text(
            format_config(echo if echo is not None else report.config.to_dict()), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {out_dir}: {exc}") from exc
    return [out_dir / "trace.csv", out_dir / "report.csv", out_dir / "config.echo"]

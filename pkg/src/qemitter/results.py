"""CSV tables, key-value summaries and atomic result bundles."""

from __future__ import annotations

import csv
import io
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import UsageError


def format_float(x) -> str:
    """17 significant digits: every double round-trips exactly."""
    return format(float(x), ".17g")


def csv_text(header: Sequence[str], columns: Sequence[Sequence[float]]) -> str:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(cols) != len(header):
        raise UsageError(f"{len(header)} header names for {len(cols)} columns")
    if len({c.size for c in cols}) > 1:
        raise UsageError("columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([format_float(v) for v in row])
    return buf.getvalue()


def read_csv(path, expected: Sequence[Sequence[str]] = ()) -> Tuple[List[str], np.ndarray]:
    """Header names and an ``(n_rows, n_cols)`` float array.

    ``expected`` lists acceptable leading-column names (e.g. ``[("t_ns",
    "value")]``). Blank lines and ``#`` lines are skipped. Errors name the
    1-based file line.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [(i, r) for i, r in enumerate(csv.reader(lines), start=1)
            if r and not r[0].lstrip().startswith("#") and any(c.strip() for c in r)]
    if not rows:
        raise UsageError(f"{path}: empty CSV")
    hline, header = rows[0]
    header = [h.strip() for h in header]
    if expected and not any(header[:len(e)] == list(e) for e in expected):
        want = " or ".join(",".join(e) for e in expected)
        raise UsageError(f"{path}: line {hline}: header {','.join(header)!r}, expected {want}")
    data = []
    for lineno, r in rows[1:]:
        if len(r) != len(header):
            raise UsageError(f"{path}: line {lineno}: {len(r)} fields, header has {len(header)}")
        try:
            vals = [float(c) for c in r]
        except ValueError as exc:
            raise UsageError(f"{path}: line {lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in vals):
            raise UsageError(f"{path}: line {lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise UsageError(f"{path}: no data rows")
    return header, np.array(data, dtype=float)


@dataclass
class SummaryEntry:
    key: str
    value: object
    source: str = "computed"  # computed | fit | config | input


def _format_summary_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_summary_value(x) for x in v)
    return str(v).replace("\n", " ")


def summary_text(entries: Sequence[SummaryEntry]) -> str:
    width = max((len(e.key) for e in entries), default=0)
    return "".join(f"{e.key.ljust(width)} = {_format_summary_value(e.value)}  # {e.source}\n"
                   for e in entries)


def parse_summary(text: str) -> Dict[str, str]:
    out = {}
    for line in text.splitlines():
        if "=" not in line:
            continue
        key, rest = line.split("=", 1)
        out[key.strip()] = rest.rsplit("#", 1)[0].strip()
    return out


@dataclass
class ResultBundle:
    """Everything one command emits. Nothing touches disk until :meth:`write`."""

    tables: Dict[str, Tuple[List[str], List[np.ndarray]]] = field(default_factory=dict)
    summary: List[SummaryEntry] = field(default_factory=list)
    extra_text: Dict[str, str] = field(default_factory=dict)

    def table(self, name, header, columns):
        self.tables[name] = (list(header), [np.asarray(c, dtype=float) for c in columns])

    def add(self, key, value, source="computed"):
        self.summary.append(SummaryEntry(key, value, source))

    def value(self, key):
        for e in self.summary:
            if e.key == key:
                return e.value
        raise KeyError(key)

    def render(self) -> Dict[str, str]:
        files = {f"{name}.csv": csv_text(h, c) for name, (h, c) in self.tables.items()}
        files.update(self.extra_text)
        files["summary.txt"] = summary_text(self.summary)
        return files

    def write(self, out_dir) -> List[str]:
        """Render, stage in a sibling temp dir, then move files into place."""
        files = self.render()
        out_dir = os.path.abspath(out_dir)
        parent = os.path.dirname(out_dir)
        os.makedirs(parent, exist_ok=True)
        stage = tempfile.mkdtemp(prefix=".stage-", dir=parent)
        try:
            for name, text in files.items():
                with open(os.path.join(stage, name), "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
            if not os.path.exists(out_dir):
                os.replace(stage, out_dir)
                stage = None
            else:
                for name in files:
                    os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
        finally:
            if stage is not None:
                shutil.rmtree(stage, ignore_errors=True)
        return sorted(os.path.join(out_dir, n) for n in files)

"""Run reports and artifact files: deterministic JSON, CSV plot data, binary matrix dumps.

Every artifact carries the hash of the configuration that produced it.
Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MATRIX_MAGIC = b"LLABMAT1"


class ReportMergeError(ValueError):
    """Reports produced from different configurations cannot be combined."""


def to_jsonable(obj):
    """Plain Python data with numpy scalars unwrapped and non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class Check:
    name: str
    passed: bool
    operation: str
    values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "operation": self.operation, "values": self.values}


@dataclass
class RunReport:
    """Results of one subcommand.

    ``sections`` maps an operation name to ``{"params": ..., "results": ...}``
    so every number is tagged with what produced it. ``timing`` is kept out
    of :meth:`to_json` so that reruns compare byte for byte. ``artifacts``
    maps CSV file names to ``(header, rows)`` plot data.
    """

    command: str
    config_hash: str
    config_name: str
    seed: int
    sections: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def add(self, operation: str, params: dict, results) -> None:
        self.sections[operation] = {"params": params, "results": results}

    def check(self, name: str, passed: bool, operation: str, **values) -> Check:
        c = Check(name, bool(passed), operation, values)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "config_name": self.config_name,
                "seed": self.seed, "passed": self.passed, "sections": self.sections,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def timing_json(self) -> str:
        return dumps({"config_hash": self.config_hash, "command": self.command, "timing": self.timing})

    def summary_lines(self) -> list[str]:
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.operation}: {c.name}")
        return lines


def merge_reports(reports: list[RunReport]) -> RunReport:
    """Concatenate the sections and checks of reports sharing one configuration hash."""
    if not reports:
        raise ReportMergeError("nothing to merge")
    hashes = {r.config_hash for r in reports}
    if len(hashes) > 1:
        raise ReportMergeError(f"refusing to merge reports from different configurations: {sorted(hashes)}")
    first = reports[0]
    out = RunReport("+".join(r.command for r in reports), first.config_hash, first.config_name, first.seed)
    for r in reports:
        for op, sec in r.sections.items():
            if op in out.sections:
                raise ReportMergeError(f"operation {op!r} appears in more than one report")
            out.sections[op] = sec
        out.checks.extend(r.checks)
        out.artifacts.update(r.artifacts)
        out.timing.update({f"{r.command}.{k}": v for k, v in r.timing.items()})
    return out


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode())


def csv_text(header: list[str], rows, config_hash: str) -> str:
    """CSV with a leading ``# config_hash=...`` comment line."""
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """Returns the config hash, header and rows of a file written by :func:`csv_text`."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# config_hash="):
        raise ValueError(f"{path}: missing config hash line")
    rows = list(csv.reader(lines[1:]))
    return lines[0].split("=", 1)[1], rows[0], rows[1:]


def matrix_bytes(M, config_hash: str) -> bytes:
    """Little-endian dump: magic, 16-byte hash, uint64 rows and cols, then interleaved re/im float64."""
    M = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2:
        raise ValueError("matrix dump needs a 2-d array")
    h = config_hash.encode().ljust(16, b"\0")[:16]
    head = MATRIX_MAGIC + h + struct.pack("<QQ", *M.shape)
    body = np.ascontiguousarray(M).view(np.float64).astype("<f8").tobytes()
    return head + body


def read_matrix(path) -> tuple[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MATRIX_MAGIC:
        raise ValueError(f"{path}: not a matrix dump")
    h = data[8:24].rstrip(b"\0").decode()
    rows, cols = struct.unpack("<QQ", data[24:40])
    flat = np.frombuffer(data[40:], dtype="<f8")
    if flat.size != 2 * rows * cols:
        raise ValueError(f"{path}: payload size {flat.size} does not match {rows}x{cols}")
    return h, flat.view(np.complex128).reshape(rows, cols).copy()

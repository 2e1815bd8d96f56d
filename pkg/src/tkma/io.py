"""File formats: binary PGM images, CSV traces and matrices, JSON configs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import IterRecord

TRACE_HEADER = ("algo", "k", "t_applies", "residual", "theta", "theta_var_cum", "ofv", "quality")


class PgmError(ValueError):
    pass


class MaxvalUnsupported(PgmError):
    pass


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def to_pixels(img) -> np.ndarray:
    """Clip to [0, 255] and round half to even, as uint8."""
    return np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)).astype(np.uint8)


def pgm_bytes(img) -> bytes:
    px = to_pixels(img)
    if px.ndim != 2:
        raise PgmError(f"2-D image required, got shape {px.shape}")
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes(order="C")


def pgm_write(img, path) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def _header_tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the single whitespace byte
    that ends the last one.
    """
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise PgmError("malformed header: unexpected end of file")
        tokens.append(data[i:j])
        i = j
    if i >= n or not data[i:i + 1].isspace():
        raise PgmError("malformed header: missing whitespace after maxval")
    return tokens, i + 1


def pgm_parse(data: bytes) -> np.ndarray:
    tokens, offset = _header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise PgmError(f"malformed header: magic {tokens[0]!r}, expected b'P5'")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PgmError(f"malformed header: {exc}") from None
    if w <= 0 or h <= 0:
        raise PgmError(f"malformed header: size {w}x{h}")
    if maxval != 255:
        raise MaxvalUnsupported(f"maxval {maxval} not supported (only 255)")
    payload = data[offset:offset + w * h]
    if len(payload) < w * h:
        raise PgmError(f"truncated payload: {len(payload)} of {w * h} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def pgm_read(path) -> np.ndarray:
    """Read a binary 8-bit PGM as a ``(height, width)`` uint8 array."""
    return pgm_parse(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def format_real(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format_real(v)


def trace_text(algo: str, records: Iterable[IterRecord], meta: Mapping | None = None) -> str:
    """CSV text of a trace, with ``# key=value`` lines echoing ``meta`` first."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    last = -1
    for r in records:
        if r.t_applies <= last:
            raise ValueError("t_applies must be strictly increasing within a trace")
        last = r.t_applies
        w.writerow([algo, r.k, r.t_applies] +
                   [_cell(v) for v in (r.residual, r.theta, r.theta_var_cum, r.objective, r.quality)])
    return buf.getvalue()


def trace_write(algo: str, records, path, meta=None) -> None:
    Path(path).write_text(trace_text(algo, records, meta), encoding="utf-8", newline="")


def trace_read(path):
    """Parse a trace CSV into ``(meta, rows)``; empty cells become ``None``."""
    meta = {}
    rows = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if tuple(header or ()) != TRACE_HEADER:
        raise ValueError(f"unexpected trace header {header}")
    for row in reader:
        rec = {"algo": row[0], "k": int(row[1]), "t_applies": int(row[2])}
        for name, cell in zip(TRACE_HEADER[3:], row[3:]):
            rec[name] = None if cell == "" else float(cell)
        rows.append(rec)
    return meta, rows


def matrix_write(X, path) -> None:
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in X:
            w.writerow([format_real(v) for v in row])


def matrix_read(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        return np.array([[float(c) for c in row] for row in csv.reader(fh) if row], dtype=np.float64)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def parse_config(text: str, allowed: Mapping, required: Iterable[str] = ()) -> dict:
    """Strict key check of a JSON object.

    ``allowed`` maps keys to default values; keys absent from the document
    take their default.  Unknown keys are an error naming them, and every
    missing required key is reported in one error.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError("unknown config key(s): " + ", ".join(repr(k) for k in unknown))
    missing = [k for k in required if k not in doc]
    if missing:
        raise ConfigError("missing required config key(s): " + ", ".join(repr(k) for k in missing))
    out = dict(allowed)
    out.update(doc)
    return out


def load_config_text(path) -> str:
    return Path(os.fspath(path)).read_text(encoding="utf-8")

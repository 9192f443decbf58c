"""Text file formats.

Matrix file::

    # rows=<M> cols=<N>
    M lines of N comma-separated floats

Feature file (one line per sample)::

    # features=<M> samples=<N> classes=<C>
    <label>,<f1>,...,<fM>

Feature-map file (channel-major, one image row per line)::

    # channels=<c> height=<h> width=<w>
    c*h lines of w floats

Floats are written with 17 significant digits, which round-trips float64
exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import LabelError, ParseError
from .factorize import FactorModel

FLOAT_FMT = "%.17g"


def _parse_header(line, keys, lineno=1):
    line = line.strip()
    if not line.startswith("#"):
        raise ParseError(f"expected header '# {' '.join(k + '=<n>' for k in keys)}'", lineno)
    fields = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise ParseError(f"malformed header token {tok!r}", lineno)
        key, value = tok.split("=", 1)
        fields[key] = value
    out = {}
    for key in keys:
        if key not in fields:
            raise ParseError(f"header is missing {key}=", lineno)
        try:
            out[key] = int(fields[key])
        except ValueError:
            raise ParseError(f"header field {key}={fields[key]!r} is not an integer", lineno) from None
        if out[key] < 1:
            raise ParseError(f"header field {key} must be >= 1", lineno)
    return out


def _floats(text, lineno, expected):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != expected:
        raise ParseError(f"expected {expected} values, found {len(parts)}", lineno)
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    return vals


def _content_lines(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("file is empty", 1)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    return lines[0], body


def read_matrix(path):
    header, body = _content_lines(path)
    h = _parse_header(header, ("rows", "cols"))
    if len(body) != h["rows"]:
        raise ParseError(f"header promises {h['rows']} rows, file has {len(body)}",
                         body[-1][0] if body else 1)
    out = np.array([_floats(ln, i, h["cols"]) for i, ln in body], dtype=np.float64)
    return out.reshape(h["rows"], h["cols"])


def write_matrix(path, mtx):
    mtx = np.atleast_2d(np.asarray(mtx, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# rows={mtx.shape[0]} cols={mtx.shape[1]}\n")
        np.savetxt(fh, mtx, fmt=FLOAT_FMT, delimiter=",")


def read_feature_file(path):
    """Parse a feature file; returns ``(X, labels, n_classes)`` with ``X`` features x samples."""
    header, body = _content_lines(path)
    h = _parse_header(header, ("features", "samples", "classes"))
    M, N, C = h["features"], h["samples"], h["classes"]
    if len(body) != N:
        raise ParseError(f"header promises {N} samples, file has {len(body)}",
                         body[-1][0] if body else 1)
    X = np.empty((M, N))
    labels = np.empty(N, dtype=np.int64)
    for j, (lineno, line) in enumerate(body):
        label, _, rest = line.partition(",")
        try:
            labels[j] = int(label.strip())
        except ValueError:
            raise ParseError(f"label {label.strip()!r} is not an integer", lineno) from None
        if not 0 <= labels[j] < C:
            raise LabelError(f"line {lineno}: label {labels[j]} outside [0, {C})")
        X[:, j] = _floats(rest, lineno, M)
    return X, labels, C


def write_feature_file(path, X, labels, n_classes):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# features={X.shape[0]} samples={X.shape[1]} classes={n_classes}\n")
        for j in range(X.shape[1]):
            row = ",".join(FLOAT_FMT % v for v in X[:, j])
            fh.write(f"{int(labels[j])},{row}\n")


def read_feature_map(path):
    """Parse a feature-map file into a ``c x h x w`` array."""
    header, body = _content_lines(path)
    h = _parse_header(header, ("channels", "height", "width"))
    c, hh, w = h["channels"], h["height"], h["width"]
    if len(body) != c * hh:
        raise ParseError(f"header promises {c * hh} rows, file has {len(body)}",
                         body[-1][0] if body else 1)
    rows = [_floats(ln, i, w) for i, ln in body]
    data = np.array(rows, dtype=np.float64).reshape(c, hh, w)
    if not np.all(np.isfinite(data)):
        raise ParseError("feature map contains NaN or Inf")
    return data


def write_feature_map(path, data):
    data = np.asarray(data, dtype=np.float64)
    c, h, w = data.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# channels={c} height={h} width={w}\n")
        np.savetxt(fh, data.reshape(c * h, w), fmt=FLOAT_FMT, delimiter=",")


def write_pgm(path, values):
    """Plain (P2) greyscale render of a map with values in ``[0, 1]``."""
    img = np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(int)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{img.shape[1]} {img.shape[0]}\n255\n")
        for row in img:
            fh.write(" ".join(str(v) for v in row) + "\n")


def save_model(path, model: FactorModel, config=None):
    doc = model.to_dict()
    if config is not None:
        doc["config"] = config
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc.msg}", exc.lineno) from None
    try:
        return FactorModel.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"model file is malformed: {exc}") from None

"""Report files: JSON documents and CSV tables, written atomically.

Floats are written with Python's shortest round-trip representation, so a
JSON report reads back bit-exactly and CSV values read back exactly.

K table columns, in order: ``lambda_re, lambda_im``, then ``K_re[p][q]`` for
all ``p, q`` (row-major), then ``K_im[p][q]`` in the same order.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .coefficients import EffectiveCoefficients
from .errors import IoError

SCHEMA_VERSION = 1


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename.

    Raises
    ------
    IoError
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
    return path


def _plain(obj):
    """Convert numpy containers and scalars to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": _plain(obj.real.tolist()), "im": _plain(obj.imag.tolist())}
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # empty-phase averages are undefined
        return None if math.isnan(obj) else float(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, no NaN or infinity).

    Raises
    ------
    IoError
    """
    try:
        return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
    except (TypeError, ValueError) as exc:
        raise IoError(f"cannot serialize report: {exc}") from None


def write_json(obj, path) -> Path:
    return atomic_write_text(path, dumps(obj))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


# coefficients ------------------------------------------------------------------


def write_coefficients(coef: EffectiveCoefficients, path) -> Path:
    doc = {"schema_version": SCHEMA_VERSION, **coef.to_dict()}
    return write_json(doc, path)


def read_coefficients(path) -> EffectiveCoefficients:
    doc = read_json(path)
    try:
        return EffectiveCoefficients.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError(f"malformed coefficient report {path}: {exc}") from None


# K table -----------------------------------------------------------------------


def k_table_header(dim: int) -> list[str]:
    idx = [(p, q) for p in range(dim) for q in range(dim)]
    return ["lambda_re", "lambda_im"] + [f"K_re[{p}][{q}]" for p, q in idx] + [f"K_im[{p}][{q}]" for p, q in idx]


def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise IoError(f"non-finite value {x!r} in table")
    return repr(x)


def k_table_text(samples, dim: int | None = None) -> str:
    """CSV text of ``K`` samples; ``dim`` is required when ``samples`` is empty."""
    samples = list(samples)
    if dim is None:
        if not samples:
            raise IoError("dimension is required for an empty K table")
        dim = np.asarray(samples[0][1]).shape[0]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(k_table_header(dim))
    for lam, K in samples:
        K = np.asarray(K, dtype=complex)
        if K.shape != (dim, dim):
            raise IoError(f"K sample has shape {K.shape}, expected {(dim, dim)}")
        lam = complex(lam)
        w.writerow([_num(lam.real), _num(lam.imag)] + [_num(v) for v in K.real.ravel()] + [_num(v) for v in K.imag.ravel()])
    return buf.getvalue()


def write_k_table(samples, path, dim: int | None = None) -> Path:
    return atomic_write_text(path, k_table_text(samples, dim))


def read_k_table(path) -> list:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise IoError(f"{path} is empty")
    n = len(rows[0]) - 2
    dim = int(round(math.sqrt(n / 2)))
    if rows[0] != k_table_header(dim):
        raise IoError(f"{path} does not have a K table header")
    out = []
    for row in rows[1:]:
        try:
            v = [float(x) for x in row]
        except ValueError as exc:
            raise IoError(f"bad number in {path}: {exc}") from None
        if len(v) != len(rows[0]):
            raise IoError(f"row of length {len(v)} in {path}")
        m = dim * dim
        K = np.array(v[2 : 2 + m]).reshape(dim, dim) + 1j * np.array(v[2 + m :]).reshape(dim, dim)
        out.append((complex(v[0], v[1]), K))
    return out


# traces ------------------------------------------------------------------------


def traces_text(times, probes, traces) -> str:
    """CSV with columns ``probe, x_1..x_D, t, u_1..u_D, p0``.

    ``traces`` has shape ``(n_times, n_probes, D + 1)``.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    traces = np.asarray(traces, dtype=float)
    D = probes.shape[1]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe"] + [f"x_{a + 1}" for a in range(D)] + ["t"] + [f"u_{a + 1}" for a in range(D)] + ["p0"])
    for j, x in enumerate(probes):
        for k, t in enumerate(times):
            w.writerow([j] + [_num(c) for c in x] + [_num(t)] + [_num(v) for v in traces[k, j]])
    return buf.getvalue()


def write_traces(times, probes, traces, path) -> Path:
    return atomic_write_text(path, traces_text(times, probes, traces))


def read_traces(path) -> dict:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    header, body = rows[0], rows[1:]
    return {"header": header, "rows": [[int(r[0])] + [float(x) for x in r[1:]] for r in body]}


# gap report --------------------------------------------------------------------


def gap_report(gaps: list[dict], lam: complex) -> dict:
    """Assemble the gap report document from per-epsilon gap dictionaries."""
    lam = complex(lam)
    return {
        "schema_version": SCHEMA_VERSION,
        "epsilons": [g["epsilon"] for g in gaps],
        "lambda": [lam.real, lam.imag],
        "gaps": [g["gap"] for g in gaps],
        "phase_averages": [
            {k: np.asarray(v) for k, v in g["fine_averages"].items()} | {"homogenized": np.asarray(g["homogenized_averages"])}
            for g in gaps
        ],
        "energy_split": [g["energy_split"] for g in gaps],
    }

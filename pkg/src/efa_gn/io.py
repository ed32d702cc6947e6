"""Text formats for matrices, masks, traces and sweep summaries.

Matrix file::

    # complex P R C
    re,im,re,im,...      (one line per row, 2C fields)

Mask file: same layout with ``# mask P P`` and one 0/1 field per cell.
Numbers are printed with 17 significant digits so they round-trip exactly.
"""

import csv
import json

import numpy as np

from .model import NoiseMask

TRACE_HEADER = ["iter", "cost", "grad_norm", "mu", "inner_iters", "wall_ms"]


class FormatError(ValueError):
    pass


def fmt(x):
    return format(float(x), ".17g")


def write_matrix(path, X, P=None):
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    R, C = X.shape
    P = R if P is None else P
    lines = [f"# complex {P} {R} {C}"]
    for row in X:
        lines.append(",".join(f"{fmt(z.real)},{fmt(z.imag)}" for z in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_header(lines, path, kind):
    if not lines:
        raise FormatError(f"{path}:1: empty file")
    head = lines[0].split()
    if len(head) < 3 or head[0] != "#" or head[1] != kind:
        raise FormatError(f"{path}:1: expected header '# {kind} P R C', got {lines[0]!r}")
    try:
        dims = [int(t) for t in head[2:]]
    except ValueError:
        raise FormatError(f"{path}:1: non-integer dimension in header {lines[0]!r}") from None
    if kind == "mask" and len(dims) == 2:
        dims = [dims[0]] + dims
    if len(dims) != 3 or min(dims) < 0:
        raise FormatError(f"{path}:1: bad dimensions in header {lines[0]!r}")
    return dims


def _read_lines(path):
    with open(path) as fh:
        return [ln.rstrip("\r\n") for ln in fh if ln.strip()]


def read_matrix(path):
    """Return ``(X, P)``. Errors name the offending line and field."""
    lines = _read_lines(path)
    P, R, C = _read_header(lines, path, "complex")
    body = lines[1:]
    if len(body) != R:
        raise FormatError(f"{path}: header declares {R} rows, found {len(body)}")
    X = np.empty((R, C), dtype=complex)
    for i, ln in enumerate(body):
        fields = ln.split(",")
        if len(fields) != 2 * C:
            raise FormatError(f"{path}:{i + 2}: expected {2 * C} fields, found {len(fields)}")
        vals = np.empty(2 * C)
        for j, f in enumerate(fields):
            try:
                vals[j] = float(f)
            except ValueError:
                raise FormatError(f"{path}:{i + 2}:{j + 1}: cannot parse {f!r} as a number") from None
        X[i] = vals[0::2] + 1j * vals[1::2]
    return X, P


def write_mask(path, mask):
    M = mask.mask if isinstance(mask, NoiseMask) else np.asarray(mask, bool)
    P = M.shape[0]
    lines = [f"# mask {P} {P}"] + [",".join("1" if v else "0" for v in row) for row in M]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mask(path):
    lines = _read_lines(path)
    P, R, C = _read_header(lines, path, "mask")
    if R != C or R != P:
        raise FormatError(f"{path}:1: mask must be P x P")
    body = lines[1:]
    if len(body) != R:
        raise FormatError(f"{path}: header declares {R} rows, found {len(body)}")
    M = np.zeros((P, P), dtype=bool)
    for i, ln in enumerate(body):
        fields = ln.split(",")
        if len(fields) != C:
            raise FormatError(f"{path}:{i + 2}: expected {C} fields, found {len(fields)}")
        for j, f in enumerate(fields):
            if f.strip() not in ("0", "1"):
                raise FormatError(f"{path}:{i + 2}:{j + 1}: mask field must be 0 or 1, got {f!r}")
            M[i, j] = f.strip() == "1"
    return NoiseMask(M)


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.records:
            w.writerow([r.iteration, fmt(r.cost), fmt(r.grad_norm), fmt(r.mu), r.inner_iters, fmt(r.wall_ms)])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRACE_HEADER:
        raise FormatError(f"{path}:1: expected header {','.join(TRACE_HEADER)}")
    out = []
    for r in rows[1:]:
        out.append({
            "iter": int(r[0]),
            "cost": float(r[1]),
            "grad_norm": float(r[2]),
            "mu": float(r[3]),
            "inner_iters": int(r[4]),
            "wall_ms": float(r[5]),
        })
    return out


def write_summary(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path):
    with open(path) as fh:
        return json.load(fh)

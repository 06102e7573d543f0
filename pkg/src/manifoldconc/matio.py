"""Plain-text CSV format for matrices and tensors.

Matrices::

    # rows=<n> cols=<m>
    a11,a12,...
    ...

Tensors are stored flattened in lexicographic (C) index order, one row of
the trailing dimension per line, after a ``# order=<k> dims=<d1>,<d2>,...``
header.
"""
import re

import numpy as np

__all__ = ["write_matrix", "read_matrix", "write_tensor", "read_tensor"]

_MAT_HEADER = re.compile(r"#\s*rows=(\d+)\s+cols=(\d+)")
_TEN_HEADER = re.compile(r"#\s*order=(\d+)\s+dims=([\d,\s]+)")


def _fmt(x):
    return repr(float(x))


def write_matrix(path, A, comments=()):
    """Write ``A`` with its shape header; ``comments`` become extra ``#``
    lines after the header."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise ValueError("write_matrix expects a 2-d array")
    with open(path, "w") as fh:
        fh.write(f"# rows={A.shape[0]} cols={A.shape[1]}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        for row in A:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _data_lines(fh):
    for line in fh:
        line = line.strip()
        if line and not line.startswith("#"):
            yield line


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`.

    Raises ``ValueError`` if the header is missing or the body does not
    match the declared shape.
    """
    with open(path) as fh:
        header = fh.readline()
        m = _MAT_HEADER.match(header.strip())
        if not m:
            raise ValueError(f"{path}: missing '# rows=<n> cols=<m>' header")
        n, k = int(m.group(1)), int(m.group(2))
        rows = [[float(x) for x in line.split(",")] for line in _data_lines(fh)]
    A = np.array(rows, dtype=float)
    if A.shape != (n, k):
        raise ValueError(f"{path}: header says {n}x{k}, body is {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{path}: non-finite entries")
    return A


def write_tensor(path, T):
    T = np.asarray(T, dtype=float)
    dims = ",".join(str(s) for s in T.shape)
    flat = T.reshape(-1, T.shape[-1]) if T.ndim > 1 else T.reshape(1, -1)
    with open(path, "w") as fh:
        fh.write(f"# order={T.ndim} dims={dims}\n")
        for row in flat:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_tensor(path):
    with open(path) as fh:
        header = fh.readline().strip()
        m = _TEN_HEADER.match(header)
        if not m:
            raise ValueError(f"{path}: missing '# order=<k> dims=<...>' header")
        order = int(m.group(1))
        dims = tuple(int(s) for s in m.group(2).replace(" ", "").split(",") if s)
        values = [float(x) for line in _data_lines(fh) for x in line.split(",")]
    if len(dims) != order:
        raise ValueError(f"{path}: order={order} but {len(dims)} dims given")
    T = np.array(values, dtype=float)
    if T.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} entries, got {T.size}")
    return T.reshape(dims)

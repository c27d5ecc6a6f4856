"""Plain-text matrix format and key-value headers.

A matrix is stored as a one-line header ``rows cols`` followed by ``rows``
lines of whitespace-separated values. Values are written with 17
significant digits so a round trip is exact.
"""

import io
from pathlib import Path

import numpy as np

from .errors import ConfigError

_FMT = "%.17g"


def format_matrix(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    buf = io.StringIO()
    buf.write(f"{M.shape[0]} {M.shape[1]}\n")
    if M.size:
        np.savetxt(buf, M, fmt=_FMT, delimiter=" ")
    return buf.getvalue()


def parse_matrix(lines):
    """Parse a matrix from an iterator of text lines.

    Consumes exactly the header plus ``rows`` lines and leaves the
    iterator positioned after them.
    """
    header = next(lines).split()
    if len(header) != 2:
        raise ConfigError(f"bad matrix header: {' '.join(header)!r}")
    rows, cols = int(header[0]), int(header[1])
    data = np.empty((rows, cols))
    for r in range(rows):
        vals = next(lines).split()
        if len(vals) != cols:
            raise ConfigError(f"row {r}: expected {cols} values, got {len(vals)}")
        data[r] = [float(v) for v in vals]
    return data


def save_matrix(path, M, header=None):
    """Write ``M`` to ``path``, optionally preceded by ``key = value`` lines."""
    text = format_header(header or {}) + format_matrix(M)
    Path(path).write_text(text)


def load_matrix(path):
    """Read a matrix written by :func:`save_matrix`; returns (header, M)."""
    lines = iter(Path(path).read_text().splitlines())
    header, first = parse_header(lines)
    return header, parse_matrix(_chain(first, lines))


def format_header(header):
    out = []
    for key, val in header.items():
        if isinstance(val, float):
            val = _FMT % val
        out.append(f"{key} = {val}\n")
    return "".join(out)


def parse_header(lines):
    """Read ``key = value`` lines until the first line without ``=``.

    Returns the header dict and that first non-header line (or None).
    """
    header = {}
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            return header, line
        key, _, val = stripped.partition("=")
        header[key.strip()] = val.strip()
    return header, None


def _chain(first, rest):
    if first is not None:
        yield first
    yield from rest

"""On-disk corrector cache and solution dumps.

File layout: one ASCII header line, then blocks.  Each block is a line
``<name> <dim0>,<dim1>,...`` followed by an unsigned 64-bit little-endian
value count and that many float64 little-endian values in row-major order.
A final ``end`` line closes the file.
"""

import hashlib
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cell import CellGrid, CorrectorSet

CACHE_MAGIC = "HSCACHE"
SOLUTION_MAGIC = "HSSOL"
VERSION = "v1"


class CacheFormatError(ValueError):
    pass


def canonical_params(params):
    return ",".join(repr(float(p)) for p in params) or "-"


@dataclass(frozen=True)
class CacheKey:
    family: str
    params_hash: str
    N: int
    tol: str

    @classmethod
    def build(cls, A, N, tol):
        family, _ = A.cache_tag()
        digest = hashlib.sha256(canonical_params(A.params).encode()).hexdigest()[:16]
        return cls(family, digest, int(N), repr(float(tol)))

    def serialize(self):
        return f"{self.family}|{self.params_hash}|{self.N}|{self.tol}".encode()

    def filename(self):
        tag = self.family.replace("*", "-adj")
        return f"{tag}-{self.params_hash}-N{self.N}-tol{self.tol}.hscache"


def _write_blocks(fh, blocks):
    for name, arr in blocks:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        shape = ",".join(str(s) for s in arr.shape) or "0"
        fh.write(f"{name} {shape}\n".encode())
        fh.write(np.uint64(arr.size).astype("<u8").tobytes())
        fh.write(arr.tobytes(order="C"))
    fh.write(b"end\n")


def _read_line(fh):
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise CacheFormatError("truncated file")
    return line[:-1].decode("ascii")


def _read_blocks(fh):
    blocks = {}
    while True:
        line = _read_line(fh)
        if line == "end":
            return blocks
        try:
            name, shape = line.split(" ")
            dims = tuple(int(s) for s in shape.split(","))
        except ValueError as exc:
            raise CacheFormatError(f"bad block header {line!r}") from exc
        raw = fh.read(8)
        if len(raw) != 8:
            raise CacheFormatError("truncated file")
        count = int(np.frombuffer(raw, "<u8")[0])
        if count != int(np.prod(dims)):
            raise CacheFormatError("block length does not match its shape")
        data = fh.read(8 * count)
        if len(data) != 8 * count:
            raise CacheFormatError("truncated file")
        blocks[name] = np.frombuffer(data, "<f8").reshape(dims).copy()


def atomic_write(path, writer):
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(A, N, tol):
    family, _ = A.cache_tag()
    return f"{CACHE_MAGIC} {VERSION} {family} {canonical_params(A.params)} {int(N)} {float(tol)!r}"


def write_correctors(path, A, N, tol, correctors):
    blocks = [("chi", correctors.chi), ("pi", correctors.pi)]
    if correctors.adjoint is not None:
        blocks += [("chi_adjoint", correctors.adjoint.chi), ("pi_adjoint", correctors.adjoint.pi)]

    def writer(fh):
        fh.write((_header(A, N, tol) + "\n").encode())
        _write_blocks(fh, blocks)

    atomic_write(path, writer)


def read_correctors(path, A, N, tol):
    """CorrectorSet from ``path``, or None on any mismatch or damage."""
    try:
        with open(path, "rb") as fh:
            if _read_line(fh) != _header(A, N, tol):
                return None
            blocks = _read_blocks(fh)
    except (OSError, CacheFormatError, UnicodeDecodeError):
        return None
    grid = CellGrid(int(N))
    try:
        cs = CorrectorSet(grid, blocks["chi"], blocks["pi"], {})
        if "chi_adjoint" in blocks:
            cs.adjoint = CorrectorSet(grid, blocks["chi_adjoint"], blocks["pi_adjoint"], {})
    except (KeyError, ValueError):
        return None
    if cs.chi.shape[-2:] != (grid.N, grid.N):
        return None
    return cs


class CorrectorCache:
    """Directory of corrector files keyed by CacheKey."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def path(self, A, N, tol):
        return self.directory / CacheKey.build(A, N, tol).filename()

    def load(self, A, N, tol):
        return read_correctors(self.path(A, N, tol), A, N, tol)

    def store(self, A, N, tol, correctors):
        write_correctors(self.path(A, N, tol), A, N, tol, correctors)


def cache_roundtrip(correctors, A, N, tol, directory):
    cache = CorrectorCache(directory)
    cache.store(A, N, tol, correctors)
    return cache.load(A, N, tol)


def write_solution(path, field, epsilon=None):
    """Dump velocity components and pressure of a DomainField."""
    eps = "none" if epsilon is None else repr(float(epsilon))

    def writer(fh):
        fh.write(f"{SOLUTION_MAGIC} {VERSION} {field.grid.M} {eps}\n".encode())
        _write_blocks(fh, [("u1", field.u[0]), ("u2", field.u[1]), ("p", field.p)])

    atomic_write(path, writer)


def read_solution(path):
    """(M, epsilon, blocks) from a solution dump."""
    with open(path, "rb") as fh:
        parts = _read_line(fh).split(" ")
        if len(parts) != 4 or parts[0] != SOLUTION_MAGIC or parts[1] != VERSION:
            raise CacheFormatError("not a solution dump of this version")
        blocks = _read_blocks(fh)
    eps = None if parts[3] == "none" else float(parts[3])
    return int(parts[2]), eps, blocks

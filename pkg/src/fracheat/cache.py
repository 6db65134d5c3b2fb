"""On-disk cache of eigenpairs in a versioned plain-text format.

A cache file starts with ``key = value`` header lines, followed by an
``[eigenvalues]`` section (one value per line) and a ``[coefficients]``
section (one row per basis coefficient, one column per mode).  Numbers are
written with 17 significant digits, so a load reproduces the stored arrays
bit for bit and identical inputs give byte-identical files.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

FORMAT_VERSION = 1
EIGEN_TOL = 1e-9  # residual tolerance of the eigensolver, part of the key

__all__ = ["BasisCache", "CacheKey", "FORMAT_VERSION"]


def _num(v: float) -> str:
    return f"{float(v):.17g}"


@dataclass(frozen=True)
class CacheKey:
    """Everything that determines a cached basis."""

    s: float
    method: str
    grid: str
    N: int
    degree: int
    tol: float = EIGEN_TOL
    version: int = FORMAT_VERSION

    def header(self) -> str:
        return "".join(
            f"{k} = {v}\n"
            for k, v in (
                ("format_version", self.version),
                ("s", _num(self.s)),
                ("method", self.method),
                ("grid", self.grid),
                ("N", self.N),
                ("degree", self.degree),
                ("eigen_tol", _num(self.tol)),
            )
        )

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.header().encode()).hexdigest()[:24]


def _grid_spec(grid) -> str:
    if grid.is_uniform():
        return f"uniform:{grid.n_interior}"
    h = hashlib.sha256(np.ascontiguousarray(grid.nodes).tobytes()).hexdigest()[:16]
    return f"nodes:{grid.nodes.size}:{h}"


class BasisCache:
    """Directory of eigenpair files guarded by a lock file."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.directory / ".lock"))

    def key(self, *, s, method, grid, N, degree) -> CacheKey:
        return CacheKey(float(s), str(method), _grid_spec(grid), int(N), int(degree))

    def path(self, key: CacheKey) -> Path:
        return self.directory / f"eigen-{key.digest}.txt"

    @staticmethod
    def serialize(key: CacheKey, eigenvalues, coefficients) -> str:
        lam = np.asarray(eigenvalues, dtype=float)
        C = np.asarray(coefficients, dtype=float)
        lines = [key.header(), "[eigenvalues]\n"]
        lines += [_num(v) + "\n" for v in lam]
        lines.append(f"[coefficients] {C.shape[0]} {C.shape[1]}\n")
        lines += [" ".join(_num(v) for v in row) + "\n" for row in C]
        return "".join(lines)

    @staticmethod
    def parse(text: str):
        """Return (header dict, eigenvalues, coefficients)."""
        head, rest = text.split("[eigenvalues]\n", 1)
        meta = {}
        for line in head.splitlines():
            k, v = line.split(" = ", 1)
            meta[k] = v
        ev_text, co_text = rest.split("[coefficients] ", 1)
        lam = np.array([float(v) for v in ev_text.split()])
        dims, body = co_text.split("\n", 1)
        r, c = (int(v) for v in dims.split())
        C = np.array([float(v) for v in body.split()]).reshape(r, c)
        return meta, lam, C

    def load(self, key: CacheKey):
        """(eigenvalues, coefficients) if a matching file exists, else None."""
        p = self.path(key)
        with self._lock:
            if not p.exists():
                return None
            text = p.read_text()
        if not text.startswith(key.header()):
            return None  # digest collision or stale format: recompute
        try:
            _, lam, C = self.parse(text)
        except ValueError:
            return None
        if lam.size != key.N or C.shape[1] != key.N:
            return None
        return lam, C

    def store(self, key: CacheKey, basis) -> Path:
        p = self.path(key)
        text = self.serialize(key, basis.eigenvalues, basis.coefficients)
        with self._lock:
            tmp = p.with_suffix(".tmp")
            tmp.write_text(text)
            os.replace(tmp, p)
        return p

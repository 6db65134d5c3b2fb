"""Exterior control regions and quadrature rules on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import (
    composite,
    endpoint_graded_breaks,
    gauss_jacobi,
    gauss_legendre,
    graded_breaks,
)

__all__ = ["ExteriorRegion", "parse_region", "half_axis_rule", "interval_kernel_integral"]


@dataclass(frozen=True)
class ExteriorRegion:
    """Finite union of disjoint open intervals outside (-1, 1).

    Endpoints may be infinite.  Intervals are stored sorted.
    """

    intervals: tuple

    def __post_init__(self):
        ivs = []
        for iv in self.intervals:
            a, b = (float(v) for v in iv)
            if np.isnan(a) or np.isnan(b) or not a < b:
                raise ValueError(f"interval ({a}, {b}) is empty")
            if not (a >= 1.0 or b <= -1.0):
                raise ValueError(f"interval ({a}, {b}) meets (-1, 1)")
            ivs.append((a, b))
        if not ivs:
            raise ValueError("region needs at least one interval")
        ivs.sort()
        for (a0, b0), (a1, b1) in zip(ivs[:-1], ivs[1:]):
            if a1 < b0:
                raise ValueError("intervals overlap")
        object.__setattr__(self, "intervals", tuple(ivs))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x > a) & (x < b)
        return out

    def touches_boundary(self) -> bool:
        return any(a == 1.0 or b == -1.0 for a, b in self.intervals)

    def min_gap(self) -> float:
        """Distance from the region to [-1, 1]."""
        return min((a - 1.0) if a >= 1.0 else (-1.0 - b) for a, b in self.intervals)

    def covers(self, other: "ExteriorRegion") -> bool:
        return all(any(a <= c and d <= b for a, b in self.intervals) for c, d in other.intervals)

    def __str__(self) -> str:
        return ",".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in self.intervals)

    def rule(self, n: int = 16, edge_power: float = 0.0, decay: float = 2.0):
        """Nodes/weights for integrals over the region.

        Intervals near +-1 are graded geometrically toward +-1.  When an
        interval touches +-1 the innermost panel carries the weight
        dist^edge_power.  Unbounded intervals are truncated; the remaining
        tail, assuming decay like |x|^-decay, becomes one extra node.
        """
        xs, ws = [], []
        for a, b in self.intervals:
            if a >= 1.0:
                x, w = half_axis_rule(a, b, n, edge_power, decay)
                xs.append(x)
            else:
                x, w = half_axis_rule(-b, -a, n, edge_power, decay)
                xs.append(-x[::-1])
                w = w[::-1]
            ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)


def _fmt(v: float) -> str:
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def parse_region(text: str) -> ExteriorRegion:
    """Parse "a:b[,c:d...]" (``inf``/``-inf`` allowed)."""
    ivs = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = part.split(":")
            ivs.append((float(a), float(b)))
        except ValueError as exc:
            raise ValueError(f"cannot parse interval {part!r}; expected a:b") from exc
    return ExteriorRegion(tuple(ivs))


def half_axis_rule(a: float, b: float, n: int = 16, edge_power: float = 0.0, decay: float = 2.0):
    """Rule on (a, b) with 1 <= a < b <= inf, graded toward x = 1."""
    xs, ws = [], []
    bf = b if np.isfinite(b) else a + max(1.0, 4.0 * (a - 1.0))
    if a == 1.0:
        if edge_power <= -1.0:
            raise ValueError("endpoint singularity is not integrable")
        br = endpoint_graded_breaks(a, bf, True, 20)  # deeper grading loses x - 1 to rounding
        x, w = gauss_jacobi(br[0], br[1], n, edge_power, 0.0)
        w = w / (x - 1.0) ** edge_power  # caller multiplies by f, which carries the power
        xs.append(x)
        ws.append(w)
        x, w = composite(br[1:], n)
        xs.append(x)
        ws.append(w)
    elif a - 1.0 < bf - a:
        x, w = composite(graded_breaks(a, bf, 1.0), n)
        xs.append(x)
        ws.append(w)
    else:
        npan = max(1, int(np.ceil((bf - a) / max(a - 1.0, 1e-300))))
        x, w = composite(np.linspace(a, bf, min(npan, 64) + 1), n)
        xs.append(x)
        ws.append(w)
    if not np.isfinite(b):
        if decay <= 1.0:
            raise ValueError("integrand decay too slow for an unbounded interval")
        X = bf * 1e13 ** (1.0 / (decay - 1.0))
        X = min(X, bf * 1e12)
        k = max(1, int(np.ceil(np.log2(X / bf))))
        br = bf * 2.0 ** np.arange(k + 1)
        x, w = composite(br, n)
        xs.append(x)
        ws.append(w)
        xs.append(np.array([br[-1]]))
        ws.append(np.array([br[-1] / (decay - 1.0)]))
    return np.concatenate(xs), np.concatenate(ws)


def interval_kernel_integral(x, a: float, b: float, s: float):
    """int_a^b |x - y|^(-1-2s) dy for x outside [a, b] (infinite ends allowed)."""
    x = np.asarray(x, dtype=float)

    def prim(t):  # int_t^inf r^(-1-2s) dr
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(t), 0.0, np.abs(t) ** (-2.0 * s) / (2.0 * s))

    right = x <= a
    near = np.where(right, a - x, x - b)
    far = np.where(right, b - x, x - a)
    return prim(near) - prim(far)

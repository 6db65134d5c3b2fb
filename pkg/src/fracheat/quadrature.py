"""Interval quadrature: Gauss rules, endpoint-weighted rules, geometric grading."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=64)
def _legendre(n: int):
    t, w = roots_legendre(n)
    t.flags.writeable = False
    w.flags.writeable = False
    return t, w


@lru_cache(maxsize=256)
def _jacobi(n: int, a: float, b: float):
    t, w = roots_jacobi(n, a, b)
    t.flags.writeable = False
    w.flags.writeable = False
    return t, w


def gauss_legendre(a: float, b: float, n: int = 16):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    t, w = _legendre(int(n))
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), half * w


def gauss_jacobi(a: float, b: float, n: int, left: float = 0.0, right: float = 0.0):
    """Rule for  int_a^b f(y) (y - a)^left (b - y)^right dy  (f smooth).

    The returned weights already contain the endpoint factors, so the
    caller multiplies them by f at the nodes only.
    """
    if left == 0.0 and right == 0.0:
        return gauss_legendre(a, b, n)
    t, w = _jacobi(int(n), float(right), float(left))
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), w * half ** (1.0 + left + right)


def graded_breaks(a: float, b: float, c: float, ratio: float = 2.0) -> np.ndarray:
    """Breakpoints of [a, b] so each piece is no wider than its gap to ``c``.

    ``c`` must lie outside the open interval (a, b) and differ from the
    nearer end; piece widths grow geometrically away from ``c``.
    """
    if not a < b:
        raise ValueError("need a < b")
    if a < c < b:
        raise ValueError("singular point inside the interval")
    toward_a = c <= a
    d = (a - c) if toward_a else (c - b)
    if d <= 0.0:
        raise ValueError("singular point coincides with an endpoint")
    L = b - a
    pts = [0.0]
    w = d
    while pts[-1] + w < L:
        pts.append(pts[-1] + w)
        w *= ratio
    if L - pts[-1] < 0.25 * w / ratio and len(pts) > 1:
        pts.pop()
    pts.append(L)
    off = np.array(pts)
    out = a + off if toward_a else b - off[::-1]
    out[0], out[-1] = a, b
    return out


def endpoint_graded_breaks(a: float, b: float, at_left: bool, levels: int, ratio: float = 0.5):
    """Breakpoints refining geometrically toward one endpoint of [a, b]."""
    L = b - a
    off = [0.0] + [L * ratio ** k for k in range(levels, 0, -1)] + [L]
    off = np.array(off)
    out = a + off if at_left else b - off[::-1]
    out[0], out[-1] = a, b
    return out


def composite(breaks, n: int = 16):
    """Gauss-Legendre on each piece of a breakpoint list, concatenated."""
    br = np.asarray(breaks, dtype=float)
    t, w = _legendre(int(n))
    half = 0.5 * np.diff(br)[:, None]
    return (br[:-1, None] + half * (t + 1.0)).ravel(), (half * w).ravel()

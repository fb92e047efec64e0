"""Small quadrature toolbox shared by the scalar and operator modules.

Everything here is vectorized over panels: integrands receive 1-D arrays of
abscissae and must return arrays of the same shape.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import legendre


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    x, w = legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_gauss(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, n: int = 16) -> np.ndarray:
    """Integrate ``f`` over each panel ``[edges[i], edges[i+1]]``; returns per-panel values."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(n)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel())).reshape(pts.shape)
    return (vals @ w) * half


def adaptive_gauss(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-12,
    breakpoints: Sequence[float] = (),
    n: int = 10,
    max_iter: int = 60,
    max_panels: int = 200_000,
) -> tuple[float, float]:
    """Adaptive composite Gauss-Legendre on [a, b].

    Each panel is integrated with an n-point and a 2n-point rule; panels whose
    two estimates differ by more than their share of ``tol`` are bisected.
    Returns ``(value, error_estimate)``.
    """
    if b <= a:
        return 0.0, 0.0
    pts = sorted({a, b, *[p for p in breakpoints if a < p < b]})
    lo = np.array(pts[:-1])
    hi = np.array(pts[1:])
    total = 0.0
    err = 0.0
    length = b - a
    for _ in range(max_iter):
        edges_lo, edges_hi = lo, hi
        coarse = _panel_rule(f, edges_lo, edges_hi, n)
        fine = _panel_rule(f, edges_lo, edges_hi, 2 * n)
        diff = np.abs(fine - coarse)
        share = tol * (edges_hi - edges_lo) / length
        ok = diff <= np.maximum(share, 1e-300)
        total += float(fine[ok].sum())
        err += float(diff[ok].sum())
        if ok.all():
            return total, err
        lo_bad, hi_bad = edges_lo[~ok], edges_hi[~ok]
        mid = 0.5 * (lo_bad + hi_bad)
        lo = np.concatenate([lo_bad, mid])
        hi = np.concatenate([mid, hi_bad])
        if lo.size > max_panels:
            break
    # out of refinement budget: accept what remains, report its error honestly
    fine = _panel_rule(f, lo, hi, 2 * n)
    coarse = _panel_rule(f, lo, hi, n)
    return total + float(fine.sum()), err + float(np.abs(fine - coarse).sum())


def _panel_rule(f, lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    x, w = gauss_legendre(n)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel())).reshape(pts.shape)
    return (vals @ w) * half


@lru_cache(maxsize=16)
def _cheb_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Chebyshev-Lobatto nodes on [-1, 1] (ascending) and the matrix mapping
    # nodal values to nodal values of the antiderivative vanishing at -1.
    k = np.arange(n)
    x = -np.cos(np.pi * k / (n - 1))
    vander = C.chebvander(x, n - 1)
    coef_of_vals = np.linalg.solve(vander, np.eye(n))
    integ = C.chebint(coef_of_vals, lbnd=-1.0, axis=0)
    mat = C.chebvander(x, n) @ integ
    return x, mat


def chebyshev_cumulative(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on [a, b] and matrix ``K`` with ``(K @ f(nodes))[i] ~ int_a^{nodes[i]} f``."""
    x, mat = _cheb_unit(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * mat

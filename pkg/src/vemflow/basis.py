"""Scaled monomial bases, vector-polynomial decomposition, and quadrature.

Everything here is a pure function of cell geometry, safe to call from
parallel element loops.  Scalar monomials are centered at the cell
barycenter and scaled by the cell diameter, listed in graded
lexicographic order: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
All dense local matrices index monomials by this order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "CellFrame",
    "DecompositionCoefficients",
    "QuadratureRule",
    "monomial_indices",
    "n_monomials",
    "monomial_position",
    "eval_scalar_monomials",
    "eval_monomial_gradients",
    "vector_monomial_decompose",
    "gauss_lobatto",
    "edge_gauss_lobatto",
    "edge_gauss",
    "triangle_rule",
    "polygon_quadrature",
]


@dataclass(frozen=True)
class CellFrame:
    """Barycenter and diameter defining the monomial scaling of one cell."""

    cx: float
    cy: float
    h: float


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)


@lru_cache(maxsize=None)
def monomial_indices(k: int) -> tuple[tuple[int, int], ...]:
    """Multi-indices of total degree <= k, graded lexicographic."""
    out = []
    for d in range(k + 1):
        for ax in range(d, -1, -1):
            out.append((ax, d - ax))
    return tuple(out)


def n_monomials(k: int) -> int:
    if k < 0:
        return 0
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def _position_map(k: int) -> dict[tuple[int, int], int]:
    return {a: i for i, a in enumerate(monomial_indices(k))}


def monomial_position(alpha: tuple[int, int]) -> int:
    """Position of a multi-index in the graded lexicographic list."""
    d = alpha[0] + alpha[1]
    return n_monomials(d - 1) + (d - alpha[0])


def _scaled_coords(frame: CellFrame, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=float)
    xi = (pts[..., 0] - frame.cx) / frame.h
    eta = (pts[..., 1] - frame.cy) / frame.h
    return xi, eta


def eval_scalar_monomials(frame: CellFrame, k: int, points: np.ndarray) -> np.ndarray:
    """Values m_alpha(x) for all |alpha| <= k; shape (n_monomials, npts)."""
    xi, eta = _scaled_coords(frame, points)
    xp = np.stack([xi**p for p in range(k + 1)])
    yp = np.stack([eta**p for p in range(k + 1)])
    return np.stack([xp[ax] * yp[ay] for ax, ay in monomial_indices(k)])


def eval_monomial_gradients(frame: CellFrame, k: int, points: np.ndarray) -> np.ndarray:
    """Gradients of the scaled monomials; shape (n_monomials, npts, 2)."""
    xi, eta = _scaled_coords(frame, points)
    xp = np.stack([xi**p for p in range(k + 1)])
    yp = np.stack([eta**p for p in range(k + 1)])
    out = np.zeros((n_monomials(k),) + xi.shape + (2,))
    for i, (ax, ay) in enumerate(monomial_indices(k)):
        if ax > 0:
            out[i, ..., 0] = ax / frame.h * xp[ax - 1] * yp[ay]
        if ay > 0:
            out[i, ..., 1] = ay / frame.h * xp[ax] * yp[ay - 1]
    return out


@dataclass(frozen=True)
class DecompositionCoefficients:
    """Two-term split of a vector monomial into gradient and perp parts.

    m_alpha e_dir = grad_coef * grad(m_grad_index) + perp_coef * xperp m_perp_index,
    with xperp the scaled rotated coordinate ((y-y_T)/h, -(x-x_T)/h).
    perp_index is None when the perp part vanishes.
    """

    grad_index: tuple[int, int]
    grad_coef: float
    perp_index: tuple[int, int] | None
    perp_coef: float


def vector_monomial_decompose(beta: tuple[int, int], direction: str, h: float) -> DecompositionCoefficients:
    """Closed-form gradient/perp decomposition of m_beta e_direction."""
    bx, by = beta
    d = bx + by
    if direction == "x":
        grad_index = (bx + 1, by)
        perp = None if by == 0 else (bx, by - 1)
        perp_coef = by / (d + 1)
    elif direction == "y":
        grad_index = (bx, by + 1)
        perp = None if bx == 0 else (bx - 1, by)
        perp_coef = -bx / (d + 1)
    else:
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    return DecompositionCoefficients(grad_index, h / (d + 1), perp, perp_coef)


def eval_perp_monomial(frame: CellFrame, delta: tuple[int, int], points: np.ndarray) -> np.ndarray:
    """Values of xperp m_delta, shape (npts, 2)."""
    xi, eta = _scaled_coords(frame, points)
    m = xi ** delta[0] * eta ** delta[1]
    return np.stack([eta * m, -xi * m], axis=-1)


# ---------------------------------------------------------------------------
# 1D rules


@lru_cache(maxsize=None)
def gauss_lobatto(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Lobatto rule on [-1, 1] (n >= 2), exact to degree 2n-3."""
    if n < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 points")
    if n == 2:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    # interior nodes are the roots of P'_{n-1}
    legc = np.zeros(n)
    legc[-1] = 1.0
    interior = np.polynomial.legendre.Legendre(legc).deriv().roots()
    nodes = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    pn = np.polynomial.legendre.Legendre(legc)(nodes)
    weights = 2.0 / (n * (n - 1) * pn**2)
    return nodes, weights


def _edge_points(p0: np.ndarray, p1: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    t = (nodes + 1.0) / 2.0
    return np.outer(1.0 - t, p0) + np.outer(t, p1)


def edge_gauss_lobatto(p0, p1, k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k+1 Gauss-Lobatto nodes on the segment p0-p1 with scaled weights.

    Interior nodes are exactly the edge DoF sites.
    """
    if k < 2:
        raise ValueError("order must be >= 2")
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    nodes, weights = gauss_lobatto(k + 1)
    length = float(np.hypot(*(p1 - p0)))
    return _edge_points(p0, p1, nodes), weights * (length / 2.0)


def edge_gauss(p0, p1, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule mapped to the segment p0-p1."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    nodes, weights = np.polynomial.legendre.leggauss(n)
    length = float(np.hypot(*(p1 - p0)))
    return _edge_points(p0, p1, nodes), weights * (length / 2.0)


# ---------------------------------------------------------------------------
# 2D rules


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive-weight rule on the reference triangle (0,0)-(1,0)-(0,1).

    Collapsed tensor Gauss product; exact for total degree <= order.
    """
    n = (max(order, 1) + 3) // 2  # covers the extra Jacobian degree
    x1, w1 = np.polynomial.legendre.leggauss(n)
    a = (x1 + 1.0) / 2.0
    wa = w1 / 2.0
    A, B = np.meshgrid(a, a, indexing="ij")
    WA, WB = np.meshgrid(wa, wa, indexing="ij")
    pts = np.column_stack([A.ravel(), (B * (1.0 - A)).ravel()])
    wts = (WA * WB * (1.0 - A)).ravel()
    return pts, wts


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_convex_loop(loop: np.ndarray, tol: float = 1e-12) -> bool:
    """Counterclockwise loop convexity; collinear (hanging-node) vertices pass."""
    nxt = np.roll(loop, -1, axis=0)
    e = nxt - loop
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = np.max(np.abs(e)) ** 2
    return bool(np.all(cross >= -tol * max(scale, 1e-300)))


def polygon_centroid_area(loop: np.ndarray) -> tuple[np.ndarray, float]:
    """Area centroid and signed area of a simple polygon (shoelace)."""
    x, y = loop[:, 0], loop[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return np.array([cx, cy]), area


def polygon_quadrature(loop: np.ndarray, order: int) -> QuadratureRule:
    """Quadrature on a convex polygon by fanning triangles from the centroid.

    Exact for polynomials of total degree <= order; all weights positive.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    loop = np.asarray(loop, float)
    if not is_convex_loop(loop):
        raise ValueError("polygon_quadrature supports convex cells only")
    centroid, area = polygon_centroid_area(loop)
    if area <= 0:
        raise ValueError("polygon loop must be counterclockwise with positive area")
    ref_pts, ref_w = triangle_rule(order)
    pts = []
    wts = []
    nv = len(loop)
    for i in range(nv):
        p1 = loop[i]
        p2 = loop[(i + 1) % nv]
        jac = np.column_stack([p1 - centroid, p2 - centroid])
        det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
        pts.append(centroid + ref_pts @ jac.T)
        wts.append(ref_w * det)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts))

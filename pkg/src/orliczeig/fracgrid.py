"""Hat-function Galerkin basis on an interval with zero exterior extension,
s-Hölder quotients, and quadrature of the singular pair measure
dnu(x,y) = dx dy / |x - y|.

The quadrature covers the box [alpha-L, beta+L]^2 minus a thin diagonal band,
restricted to cell pairs with at least one cell inside Omega; pairs with both
coordinates outside Omega carry u = 0 and are omitted exactly. Cells whose
closure touches the diagonal are refined by dyadic subdivision (ratio 1/2)
down to a fixed depth, and the innermost layer still touching the diagonal is
discarded. Every emitted point has its mirror (y, x) present with the same
weight by construction.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.sparse import csr_matrix
from scipy.special import xlogy

from .errors import ConfigError


@dataclass(frozen=True)
class QuadConfig:
    """Pair-quadrature resolution knobs.

    cells_per_axis: minimum 1-D cell count inside Omega (basis cells are
    subdivided evenly to reach it). grading_depth: dyadic refinement depth
    toward the diagonal. gauss_order: tensor Gauss points per axis per cell.
    tail_radius_factor: truncation radius L as a multiple of |Omega|.
    tail_panels: log-spaced panels per side between distance 1 and L.
    """

    cells_per_axis: int = 24
    grading_depth: int = 8
    gauss_order: int = 3
    tail_radius_factor: float = 4.0
    tail_panels: int = 16

    def __post_init__(self):
        if self.cells_per_axis < 2:
            raise ConfigError("cells_per_axis must be at least 2")
        if self.grading_depth < 1:
            raise ConfigError("grading_depth must be at least 1")
        if self.gauss_order < 1:
            raise ConfigError("gauss_order must be at least 1")
        if not self.tail_radius_factor > 0:
            raise ConfigError("tail_radius_factor must be positive")
        if self.tail_panels < 1:
            raise ConfigError("tail_panels must be at least 1")


def _bisection_order(k):
    # Midpoint-first breadth-first enumeration of 0..k-1, so the span of the
    # first j functions already covers Omega at a coarse scale for every j.
    order = []
    queue = deque([(0, k - 1)])
    while queue:
        lo, hi = queue.popleft()
        if lo > hi:
            continue
        mid = (lo + hi) // 2
        order.append(mid)
        queue.append((lo, mid - 1))
        queue.append((mid + 1, hi))
    return np.asarray(order, dtype=int)


@dataclass(frozen=True)
class GalerkinBasis:
    """k uniform hat functions on (alpha, beta), zero on the boundary and
    identically zero outside; basis index j refers to the hat at interior
    node ``order[j]``.
    """

    omega: tuple
    n_interior: int
    nodes: np.ndarray
    order: np.ndarray
    order_inverse: np.ndarray

    @property
    def h(self):
        return (self.omega[1] - self.omega[0]) / (self.n_interior + 1)

    def eval(self, j, x):
        """Value of basis function j at x (zero outside its support)."""
        if not 0 <= j < self.n_interior:
            raise ConfigError(f"basis index {j} out of range")
        m = self.order[j]
        x = np.asarray(x, dtype=float)
        # interp is exact at the support nodes, so the value at the ends of
        # the support (and beyond) is exactly zero
        val = np.interp(x, self.nodes[m : m + 3], [0.0, 1.0, 0.0])
        return float(val) if val.ndim == 0 else val

    def nodal_values(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_interior,):
            raise ValueError(
                f"expected {self.n_interior} coefficients, got {coeffs.shape}"
            )
        vals = np.zeros(self.n_interior + 2)
        vals[self.order + 1] = coeffs
        return vals

    def evaluate(self, coeffs, x):
        """u(x) for u = sum_j coeffs[j] phi_j, extended by zero outside."""
        vals = self.nodal_values(coeffs)
        x = np.asarray(x, dtype=float)
        # interp clamps to the boundary values, which are zero, so the
        # zero extension is exact.
        out = np.interp(x, self.nodes, vals)
        return float(out) if out.ndim == 0 else out

    def interpolation_matrix(self, points):
        """Sparse (len(points), k) matrix E with (E @ coeffs)[i] = u(points[i])."""
        x = np.asarray(points, dtype=float)
        alpha, beta = self.omega
        k = self.n_interior
        cell = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, k)
        t = (x - self.nodes[cell]) / self.h
        inside = (x > alpha) & (x < beta)

        rows = []
        cols = []
        data = []
        # left endpoint of the cell is interior node cell-1 when cell >= 1
        left = inside & (cell >= 1)
        rows.append(np.nonzero(left)[0])
        cols.append(self.order_inverse[cell[left] - 1])
        data.append(1.0 - t[left])
        # right endpoint is interior node cell when cell <= k-1
        right = inside & (cell <= k - 1)
        rows.append(np.nonzero(right)[0])
        cols.append(self.order_inverse[cell[right]])
        data.append(t[right])

        return csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(x.size, k),
        )


def build_basis(alpha, beta, k):
    alpha = float(alpha)
    beta = float(beta)
    if not (np.isfinite(alpha) and np.isfinite(beta) and alpha < beta):
        raise ConfigError(f"degenerate interval ({alpha}, {beta})")
    k = int(k)
    if k < 1:
        raise ConfigError("need at least one basis function")
    order = _bisection_order(k)
    inverse = np.empty(k, dtype=int)
    inverse[order] = np.arange(k)
    return GalerkinBasis(
        omega=(alpha, beta),
        n_interior=k,
        nodes=np.linspace(alpha, beta, k + 2),
        order=order,
        order_inverse=inverse,
    )


def holder_quotient(basis, coeffs, s, x, y):
    """(u(x) - u(y)) / |x - y|^s; antisymmetric in (x, y)."""
    if not 0.0 < s < 1.0:
        raise ConfigError(f"s must lie in (0,1), got {s}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x == y):
        raise ValueError("Hölder quotient undefined on the diagonal x = y")
    out = (basis.evaluate(coeffs, x) - basis.evaluate(coeffs, y)) / np.abs(
        x - y
    ) ** s
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PairQuadrature:
    """Point set and weights approximating dnu = dxdy/|x-y| off the diagonal.

    Weights already contain the 1/|x-y| factor. Arrays are read-only; the
    interpolation matrices Ex, Ey evaluate Galerkin coefficients at the x and
    y coordinates so that Ds u = (Ex c - Ey c) * invr_s.
    """

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    r: np.ndarray
    invr_s: np.ndarray
    Ex: csr_matrix
    Ey: csr_matrix
    s: float
    tail_box: float
    meta: dict

    @property
    def pairs(self):
        return np.column_stack([self.x, self.y])

    @property
    def nu_weights(self):
        return self.w

    @property
    def pair_count(self):
        return self.x.size

    def holder_values(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        return (self.Ex @ coeffs - self.Ey @ coeffs) * self.invr_s


def _graded_leaves(xlo, xhi, ylo, yhi, depth, out):
    # closed-rectangle-touches-diagonal test: x and y intervals intersect
    if ylo > xhi or xlo > yhi:
        out.append((xlo, xhi, ylo, yhi))
        return
    if depth == 0:
        return  # innermost band, discarded
    xm = 0.5 * (xlo + xhi)
    ym = 0.5 * (ylo + yhi)
    _graded_leaves(xlo, xm, ylo, ym, depth - 1, out)
    _graded_leaves(xlo, xm, ym, yhi, depth - 1, out)
    _graded_leaves(xm, xhi, ylo, ym, depth - 1, out)
    _graded_leaves(xm, xhi, ym, yhi, depth - 1, out)


def _axis_cells(basis, cfg):
    alpha, beta = basis.omega
    width = beta - alpha
    L = cfg.tail_radius_factor * width

    n_base = basis.n_interior + 1
    refine = max(1, int(np.ceil(cfg.cells_per_axis / n_base)))
    inner = np.empty(n_base * refine + 1)
    for i in range(n_base):
        inner[i * refine : (i + 1) * refine + 1] = np.linspace(
            basis.nodes[i], basis.nodes[i + 1], refine + 1
        )

    # near field: widths doubling from the inner cell width out to distance
    # min(1, L); then log-spaced tail panels out to L
    w0 = width / (n_base * refine)
    d_near = min(1.0, L)
    offsets = [0.0]
    step = w0
    while offsets[-1] < d_near:
        offsets.append(min(offsets[-1] + step, d_near))
        step *= 2.0
    if len(offsets) >= 3 and offsets[-1] - offsets[-2] < 1e-9 * w0:
        del offsets[-2]
    if L > d_near * (1.0 + 1e-12):
        j = np.arange(1, cfg.tail_panels + 1) / cfg.tail_panels
        offsets.extend(d_near * (L / d_near) ** j)
    offsets = np.asarray(offsets[1:])

    edges = np.concatenate(
        [(alpha - offsets)[::-1], inner, beta + offsets]
    )
    centers = 0.5 * (edges[:-1] + edges[1:])
    inside = (centers > alpha) & (centers < beta)
    return edges, inside, L


def build_pair_quadrature(basis, s, cfg):
    """Assemble the pair quadrature for (basis, s); deterministic and cached
    by the caller, never mutated."""
    if not 0.0 < s < 1.0:
        raise ConfigError(f"s must lie in (0,1), got {s}")
    edges, inside, L = _axis_cells(basis, cfg)
    lo = edges[:-1]
    hi = edges[1:]
    n_cells = lo.size

    rects = []
    for i in range(n_cells):
        for j in range(i, n_cells):
            if not (inside[i] or inside[j]):
                continue
            xlo, xhi, ylo, yhi = lo[i], hi[i], lo[j], hi[j]
            if i == j:
                sub = []
                _graded_leaves(xlo, xhi, ylo, yhi, cfg.grading_depth, sub)
                # keep the above-diagonal half; mirroring restores the rest
                rects.extend(r for r in sub if r[2] >= r[1])
            elif ylo <= xhi:
                # shared corner on the diagonal
                _graded_leaves(xlo, xhi, ylo, yhi, cfg.grading_depth, rects)
            else:
                rects.append((xlo, xhi, ylo, yhi))
    if not rects:
        raise ConfigError("quadrature configuration produced no cells")

    rect = np.asarray(rects)
    gx, gw = leggauss(cfg.gauss_order)
    cx = 0.5 * (rect[:, 0] + rect[:, 1])
    rx = 0.5 * (rect[:, 1] - rect[:, 0])
    cy = 0.5 * (rect[:, 2] + rect[:, 3])
    ry = 0.5 * (rect[:, 3] - rect[:, 2])

    px = (cx[:, None] + rx[:, None] * gx)[:, :, None]
    py = (cy[:, None] + ry[:, None] * gx)[:, None, :]
    ww = (rx[:, None] * gw)[:, :, None] * (ry[:, None] * gw)[:, None, :]
    px, py, ww = np.broadcast_arrays(px, py, ww)
    px = px.ravel()
    py = py.ravel()
    dist = np.abs(px - py)
    ww = ww.ravel() / dist

    # exact mirror symmetry: every point appears with its transpose
    x = np.concatenate([px, py])
    y = np.concatenate([py, px])
    w = np.concatenate([ww, ww])
    r = np.concatenate([dist, dist])
    if not (np.all(r > 0) and np.all(w > 0)):
        raise ConfigError("quadrature produced a diagonal point or bad weight")

    for arr in (x, y, w, r):
        arr.setflags(write=False)
    invr_s = r ** (-s)
    invr_s.setflags(write=False)

    inner_width = np.min(hi[inside] - lo[inside])
    meta = {
        "n_axis_cells": int(n_cells),
        "n_inner_cells": int(np.count_nonzero(inside)),
        "n_rects": int(rect.shape[0]),
        "pair_count": int(x.size),
        "omitted_band": float(inner_width * 0.5 ** cfg.grading_depth),
        "grading_depth": cfg.grading_depth,
        "gauss_order": cfg.gauss_order,
    }
    return PairQuadrature(
        x=x,
        y=y,
        w=w,
        r=r,
        invr_s=invr_s,
        Ex=basis.interpolation_matrix(x),
        Ey=basis.interpolation_matrix(y),
        s=float(s),
        tail_box=float(L),
        meta=meta,
    )


def analytic_nu_mass(x_interval, y_interval):
    """Closed form of the dnu-mass of a box with disjoint axis intervals."""
    a, b = map(float, x_interval)
    c, d = map(float, y_interval)
    if not (a < b and c < d):
        raise ConfigError("intervals must be nondegenerate")
    if a > c:
        a, b, c, d = c, d, a, b
    if c < b:
        raise ConfigError("intervals overlap; the box meets the diagonal")
    # antiderivative of log distance: psi(t) = t log t, psi(0) = 0
    return float(
        xlogy(d - a, d - a) - xlogy(d - b, d - b) - xlogy(c - a, c - a) + xlogy(c - b, c - b)
    )


def region_nu_mass(quad, x_interval, y_interval):
    """Sum of quadrature weights with (x, y) inside the given box."""
    a, b = x_interval
    c, d = y_interval
    mask = (quad.x >= a) & (quad.x <= b) & (quad.y >= c) & (quad.y <= d)
    return float(np.sum(quad.w[mask]))


def tail_energy_bound(L, p, s, source_integral):
    """Upper bound for the omitted-tail contribution of a power-p energy.

    The far field decays like |x-y|^(-sp-1); integrating it beyond radius L
    on both sides of Omega and over both pair orientations leaves at most
    (4/(p^2 s)) * L^(-sp) per unit of int |u|^p.
    """
    if L <= 0 or p <= 1 or not 0 < s < 1:
        raise ConfigError("tail bound needs L > 0, p > 1, s in (0,1)")
    return 4.0 * source_integral / (p * p * s) * L ** (-s * p)

"""Nonlocal energy, source energy, their Gateaux derivatives on the Galerkin
subspace, and the normalization radius r(u) with A(r(u)u) = 1.

All evaluations reduce over quadratures cached in an EnergyContext. Vectors
shorter than the basis act on the span of the leading basis functions, which
is how the nested subspace ladder V_1 c V_2 c ... is realized.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .errors import AssemblyError, ConfigError
from .fracgrid import (
    GalerkinBasis,
    PairQuadrature,
    QuadConfig,
    build_pair_quadrature,
)
from .kernels import Kernel, Source, symmetrize
from .orlicz import DiscreteMeasureSpace

NORMALIZE_TOL = 1e-12  # headroom under the 1e-10 contract


@dataclass(frozen=True)
class EnergyContext:
    basis: GalerkinBasis
    quad: PairQuadrature
    omega_quad: DiscreteMeasureSpace
    omega_points: np.ndarray
    E_omega: object  # sparse (len(omega_points), k)
    kernel: Kernel
    source: Source
    s: float
    # evaluation counters double as the deterministic cost report
    counters: dict = field(default_factory=dict, compare=False)

    @property
    def size(self):
        return self.basis.n_interior

    def count(self, what, n=1):
        self.counters[what] = self.counters.get(what, 0) + n


def _omega_rule(basis, order=5):
    # composite Gauss-Legendre on the basis partition; integrands are G
    # composed with piecewise-linear u, smooth inside each cell
    gn, gw = leggauss(order)
    lo = basis.nodes[:-1]
    hi = basis.nodes[1:]
    c = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    pts = (c[:, None] + r[:, None] * gn).ravel()
    wts = (r[:, None] * gw).ravel()
    return pts, wts


def build_context(kernel, source, basis, s, quad_cfg=None):
    """Assemble quadratures once and tie them to a kernel/source pair."""
    if not isinstance(kernel, Kernel):
        raise ConfigError("kernel must be a Kernel instance")
    if not isinstance(source, Source):
        raise ConfigError("source must be a Source instance")
    kernel = symmetrize(kernel)
    quad = build_pair_quadrature(basis, s, quad_cfg or QuadConfig())
    pts, wts = _omega_rule(basis)
    alpha, beta = basis.omega
    if abs(wts.sum() - (beta - alpha)) > 1e-10 * (beta - alpha):
        raise AssemblyError("interval rule does not reproduce |Omega|")
    return EnergyContext(
        basis=basis,
        quad=quad,
        omega_quad=DiscreteMeasureSpace(wts),
        omega_points=pts,
        E_omega=basis.interpolation_matrix(pts),
        kernel=kernel,
        source=source,
        s=float(s),
    )


def _embed(ctx, coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size > ctx.size or coeffs.size == 0:
        raise ValueError(
            f"coefficient vector of length {coeffs.shape} does not fit a "
            f"basis of size {ctx.size}"
        )
    if coeffs.size == ctx.size:
        return coeffs
    full = np.zeros(ctx.size)
    full[: coeffs.size] = coeffs
    return full


def energy_A(ctx, coeffs):
    """Nonlocal energy: sum of w * A(x, y, Ds u) over the pair quadrature."""
    full = _embed(ctx, coeffs)
    ds = ctx.quad.holder_values(full)
    vals = ctx.kernel.A(ctx.quad.x, ctx.quad.y, ds)
    ctx.count("energy_A")
    return float(np.dot(ctx.quad.w, vals))


def grad_A(ctx, coeffs):
    """Gateaux derivative of energy_A against each basis function."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.size
    full = _embed(ctx, coeffs)
    ds = ctx.quad.holder_values(full)
    a_val = ctx.kernel.a(ctx.quad.x, ctx.quad.y, ds)
    ray = ctx.quad.w * np.asarray(a_val, dtype=float) * ctx.quad.invr_s
    out = ctx.quad.Ex.T @ ray - ctx.quad.Ey.T @ ray
    ctx.count("grad_A")
    return out[:k]


def energy_G(ctx, coeffs):
    """Source energy: integral of G(u) over Omega."""
    full = _embed(ctx, coeffs)
    u = ctx.E_omega @ full
    ctx.count("energy_G")
    return float(np.dot(ctx.omega_quad.weights, ctx.source.G(u)))


def grad_G(ctx, coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.size
    full = _embed(ctx, coeffs)
    u = ctx.E_omega @ full
    ray = ctx.omega_quad.weights * np.asarray(ctx.source.g(u), dtype=float)
    ctx.count("grad_G")
    return (ctx.E_omega.T @ ray)[:k]


def source_pairing(ctx, coeffs):
    """int g(u) u dx, the denominator of the Rayleigh-type ratio."""
    full = _embed(ctx, coeffs)
    u = ctx.E_omega @ full
    return float(
        np.dot(ctx.omega_quad.weights, np.asarray(ctx.source.g(u)) * u)
    )


def hess_A(ctx, coeffs, fd_step=1e-7):
    """Dense second derivative of energy_A on the leading-k subspace."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.size
    full = _embed(ctx, coeffs)
    ds = ctx.quad.holder_values(full)
    if ctx.kernel.a_xi is not None:
        second = np.asarray(ctx.kernel.a_xi(ctx.quad.x, ctx.quad.y, ds), dtype=float)
    else:
        step = fd_step * (1.0 + np.abs(ds))
        second = (
            np.asarray(ctx.kernel.a(ctx.quad.x, ctx.quad.y, ds + step), dtype=float)
            - np.asarray(ctx.kernel.a(ctx.quad.x, ctx.quad.y, ds - step), dtype=float)
        ) / (2.0 * step)
    second = np.where(np.isfinite(second), second, 0.0)
    D = (ctx.quad.Ex - ctx.quad.Ey).tocsr()[:, :k]
    scale = ctx.quad.w * second * ctx.quad.invr_s ** 2
    ctx.count("hess_A")
    return np.asarray((D.T @ D.multiply(scale[:, None])).todense())


def hess_G(ctx, coeffs, fd_step=1e-7):
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.size
    full = _embed(ctx, coeffs)
    u = ctx.E_omega @ full
    if ctx.source.g_t is not None:
        second = np.asarray(ctx.source.g_t(u), dtype=float)
    else:
        step = fd_step * (1.0 + np.abs(u))
        second = (
            np.asarray(ctx.source.g(u + step), dtype=float)
            - np.asarray(ctx.source.g(u - step), dtype=float)
        ) / (2.0 * step)
    second = np.where(np.isfinite(second), second, 0.0)
    E = ctx.E_omega[:, :k]
    scale = ctx.omega_quad.weights * second
    ctx.count("hess_G")
    return np.asarray((E.T @ E.multiply(scale[:, None])).todense())


class Normalized(NamedTuple):
    r: float
    unit: np.ndarray


def normalize(ctx, coeffs):
    """Scale onto the unit level set: r > 0 with energy_A(r u) = 1.

    phi(r) = energy_A(r u) is continuous, strictly increasing, phi(0) = 0 and
    phi -> inf, so the root is unique; bracket geometrically, then Brent.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.any(coeffs):
        raise ValueError("cannot normalize the zero vector")

    def phi(r):
        return energy_A(ctx, r * coeffs) - 1.0

    lo = hi = 1.0
    v = phi(1.0)
    if v > 0:
        for _ in range(200):
            hi = lo
            lo *= 0.5
            if phi(lo) <= 0:
                break
        else:
            raise AssemblyError("normalization bracket collapsed")
    elif v < 0:
        for _ in range(200):
            lo = hi
            hi *= 2.0
            if phi(hi) >= 0:
                break
        else:
            raise AssemblyError("energy never reaches the unit level")
    r = float(brentq(phi, lo, hi, xtol=1e-300, rtol=8.9e-16, maxiter=200))
    if abs(phi(r)) > NORMALIZE_TOL:
        raise AssemblyError(
            f"normalization stalled at |A(ru)-1| = {abs(phi(r)):.2e}"
        )
    return Normalized(r=r, unit=r * coeffs)


def stiffness_matrix(ctx, k=None):
    """K[j,l] = pairing of Ds phi_j with Ds phi_l in the nu measure; the
    exact reordering of energy_A for the quadratic kernel."""
    k = ctx.size if k is None else int(k)
    D = (ctx.quad.Ex - ctx.quad.Ey).tocsr()[:, :k]
    scale = ctx.quad.w * ctx.quad.invr_s ** 2
    K = np.asarray((D.T @ D.multiply(scale[:, None])).todense())
    return 0.5 * (K + K.T)


def mass_matrix(ctx, k=None):
    """B[j,l] = integral of phi_j phi_l over Omega."""
    k = ctx.size if k is None else int(k)
    E = ctx.E_omega[:, :k]
    B = np.asarray((E.T @ E.multiply(ctx.omega_quad.weights[:, None])).todense())
    return 0.5 * (B + B.T)


def coercivity_modular(ctx, coeffs):
    """theta * modular of c*Ds(u)/2 in the pair measure; at most the energy
    by the coercivity chain, so at most 1 on the unit level set."""
    full = _embed(ctx, coeffs)
    ds = ctx.quad.holder_values(full)
    cc = ctx.kernel.coercivity_consts
    vals = ctx.kernel.young.M(0.5 * cc.c * ds)
    return cc.theta * float(np.dot(ctx.quad.w, vals))


def monotone_pairing(ctx, coeffs_u, coeffs_v):
    """Pairing of a(Ds u) - a(Ds v) against Ds u - Ds v; nonnegative for
    monotone kernels, recorded along solver iterates."""
    du = ctx.quad.holder_values(_embed(ctx, coeffs_u))
    dv = ctx.quad.holder_values(_embed(ctx, coeffs_v))
    au = np.asarray(ctx.kernel.a(ctx.quad.x, ctx.quad.y, du), dtype=float)
    av = np.asarray(ctx.kernel.a(ctx.quad.x, ctx.quad.y, dv), dtype=float)
    return float(np.dot(ctx.quad.w, (au - av) * (du - dv)))

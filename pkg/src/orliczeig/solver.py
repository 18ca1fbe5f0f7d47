"""Eigenpair computation on the unit energy level set.

The first pair maximizes the source energy over {A(u) = 1} by projected
gradient ascent with a normalization retraction. Higher pairs add a
mass-pairing deflation penalty, then release it and polish the true
stationarity system with a bordered Newton step; they are approximations of
the minimax levels and are labeled candidates. The quadratic case has a
dense generalized-eigenproblem oracle for cross-validation.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy.stats import qmc

from .errors import AssemblyError, ConfigError, NonconvergenceError
from .energy import (
    energy_A,
    energy_G,
    grad_A,
    grad_G,
    hess_A,
    hess_G,
    mass_matrix,
    monotone_pairing,
    normalize,
    source_pairing,
    stiffness_matrix,
)

TIE_TOL = 1e-10
CLUSTER_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 300
    step0: float = 1.0
    backtrack_ratio: float = 0.5
    armijo_slope: float = 1e-4
    grad_tol: float = 1e-8
    n_restarts: int = 6
    rng_seed: int = 0
    deflation_penalty: float = 100.0
    # plumbing beyond the contract surface
    ascent_tol: float = 1e-5
    max_backtracks: int = 40
    newton_iters: int = 40

    def __post_init__(self):
        for name in ("max_iter", "step0", "grad_tol", "n_restarts",
                     "deflation_penalty", "armijo_slope", "ascent_tol",
                     "max_backtracks", "newton_iters"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.backtrack_ratio < 1.0:
            raise ConfigError("backtrack_ratio must lie in (0, 1)")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be nonnegative")


@dataclass
class EigenpairResult:
    index_i: int
    basis_k: int
    lambda_: float
    coeffs: np.ndarray
    g_value: float
    a_value: float
    residual: float
    iterations: int
    converged: bool
    restart: int = 0
    label: str = "ground"
    cluster: bool = False
    flags: list = field(default_factory=list)
    mc_min: float = np.inf  # monotone-operator certificate along iterates


def _ratio_lambda(ctx, u, gA, gG):
    denom = float(np.dot(gG, u))
    if denom == 0.0:
        return np.inf
    return float(np.dot(gA, u)) / denom


def _residual(gA, gG, lam):
    nA = float(np.linalg.norm(gA))
    if nA == 0.0:
        return np.inf
    return float(np.linalg.norm(gA - lam * gG)) / nA


def _initial_points(k, cfg, count):
    engine = qmc.Sobol(d=k, scramble=True, seed=cfg.rng_seed)
    m = 1
    while 2 ** m < count:
        m += 1
    pts = 2.0 * engine.random_base2(m)[:count] - 1.0
    for r in range(count):
        if np.max(np.abs(pts[r])) < 1e-12:
            pts[r] = 0.0
            pts[r, r % k] = 1.0
    return pts


def _deflated_value(ctx, u, mu, prior_Bu):
    val = energy_G(ctx, u)
    for Bu in prior_Bu:
        val -= mu * float(np.dot(u, Bu)) ** 2
    return val


def _deflated_grad(ctx, u, mu, prior_Bu, gG):
    gP = np.array(gG, dtype=float)
    for Bu in prior_Bu:
        gP -= 2.0 * mu * float(np.dot(u, Bu)) * Bu
    return gP


def _ascend(ctx, u0, cfg, prior_Bu):
    """Projected ascent of the (possibly deflated) source energy on the unit
    level set; returns the loose iterate for Newton to finish.

    Directions are projected onto the joint tangent of the level set and the
    deflation constraints; the scaling retraction preserves the latter
    exactly, so the penalty term stays inert along the sweep and only guards
    against numerical drift."""
    mu = cfg.deflation_penalty if prior_Bu else 0.0
    u0 = np.array(u0, dtype=float)
    if prior_Bu:
        V = np.column_stack(prior_Bu)
        beta, *_ = np.linalg.lstsq(V, u0, rcond=None)
        u0 = u0 - V @ beta
        if not np.any(u0):
            raise ValueError("start lies in the deflated span")
    u = normalize(ctx, u0).unit
    mc_min = np.inf
    val = _deflated_value(ctx, u, mu, prior_Bu)
    step = cfg.step0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        gA = grad_A(ctx, u)
        gG = grad_G(ctx, u)
        gP = _deflated_grad(ctx, u, mu, prior_Bu, gG)
        if not np.any(gA):
            break
        normals = np.column_stack([gA] + prior_Bu)
        alpha, *_ = np.linalg.lstsq(normals, gP, rcond=None)
        d = gP - normals @ alpha
        nd = float(np.linalg.norm(d))
        if nd <= cfg.ascent_tol * (1.0 + float(np.linalg.norm(gP))):
            break
        direction = d / nd
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = normalize(ctx, u + step * direction).unit
            cand_val = _deflated_value(ctx, cand, mu, prior_Bu)
            if cand_val >= val + cfg.armijo_slope * step * nd:
                mc_min = min(mc_min, monotone_pairing(ctx, u, cand))
                u, val = cand, cand_val
                accepted = True
                break
            step *= cfg.backtrack_ratio
        if not accepted:
            break
        # warm-start the next search from the accepted step
        step = min(step / cfg.backtrack_ratio, 64.0 * cfg.step0)
    return u, it, mc_min


def _newton_polish(ctx, u, cfg):
    """Damped Newton on the bordered system {grad_A - lambda grad_G = 0,
    A(u) = 1}; falls back to the input if the step degrades the residual."""
    k = u.size
    u = np.array(u, dtype=float)
    gA = grad_A(ctx, u)
    gG = grad_G(ctx, u)
    lam = _ratio_lambda(ctx, u, gA, gG)
    mc_min = np.inf

    def merit(uu, ll, ga, gg):
        top = ga - ll * gg
        return float(np.linalg.norm(top)) + abs(energy_A(ctx, uu) - 1.0)

    best = (np.array(u), lam, merit(u, lam, gA, gG))
    for _ in range(cfg.newton_iters):
        top = gA - lam * gG
        con = energy_A(ctx, u) - 1.0
        if np.linalg.norm(top) <= 0.1 * cfg.grad_tol * np.linalg.norm(gA) and abs(con) <= 1e-12:
            break
        J = np.zeros((k + 1, k + 1))
        J[:k, :k] = hess_A(ctx, u) - lam * hess_G(ctx, u)
        J[:k, k] = -gG
        J[k, :k] = gA
        rhs = np.concatenate([-top, [-con]])
        try:
            delta = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(delta)):
            break
        t = 1.0
        improved = False
        for _ in range(12):
            u_try = u + t * delta[:k]
            lam_try = lam + t * delta[k]
            if np.any(u_try != 0.0):
                ga = grad_A(ctx, u_try)
                gg = grad_G(ctx, u_try)
                val = merit(u_try, lam_try, ga, gg)
                if val < best[2]:
                    mc_min = min(mc_min, monotone_pairing(ctx, u, u_try))
                    u, lam, gA, gG = u_try, lam_try, ga, gg
                    best = (np.array(u), lam, val)
                    improved = True
                    break
            t *= 0.5
        if not improved:
            break
    return best[0], mc_min


def _finish(ctx, u, k, index_i, restart, iterations, mc_min, cfg):
    gA = grad_A(ctx, u)
    gG = grad_G(ctx, u)
    lam = _ratio_lambda(ctx, u, gA, gG)
    res = _residual(gA, gG, lam)
    aval = energy_A(ctx, u)
    converged = bool(res <= cfg.grad_tol and abs(aval - 1.0) <= 1e-8)
    return EigenpairResult(
        index_i=index_i,
        basis_k=k,
        lambda_=lam,
        coeffs=np.array(u),
        g_value=energy_G(ctx, u),
        a_value=aval,
        residual=res,
        iterations=iterations,
        converged=converged,
        restart=restart,
        label="ground" if index_i == 1 else "candidate",
        mc_min=mc_min,
    )


def _better(a, b):
    """Tie-break: larger g_value, then smaller residual, then lower restart."""
    if a is None:
        return b
    if b.g_value > a.g_value + TIE_TOL:
        return b
    if abs(b.g_value - a.g_value) <= TIE_TOL:
        if b.residual < a.residual or (
            b.residual == a.residual and b.restart < a.restart
        ):
            return b
    return a


def _solve_index(ctx, k, index_i, cfg, prior, points):
    prior_Bu = [p for p in prior]
    best_conv = None
    best_any = None
    for r in range(cfg.n_restarts):
        u0 = points[r]
        try:
            u, iters, mc1 = _ascend(ctx, u0, cfg, prior_Bu)
            u, mc2 = _newton_polish(ctx, u, cfg)
        except (AssemblyError, ValueError):
            continue
        result = _finish(
            ctx, u, k, index_i, r, iters, min(mc1, mc2), cfg
        )
        best_any = _better(best_any, result)
        if result.converged:
            best_conv = _better(best_conv, result)
    if best_conv is None:
        raise NonconvergenceError(
            f"no restart converged for pair {index_i} at k={k}",
            best=best_any,
        )
    return best_conv


def solve_first(ctx, k, cfg=None):
    """Maximize the source energy on the unit level set of the leading-k
    subspace; best over seeded low-discrepancy restarts."""
    cfg = cfg or SolverConfig()
    k = int(k)
    if not 1 <= k <= ctx.size:
        raise ConfigError(f"k must lie in 1..{ctx.size}, got {k}")
    points = _initial_points(k, cfg, cfg.n_restarts)
    return _solve_index(ctx, k, 1, cfg, [], points)


def solve_sequence(ctx, k, i_max, cfg=None):
    """First i_max pairs: ground pair plus deflated candidates, ordered as
    computed; ordering violations are flagged, never reordered."""
    cfg = cfg or SolverConfig()
    k = int(k)
    i_max = int(i_max)
    if not 1 <= k <= ctx.size:
        raise ConfigError(f"k must lie in 1..{ctx.size}, got {k}")
    if not 1 <= i_max <= k:
        raise ConfigError(f"i_max must lie in 1..k={k}, got {i_max}")
    B = mass_matrix(ctx, k)
    all_points = _initial_points(k, cfg, cfg.n_restarts * i_max)
    results: List[EigenpairResult] = []
    prior = []
    for i in range(1, i_max + 1):
        points = all_points[(i - 1) * cfg.n_restarts : i * cfg.n_restarts]
        try:
            res = _solve_index(ctx, k, i, cfg, prior, points)
        except NonconvergenceError as exc:
            if exc.best is not None:
                results.append(exc.best)
            break
        results.append(res)
        prior.append(B @ res.coeffs)
    _annotate_sequence(results)
    return results


def _annotate_sequence(results):
    """Flag ordering violations and near-degenerate neighbors in place;
    the computed order is never changed."""
    for i in range(1, len(results)):
        a, b = results[i - 1], results[i]
        if b.lambda_ < a.lambda_ - 1e-8 * max(1.0, abs(a.lambda_)):
            b.flags.append("lambda_order")
        if b.g_value > a.g_value + 1e-8 * max(1.0, abs(a.g_value)):
            b.flags.append("g_order")
        if abs(b.lambda_ - a.lambda_) < CLUSTER_TOL * abs(a.lambda_):
            a.cluster = b.cluster = True
    return results


def _require_linear(ctx):
    kname = ctx.kernel.name
    linear_kernel = kname.startswith("plap:2") or kname.startswith(
        "weighted-plap:2"
    )
    if not (linear_kernel and ctx.kernel.p_hint == 2.0):
        raise ConfigError(
            f"linear oracle needs a quadratic kernel, got {kname!r}"
        )
    if not ctx.source.name.startswith("power:2"):
        raise ConfigError(
            f"linear oracle needs the power:2 source, got {ctx.source.name!r}"
        )


def linear_oracle(ctx, k):
    """Dense generalized eigenproblem K u = lambda B u for the quadratic
    case; the brute-force cross-check for the iterative path."""
    _require_linear(ctx)
    k = int(k)
    if not 1 <= k <= ctx.size:
        raise ConfigError(f"k must lie in 1..{ctx.size}, got {k}")
    # kernel weight at each quadrature pair: a(x, y, 1) for a linear-in-xi a
    coef = np.broadcast_to(
        np.asarray(
            ctx.kernel.a(ctx.quad.x, ctx.quad.y, np.ones_like(ctx.quad.x)),
            dtype=float,
        ),
        ctx.quad.x.shape,
    )
    D = (ctx.quad.Ex - ctx.quad.Ey).tocsr()[:, :k]
    scale = ctx.quad.w * coef * ctx.quad.invr_s ** 2
    K = np.asarray((D.T @ D.multiply(scale[:, None])).todense())
    K = 0.5 * (K + K.T)
    B = mass_matrix(ctx, k)
    if np.max(np.abs(K - K.T)) > 1e-12 * np.max(np.abs(K)):
        raise AssemblyError("stiffness assembly lost symmetry")
    try:
        vals, vecs = scipy.linalg.eigh(K, B)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise AssemblyError(f"mass matrix is not positive definite: {exc}") from exc
    if vals[0] <= 0:
        raise AssemblyError("nonpositive generalized eigenvalue; broken quadrature")
    # rescale so the quadratic energy is 1: u' K u / 2 = 1
    out = []
    for i in range(k):
        v = vecs[:, i]
        u = v * np.sqrt(2.0 / float(v @ K @ v))
        out.append((float(vals[i]), u))
    return out


@dataclass(frozen=True)
class ConvergenceReport:
    k_list: tuple
    i_max: int
    results: dict
    g_table: np.ndarray
    lambda_table: np.ndarray
    oracle_lambda1: Optional[dict]
    verdicts: dict


def k_study(ctx, cfg, k_list, i_max):
    """Run solve_sequence per k and tabulate the level surrogates g(u_i)
    and eigenvalues across the nested subspaces."""
    cfg = cfg or SolverConfig()
    k_list = tuple(int(k) for k in k_list)
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ConfigError("k_list must be strictly increasing")
    if k_list[-1] > ctx.size:
        raise ConfigError(
            f"largest k {k_list[-1]} exceeds basis size {ctx.size}"
        )
    results = {}
    for k in k_list:
        results[k] = solve_sequence(ctx, k, min(i_max, k), cfg)

    n = len(k_list)
    g_table = np.full((i_max, n), np.nan)
    lambda_table = np.full((i_max, n), np.nan)
    for j, k in enumerate(k_list):
        for res in results[k]:
            if res.converged:
                g_table[res.index_i - 1, j] = res.g_value
                lambda_table[res.index_i - 1, j] = res.lambda_

    oracle = None
    try:
        _require_linear(ctx)
    except ConfigError:
        pass
    else:
        oracle = {k: linear_oracle(ctx, k)[0][0] for k in k_list}

    verdicts = {}
    if n >= 2:
        g1 = g_table[0]
        l1 = lambda_table[0]
        ok = np.all(np.isfinite(g1))
        verdicts["g1_nondecreasing_in_k"] = bool(
            ok and np.all(np.diff(g1) >= -1e-8 * (1.0 + np.abs(g1[:-1])))
        )
        verdicts["lambda1_nonincreasing_in_k"] = bool(
            np.all(np.isfinite(l1))
            and np.all(np.diff(l1) <= 1e-8 * (1.0 + np.abs(l1[:-1])))
        )
        if oracle is not None:
            verdicts["lambda1_matches_oracle"] = bool(
                np.all(np.isfinite(l1))
                and all(
                    abs(l1[j] - oracle[k]) <= 1e-3 * oracle[k]
                    for j, k in enumerate(k_list)
                )
            )
    return ConvergenceReport(
        k_list=k_list,
        i_max=i_max,
        results=results,
        g_table=g_table,
        lambda_table=lambda_table,
        oracle_lambda1=oracle,
        verdicts=verdicts,
    )

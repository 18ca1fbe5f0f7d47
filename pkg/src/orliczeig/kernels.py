"""Catalog of anisotropic integrands a(x, y, xi) with closed-form primitives,
source nonlinearities g with primitives G, and sampled validators for the
structure conditions (oddness, sign, growth, monotonicity, coercivity).

The conditions are universally quantified, so the validators sample them on a
seeded quasi-random cloud: catalog entries carry analytic constants, the
validators guard user-supplied expressions. Kernel evaluation is vectorized
over numpy arrays; everything here is pure and immutable.
"""

import ast
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.stats import qmc

from .errors import ConfigError
from .young import YoungFunction, plog_young, power_young

# 64-point rule on (0,1); enough for machine accuracy on the smooth
# primitives integrated below
_GN, _GW = leggauss(64)
_GN01 = 0.5 * (_GN + 1.0)
_GW01 = 0.5 * _GW


def _odd_power(xi, e):
    """sign(xi)|xi|^e with the removable 0^e ambiguity resolved to 0."""
    axi = np.abs(np.asarray(xi, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(axi > 0, axi ** e, 0.0)
    return np.sign(xi) * mag


def _even_power(xi, e):
    axi = np.abs(np.asarray(xi, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        if e > 0:
            return np.where(axi > 0, axi ** e, 0.0)
        if e == 0:
            return np.ones_like(axi)
        return np.where(axi > 0, axi ** e, np.inf)


@dataclass(frozen=True)
class GrowthConstants:
    """|a(x,y,xi)| <= d(x,y) + b * inv(conj M)(M(c xi))."""

    b: float
    c: float
    d_fn: Optional[Callable] = None  # None means d identically zero


@dataclass(frozen=True)
class CoercivityConstants:
    """a(x,y,xi) xi >= theta * M(c xi)."""

    theta: float
    c: float


@dataclass(frozen=True)
class Kernel:
    name: str
    a: Callable
    A: Callable
    young: YoungFunction
    growth_consts: GrowthConstants
    coercivity_consts: CoercivityConstants
    symmetric: bool = True
    a_xi: Optional[Callable] = None  # derivative in xi, used by Newton polish
    p_hint: float = 2.0  # far-field decay exponent proxy for tail reporting


@dataclass(frozen=True)
class SourceGrowthConstants:
    """|g(t)| <= e(x) + a1 * inv(conj M)(a2 * M(a3 t))."""

    a1: float
    a2: float
    a3: float
    e_fn: Optional[Callable] = None


@dataclass(frozen=True)
class Source:
    name: str
    g: Callable
    G: Callable
    young: YoungFunction
    growth_consts: SourceGrowthConstants
    g_t: Optional[Callable] = None


# -- catalog ---------------------------------------------------------------

def _parse_positive(token, what):
    try:
        val = float(token)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} from {token!r}") from exc
    if not np.isfinite(val):
        raise ConfigError(f"{what} must be finite")
    return val


def _plap_growth_b(p):
    # |xi|^(p-1) = (p/q)^(1/q) * inv(conj M)(M(xi)) for M = power:p
    q = p / (p - 1.0)
    return (p / q) ** (1.0 / q)


def _plap_kernel(p, name="plap"):
    Y = power_young(p)

    def a(x, y, xi):
        return _odd_power(xi, p - 1.0)

    def A(x, y, xi):
        return np.abs(np.asarray(xi, dtype=float)) ** p / p

    def a_xi(x, y, xi):
        return (p - 1.0) * _even_power(xi, p - 2.0)

    return Kernel(
        name=f"{name}:{p:g}",
        a=a,
        A=A,
        young=Y,
        growth_consts=GrowthConstants(b=_plap_growth_b(p), c=1.0),
        coercivity_consts=CoercivityConstants(theta=p, c=1.0),
        symmetric=True,
        a_xi=a_xi,
        p_hint=p,
    )


def _mlap_plog_kernel(p):
    Y = plog_young(p)

    def a(x, y, xi):
        return Y.m(xi)

    def A(x, y, xi):
        return Y.M(xi)

    def a_xi(x, y, xi):
        t = np.abs(np.asarray(xi, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            lead = np.where(
                t > 0, p * (p - 1.0) * t ** (p - 2.0) * np.log1p(t), 0.0
            )
        return lead + 2.0 * p * t ** (p - 1.0) / (1.0 + t) - t ** p / (1.0 + t) ** 2

    # m(t) <= inv(conj M)(M(2t)): t·m(t) <= M(2t) pushes through conj M,
    # so growth holds with d = 0, b = 1, c = 2.
    # a(t)·t = p·M(t) + t^(p+1)/(1+t) >= p·M(t) gives theta = p, c = 1.
    return Kernel(
        name=f"mlap:plog:{p:g}",
        a=a,
        A=A,
        young=Y,
        growth_consts=GrowthConstants(b=1.0, c=2.0),
        coercivity_consts=CoercivityConstants(theta=p, c=1.0),
        symmetric=True,
        a_xi=a_xi,
        p_hint=p + 1.0,
    )


_DEFAULT_WEIGHT = "1 + 0.5*sin(x + y)"


def _weighted_plap_kernel(p, weight_src):
    Y = power_young(p)
    w = compile_expression(weight_src, ("x", "y"))

    # box covering every pair the quadrature can produce at desk scale
    grid = np.linspace(-10.0, 10.0, 241)
    gx, gy = np.meshgrid(grid, grid)
    wv = np.broadcast_to(np.asarray(w(x=gx, y=gy), dtype=float), gx.shape)
    if not np.all(np.isfinite(wv)):
        raise ConfigError("weight expression is not finite on the sample box")
    # the documented constants must bound the true extrema, which the grid
    # only approaches; pad the sampled values by half a percent
    w_min = float(wv.min()) * 0.995
    w_max = float(wv.max()) * 1.005
    if w_min <= 0:
        raise ConfigError(
            f"weight must stay positive; sampled minimum {w_min:g}"
        )
    sym = bool(np.allclose(wv, wv.T, rtol=0, atol=1e-12 * (1 + w_max)))

    def a(x, y, xi):
        return w(x=x, y=y) * _odd_power(xi, p - 1.0)

    def A(x, y, xi):
        return w(x=x, y=y) * np.abs(np.asarray(xi, dtype=float)) ** p / p

    def a_xi(x, y, xi):
        return w(x=x, y=y) * (p - 1.0) * _even_power(xi, p - 2.0)

    return Kernel(
        name=f"weighted-plap:{p:g}:{weight_src}",
        a=a,
        A=A,
        young=Y,
        growth_consts=GrowthConstants(b=w_max * _plap_growth_b(p), c=1.0),
        coercivity_consts=CoercivityConstants(theta=p * w_min, c=1.0),
        symmetric=sym,
        a_xi=a_xi,
        p_hint=p,
    )


def catalog_kernel(name, params=None):
    """Build a catalog kernel from its spec string.

    Recognized: "plap:p", "mlap:plog:p", "weighted-plap:p[:expr]" where expr
    is a weight over (x, y) in the expression grammar. ``params`` may supply
    {"weight": expr} instead of embedding it in the name.
    """
    params = dict(params or {})
    parts = str(name).split(":", 2)
    family = parts[0]
    if family == "plap":
        if len(parts) != 2:
            raise ConfigError(f"expected plap:p, got {name!r}")
        p = _parse_positive(parts[1], "exponent")
        if p <= 1:
            raise ConfigError(f"plap exponent must exceed 1, got {p:g}")
        return _plap_kernel(p)
    if family == "mlap":
        if len(parts) != 3 or parts[1] != "plog":
            raise ConfigError(f"expected mlap:plog:p, got {name!r}")
        p = _parse_positive(parts[2], "exponent")
        if p < 1:
            raise ConfigError(f"mlap:plog exponent must be at least 1, got {p:g}")
        return _mlap_plog_kernel(p)
    if family == "weighted-plap":
        if len(parts) < 2:
            raise ConfigError(f"expected weighted-plap:p, got {name!r}")
        p = _parse_positive(parts[1], "exponent")
        if p <= 1:
            raise ConfigError(f"weighted-plap exponent must exceed 1, got {p:g}")
        weight = parts[2] if len(parts) == 3 else params.get("weight", _DEFAULT_WEIGHT)
        return _weighted_plap_kernel(p, weight)
    raise ConfigError(f"unknown kernel {name!r}")


def symmetrize(K):
    """Average a over the (x, y) swap; a no-op for symmetric kernels."""
    if K.symmetric:
        return K

    def a(x, y, xi):
        return 0.5 * (K.a(x, y, xi) + K.a(y, x, xi))

    def A(x, y, xi):
        return 0.5 * (K.A(x, y, xi) + K.A(y, x, xi))

    a_xi = None
    if K.a_xi is not None:
        base = K.a_xi

        def a_xi(x, y, xi):
            return 0.5 * (base(x, y, xi) + base(y, x, xi))

    return Kernel(
        name=f"sym({K.name})",
        a=a,
        A=A,
        young=K.young,
        growth_consts=K.growth_consts,
        coercivity_consts=K.coercivity_consts,
        symmetric=True,
        a_xi=a_xi,
        p_hint=K.p_hint,
    )


def catalog_source(name):
    """Build a source nonlinearity: "power:p" or "atan-power:p"."""
    parts = str(name).split(":")
    family = parts[0]
    if family == "power":
        if len(parts) != 2:
            raise ConfigError(f"expected power:p, got {name!r}")
        p = _parse_positive(parts[1], "exponent")
        if p <= 1:
            raise ConfigError(f"power source exponent must exceed 1, got {p:g}")
        Y = power_young(p)

        def g(t):
            return _odd_power(t, p - 1.0)

        def G(t):
            return np.abs(np.asarray(t, dtype=float)) ** p / p

        def g_t(t):
            return (p - 1.0) * _even_power(t, p - 2.0)

        return Source(
            name=f"power:{p:g}",
            g=g,
            G=G,
            young=Y,
            growth_consts=SourceGrowthConstants(a1=_plap_growth_b(p), a2=1.0, a3=1.0),
            g_t=g_t,
        )
    if family == "atan-power":
        if len(parts) != 2:
            raise ConfigError(f"expected atan-power:p, got {name!r}")
        p = _parse_positive(parts[1], "exponent")
        if p <= 1:
            raise ConfigError(f"atan-power exponent must exceed 1, got {p:g}")
        Y = power_young(p)

        def g(t):
            t = np.asarray(t, dtype=float)
            return np.arctan(np.abs(t)) * _odd_power(t, p - 1.0)

        def G(t):
            # int_0^|t| arctan(tau) tau^(p-1) dtau, scaled 64-point Gauss;
            # the integrand is analytic so this is exact to rounding
            at = np.abs(np.asarray(t, dtype=float))
            tau = at[..., None] * _GN01
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(
                    tau > 0, np.arctan(tau) * tau ** (p - 1.0), 0.0
                )
            out = at * np.sum(_GW01 * vals, axis=-1)
            return out if out.ndim else float(out)

        def g_t(t):
            at = np.abs(np.asarray(t, dtype=float))
            return _even_power(at, p - 1.0) / (1.0 + at * at) + (
                p - 1.0
            ) * np.arctan(at) * _even_power(at, p - 2.0)

        return Source(
            name=f"atan-power:{p:g}",
            g=g,
            G=G,
            young=Y,
            growth_consts=SourceGrowthConstants(
                a1=0.5 * np.pi * _plap_growth_b(p), a2=1.0, a3=1.0
            ),
            g_t=g_t,
        )
    raise ConfigError(f"unknown source {name!r}")


# -- user-supplied kernels -------------------------------------------------

_ALLOWED_FUNCS = {
    "abs": np.abs,
    "pow": np.power,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log1p": np.log1p,
    "sign": np.sign,
}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.UAdd,
    ast.USub,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
)


def compile_expression(src, variables):
    """Compile an arithmetic expression over the named variables.

    Grammar: numbers, the variables, + - * / ** with unary sign, and calls
    to abs, pow, sin, cos, exp, log1p, sign. Anything else is rejected.
    Returns a keyword-argument callable mapping arrays to arrays.
    """
    try:
        tree = ast.parse(str(src), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {src!r}: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(
                f"expression {src!r} uses disallowed syntax "
                f"{type(node).__name__}"
            )
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ConfigError(f"expression {src!r} calls an unknown function")
            if node.keywords:
                raise ConfigError("keyword arguments are not part of the grammar")
        elif isinstance(node, ast.Name):
            if node.id not in variables and node.id not in _ALLOWED_FUNCS:
                raise ConfigError(
                    f"unknown name {node.id!r} in expression {src!r}; "
                    f"allowed variables: {', '.join(variables)}"
                )
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigError("only numeric literals are allowed")
    code = compile(tree, "<expression>", "eval")

    def fn(**kw):
        scope = dict(_ALLOWED_FUNCS)
        scope.update(kw)
        return eval(code, {"__builtins__": {}}, scope)

    return fn


def expression_kernel(a_src, young, name=None, A_src=None,
                      growth_consts=None, coercivity_consts=None,
                      symmetric=True):
    """Kernel from expression strings over (x, y, xi).

    Without ``A_src`` the primitive is integrated adaptively per point,
    which is accurate but slow; supply a closed form for anything hot.
    Constants default to nominal values so validate_conditions can judge
    the inequalities as stated.
    """
    a_fn = compile_expression(a_src, ("x", "y", "xi"))

    def a(x, y, xi):
        x, y, xi = np.broadcast_arrays(
            np.asarray(x, dtype=float),
            np.asarray(y, dtype=float),
            np.asarray(xi, dtype=float),
        )
        return np.broadcast_to(a_fn(x=x, y=y, xi=xi), xi.shape)

    if A_src is not None:
        A_fn = compile_expression(A_src, ("x", "y", "xi"))

        def A(x, y, xi):
            x, y, xi = np.broadcast_arrays(
                np.asarray(x, dtype=float),
                np.asarray(y, dtype=float),
                np.asarray(xi, dtype=float),
            )
            return np.broadcast_to(A_fn(x=x, y=y, xi=xi), xi.shape)

    else:
        def A(x, y, xi):
            x, y, xi = np.broadcast_arrays(
                np.asarray(x, dtype=float),
                np.asarray(y, dtype=float),
                np.asarray(xi, dtype=float),
            )
            flat = np.empty(xi.size)
            xf, yf, zf = x.ravel(), y.ravel(), xi.ravel()
            for i in range(flat.size):
                flat[i] = quad(
                    lambda t: float(a_fn(x=xf[i], y=yf[i], xi=t)), 0.0, zf[i],
                    limit=200,
                )[0]
            return flat.reshape(xi.shape)

    return Kernel(
        name=name or f"expr:{a_src}",
        a=a,
        A=A,
        young=young,
        growth_consts=growth_consts or GrowthConstants(b=1.0, c=2.0),
        coercivity_consts=coercivity_consts or CoercivityConstants(theta=1.0, c=1.0),
        symmetric=symmetric,
        a_xi=None,
        p_hint=2.0,
    )


# -- validators ------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    passed: bool
    worst_margin: float
    at: tuple


@dataclass(frozen=True)
class ValidationReport:
    kernel: str
    n_samples: int
    rng_seed: int
    checks: dict

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks.values())

    @property
    def failed(self):
        return sorted(n for n, c in self.checks.items() if not c.passed)

    def summary(self):
        lines = [f"{self.kernel}: {self.n_samples} samples, seed {self.rng_seed}"]
        for cname in sorted(self.checks):
            c = self.checks[cname]
            verdict = "pass" if c.passed else "FAIL"
            lines.append(f"  {cname:<16} {verdict}  worst margin {c.worst_margin:+.3e}")
        return "\n".join(lines)


def _sample_cloud(n, rng_seed):
    # Sobol wants power-of-two draws; generate the next power and slice.
    engine = qmc.Sobol(d=4, scramble=True, seed=rng_seed)
    m = max(4, int(np.ceil(np.log2(max(n, 2)))))
    u = engine.random_base2(m)[:n]
    x = 6.0 * u[:, 0] - 3.0
    y = 6.0 * u[:, 1] - 3.0
    xi = 8.0 * u[:, 2] - 4.0
    xi2 = 8.0 * u[:, 3] - 4.0
    # pin down the magnitudes quasi-random points rarely hit
    extra = np.array([1e-6, -1e-6, 1e-3, -1e-3, 1.0, -1.0, 4.0, -4.0])
    x = np.concatenate([x, np.full(extra.size, 0.3)])
    y = np.concatenate([y, np.full(extra.size, -1.2)])
    xi = np.concatenate([xi, extra])
    xi2 = np.concatenate([xi2, -0.5 * extra])
    return x, y, xi, xi2


def validate_conditions(K, samples=100_000, rng_seed=0):
    """Check oddness, sign, growth, monotonicity, coercivity and the
    primitive bound A <= xi*a on a seeded quasi-random cloud."""
    if samples < 1:
        raise ConfigError("need at least one sample")
    x, y, xi, xi2 = _sample_cloud(samples, rng_seed)
    a_val = np.asarray(K.a(x, y, xi), dtype=float)
    a_neg = np.asarray(K.a(x, y, -xi), dtype=float)
    a_val2 = np.asarray(K.a(x, y, xi2), dtype=float)
    A_val = np.asarray(K.A(x, y, xi), dtype=float)
    scale = 1.0 + float(np.max(np.abs(a_val)))

    checks = {}

    def record(cname, margins, tol, idx_vars):
        worst = int(np.argmin(margins))
        checks[cname] = CheckResult(
            passed=bool(margins[worst] >= -tol),
            worst_margin=float(margins[worst]),
            at=tuple(float(v[worst]) for v in idx_vars),
        )

    # oddness: a(x,y,-xi) = -a(x,y,xi), exact for catalog formulas
    odd_gap = np.abs(a_val + a_neg) / (1.0 + np.abs(a_val))
    record("oddness", -odd_gap, 1e-9, (x, y, xi))

    # zero at zero, for both a and A
    a0 = np.abs(np.asarray(K.a(x, y, np.zeros_like(x)), dtype=float))
    A0 = np.abs(np.asarray(K.A(x, y, np.zeros_like(x)), dtype=float))
    record("zero_at_zero", -(a0 + A0), 1e-12, (x, y, np.zeros_like(x)))

    # sign: a(x,y,xi)·xi > 0 off xi = 0
    live = np.abs(xi) > 1e-8
    sign_val = np.where(live, a_val * xi, np.inf)
    record("sign", sign_val, 0.0, (x, y, xi))

    # growth: |a| <= d(x,y) + b * inv(conj M)(M(c·xi))
    gc = K.growth_consts
    d_term = gc.d_fn(x, y) if gc.d_fn is not None else 0.0
    bound = d_term + gc.b * np.asarray(
        K.young.conjugate_inv_M(np.asarray(K.young.M(gc.c * xi), dtype=float)),
        dtype=float,
    )
    record("growth", bound - np.abs(a_val), 1e-9 * scale, (x, y, xi))

    # monotonicity: (a(xi) - a(xi'))(xi - xi') >= 0
    mono = (a_val - a_val2) * (xi - xi2)
    record("monotonicity", mono, 1e-12 * scale, (x, y, xi, xi2))

    # coercivity: a(xi)·xi >= theta * M(c·xi)
    cc = K.coercivity_consts
    coer = a_val * xi - cc.theta * np.asarray(K.young.M(cc.c * xi), dtype=float)
    record("coercivity", coer, 1e-9 * scale, (x, y, xi))

    # primitive bound: 0 <= A(xi) <= xi·a(xi)
    record("primitive_bound", np.minimum(xi * a_val - A_val, A_val),
           1e-9 * scale, (x, y, xi))

    return ValidationReport(
        kernel=K.name,
        n_samples=int(x.size),
        rng_seed=int(rng_seed),
        checks=checks,
    )

"""Young functions: increasing densities, their primitives, convex conjugates,
inverses and a sampled doubling-condition diagnostic.

A Young function here is the even convex primitive M(t) = int_0^|t| m(s) ds of
an increasing density m with m(0) = 0 and m(t) -> inf. The convex conjugate
pairs with M in Young's inequality tau*t <= M(t) + conj(M)(tau), with equality
exactly at tau = sign(t) m(|t|).
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, UnboundedConjugateError

# Scalar root-finding tolerances used by every inverse in this module.
# Downstream norm computations need about 1e-8, so these leave headroom.
BISECT_RTOL = 1e-10
BISECT_ATOL = 1e-14
BISECT_MAX_ITER = 200

_BRACKET_CAP = 1e30


def _check_finite(t, what="argument"):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError(f"non-finite {what} passed to Young-function evaluation")
    return t


def _bisect_increasing(f, target, what="level"):
    """Solve f(t) = target for t >= 0 where f is increasing with f(0) = 0.

    Vectorized over ``target``. The bracket grows geometrically from 1; if f
    never reaches the target before the bracket cap the transform is
    unbounded at that level.
    """
    target = np.asarray(target, dtype=float)
    scalar = target.ndim == 0
    y = np.atleast_1d(target).astype(float)
    if np.any(y < 0):
        raise ValueError("inverse evaluation requires a nonnegative level")

    t = np.zeros_like(y)
    active = y > 0
    if not np.any(active):
        return float(t[0]) if scalar else t

    hi = np.ones_like(y)
    for _ in range(140):
        need = active & (f(hi) < y)
        if not np.any(need):
            break
        hi[need] *= 2.0
        if np.any(hi[need] > _BRACKET_CAP):
            raise UnboundedConjugateError(
                f"density/primitive stays below requested {what}; "
                "conjugate transform is unbounded here"
            )
    lo = np.zeros_like(y)

    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        # Record the midpoint before the bracket moves past it; the converged
        # answer is the midpoint that met the tolerance, not the next bracket.
        t = np.where(active, mid, t)
        high = fm > y
        hi = np.where(active & high, mid, hi)
        lo = np.where(active & ~high, mid, lo)
        done = np.abs(fm - y) <= BISECT_ATOL + BISECT_RTOL * y
        interval_tiny = (hi - lo) <= BISECT_ATOL + BISECT_RTOL * hi
        active = active & ~(done | interval_tiny)
        if not np.any(active):
            break
    t[y == 0] = 0.0
    return float(t[0]) if scalar else t


class YoungFunction:
    """Even convex M(t) = int_0^|t| m(s) ds for an increasing density m.

    ``density`` and ``primitive`` act on nonnegative arrays; evenness and the
    odd extension of the density are applied here. Closed-form inverses and a
    closed-form conjugate partner are optional; anything missing falls back
    to monotone bisection.
    """

    def __init__(self, name, density, primitive=None, kind="closed_form",
                 density_inverse=None, primitive_inverse=None,
                 conjugate_factory=None):
        if kind not in ("closed_form", "tabulated", "derived"):
            raise ConfigError(f"unknown Young-function kind {kind!r}")
        self.name = name
        self.kind = kind
        self._density = density
        self._primitive = primitive
        self._density_inverse = density_inverse
        self._primitive_inverse = primitive_inverse
        self._conjugate_factory = conjugate_factory
        self._conjugate = None

    def __repr__(self):
        return f"YoungFunction({self.name!r}, kind={self.kind!r})"

    # -- evaluation ---------------------------------------------------------

    def M(self, t):
        """Primitive M(|t|); even by construction."""
        t = _check_finite(t)
        at = np.abs(t)
        if self._primitive is not None:
            out = self._primitive(at)
        else:
            out = _quad_primitive(self._density, at)
        return out if np.ndim(t) else float(out)

    def m(self, t):
        """Density extended to the real line by oddness: sign(t) m(|t|)."""
        t = _check_finite(t)
        out = np.sign(t) * self._density(np.abs(t))
        return out if np.ndim(t) else float(out)

    def inv_M(self, y):
        """t >= 0 with M(t) = y, for y >= 0."""
        y = _check_finite(y, "level")
        if self._primitive_inverse is not None:
            if np.any(np.asarray(y) < 0):
                raise ValueError("inverse evaluation requires a nonnegative level")
            return self._primitive_inverse(y)
        return _bisect_increasing(self.M, y, what="primitive level")

    def inv_m(self, y):
        """tau >= 0 with m(tau) = y, for y >= 0 (generalized inverse)."""
        y = _check_finite(y, "level")
        if self._density_inverse is not None:
            if np.any(np.asarray(y) < 0):
                raise ValueError("inverse evaluation requires a nonnegative level")
            return self._density_inverse(y)
        return _bisect_increasing(lambda t: self._density(t), y, what="density level")

    def conjugate_inv_M(self, y):
        """tau >= 0 with conj(M)(tau) = y, without building the conjugate.

        Uses the parametric identity conj(M)(m(t)) = t m(t) - M(t) (Young's
        inequality with equality), so a single bisection on the closed-form
        side replaces the nested numeric transform. The growth validators
        call this on large sample clouds.
        """
        y = _check_finite(y, "level")

        def excess(t):
            return t * self._density(t) - np.asarray(self.M(t), dtype=float)

        t = _bisect_increasing(excess, y, what="conjugate level")
        return self.m(t)

    # -- conjugate ----------------------------------------------------------

    def conjugate(self):
        """The complementary Young function sup_tau {tau |t| - M(tau)}.

        Analytic when a closed-form partner is known; otherwise evaluated
        through the optimality condition m(tau) = |t| by bisection on the
        density. The result is cached.
        """
        if self._conjugate is None:
            if self._conjugate_factory is not None:
                self._conjugate = self._conjugate_factory()
            else:
                self._conjugate = _numeric_conjugate(self)
        return self._conjugate


def _quad_primitive(density, at):
    flat = np.atleast_1d(at).ravel()
    vals = np.empty_like(flat)
    for i, ti in enumerate(flat):
        vals[i] = quad(density, 0.0, ti, limit=200)[0] if ti > 0 else 0.0
    return vals.reshape(np.shape(at)) if np.ndim(at) else vals[0]


def _numeric_conjugate(Y):
    def density(t):
        return np.asarray(Y.inv_m(t), dtype=float)

    def primitive(t):
        tau = np.asarray(Y.inv_m(t), dtype=float)
        return t * tau - np.asarray(Y.M(tau), dtype=float)

    return YoungFunction(
        name=f"{Y.name}*",
        density=density,
        primitive=primitive,
        kind="derived",
    )


# -- Young's inequality ----------------------------------------------------

def young_gap(Y, t, tau):
    """M(t) + conj(M)(tau) - tau*t; nonnegative, zero iff tau = sign(t) m(|t|)."""
    t = _check_finite(t)
    tau = _check_finite(tau)
    conj = Y.conjugate()
    return Y.M(t) + conj.M(tau) - tau * t


# -- doubling diagnostic ---------------------------------------------------

@dataclass(frozen=True)
class Delta2Report:
    """Sampled doubling-condition diagnostic: is M(2t)/M(t) bounded?

    This is an empirical verdict from a finite geometric grid, not a
    certificate; the condition itself is asymptotic.
    """

    satisfied: bool
    constant_estimate: float
    grid_points: int
    label: str = "empirical"


def check_delta2(Y, T, t_max, n_points=64):
    """Sample M(2t)/M(t) on a geometric grid in [T, t_max].

    The verdict is ``satisfied`` when the ratio stays finite and shows no
    monotone growth across the last decade of the grid; a ratio that grows
    strictly there (or overflows) is reported as unsatisfied.
    """
    if not (0 < T < t_max):
        raise ConfigError("check_delta2 needs 0 < T < t_max")
    grid = np.geomspace(T, t_max, n_points)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.asarray(Y.M(2 * grid)) / np.asarray(Y.M(grid))
    finite = np.isfinite(ratio)
    estimate = float(np.max(ratio[finite])) if np.any(finite) else float("inf")

    if not np.all(finite):
        return Delta2Report(False, estimate, n_points)

    tail = ratio[grid >= t_max / 10.0]
    if tail.size < 3:
        tail = ratio[-3:]
    diffs = np.diff(tail)
    growing = bool(np.all(diffs > 1e-9 * np.abs(tail[:-1]) + 1e-300))
    return Delta2Report(not growing, estimate, n_points)


# -- catalog ---------------------------------------------------------------

def power_young(p):
    """M(t) = |t|^p / p with density t^(p-1); conjugate is the dual power."""
    if not p > 1:
        raise ConfigError(f"power Young function needs p > 1, got {p}")
    q = p / (p - 1.0)

    def factory():
        Yq = power_young(q)
        Yq._conjugate_factory = lambda: power_young(p)
        return Yq

    return YoungFunction(
        name=f"power:{p:g}",
        density=lambda t: t ** (p - 1.0),
        primitive=lambda t: t ** p / p,
        density_inverse=lambda y: np.asarray(y, dtype=float) ** (1.0 / (p - 1.0)),
        primitive_inverse=lambda y: (p * np.asarray(y, dtype=float)) ** (1.0 / p),
        conjugate_factory=factory,
    )


def exp_young():
    """Density expm1(t), so M(t) = e^|t| - |t| - 1; conjugate has density log1p."""

    def factory():
        Yc = YoungFunction(
            name="exp*",
            density=np.log1p,
            primitive=lambda t: (1.0 + t) * np.log1p(t) - t,
            density_inverse=np.expm1,
            conjugate_factory=exp_young,
        )
        return Yc

    return YoungFunction(
        name="exp",
        density=np.expm1,
        # expm1 keeps the small-t cancellation down to O(t) relative error.
        primitive=lambda t: np.expm1(t) - t,
        density_inverse=np.log1p,
        conjugate_factory=factory,
    )


def plog_young(p):
    """M(t) = |t|^p log(1+|t|); density by differentiation. No closed conjugate."""
    if not p >= 1:
        raise ConfigError(f"plog Young function needs p >= 1, got {p}")

    def density(t):
        return p * t ** (p - 1.0) * np.log1p(t) + t ** p / (1.0 + t)

    return YoungFunction(
        name=f"plog:{p:g}",
        density=density,
        primitive=lambda t: t ** p * np.log1p(t),
    )


def tabulated_young(t_knots, m_knots, name="tabulated"):
    """Young function from sampled density pairs (t, m(t)).

    Both columns must be strictly increasing (plateaus are rejected since the
    conjugate optimality point would not be unique) and start at (0, 0). The
    density is interpolated linearly and extrapolated with the last slope;
    the primitive integrates the interpolant exactly.
    """
    t_knots = np.asarray(t_knots, dtype=float)
    m_knots = np.asarray(m_knots, dtype=float)
    if t_knots.ndim != 1 or t_knots.shape != m_knots.shape or t_knots.size < 2:
        raise ConfigError("tabulated density needs two equal-length columns with >= 2 rows")
    if not (np.all(np.isfinite(t_knots)) and np.all(np.isfinite(m_knots))):
        raise ConfigError("tabulated density contains non-finite entries")
    if np.any(np.diff(t_knots) <= 0) or np.any(np.diff(m_knots) <= 0):
        raise ConfigError("tabulated density must be strictly increasing in both columns")
    if t_knots[0] != 0.0 or m_knots[0] != 0.0:
        raise ConfigError("tabulated density must start at (0, 0)")

    end_slope = (m_knots[-1] - m_knots[-2]) / (t_knots[-1] - t_knots[-2])
    # Exact integral of the piecewise-linear density at the knots.
    cum = np.concatenate(
        ([0.0], np.cumsum(0.5 * (m_knots[1:] + m_knots[:-1]) * np.diff(t_knots)))
    )

    def density(t):
        t = np.asarray(t, dtype=float)
        inside = np.interp(t, t_knots, m_knots)
        out = m_knots[-1] + end_slope * (t - t_knots[-1])
        return np.where(t > t_knots[-1], out, inside)

    def primitive(t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(t_knots, t, side="right") - 1, 0, t_knots.size - 2)
        t0 = t_knots[idx]
        m0 = m_knots[idx]
        slope = (m_knots[idx + 1] - m_knots[idx]) / (t_knots[idx + 1] - t_knots[idx])
        dt = np.minimum(t, t_knots[-1]) - t0
        val = cum[idx] + m0 * dt + 0.5 * slope * dt * dt
        over = np.maximum(t - t_knots[-1], 0.0)
        val = val + m_knots[-1] * over + 0.5 * end_slope * over * over
        return val

    return YoungFunction(name=name, density=density, primitive=primitive, kind="tabulated")


def tabulated_young_from_csv(path):
    """Load (t, m(t)) rows from a CSV file; a single header line is allowed."""
    try:
        data = np.loadtxt(path, delimiter=",", comments="#")
    except ValueError:
        try:
            data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"cannot parse tabulated density CSV {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read tabulated density CSV {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 2:
        raise ConfigError(f"tabulated density CSV {path} must have exactly two columns")
    return tabulated_young(data[:, 0], data[:, 1], name=f"tabulated:{path}")


def young_from_spec(spec):
    """Parse a catalog name: 'power:p', 'plog:p', 'exp', or 'csv:PATH'."""
    spec = spec.strip()
    if spec == "exp":
        return exp_young()
    head, sep, rest = spec.partition(":")
    if head == "power" and sep:
        return power_young(_parse_param(spec, rest))
    if head == "plog" and sep:
        return plog_young(_parse_param(spec, rest))
    if head == "csv" and sep:
        return tabulated_young_from_csv(rest)
    raise ConfigError(f"unknown Young function spec {spec!r}")


def _parse_param(spec, text):
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad numeric parameter in Young function spec {spec!r}") from exc

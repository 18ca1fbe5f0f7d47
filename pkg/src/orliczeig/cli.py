"""Configuration-driven runs with deterministic on-disk artifacts.

One process per run. The config file is TOML; the run mode lives inside it.
Exit codes: 0 ok, 2 config problem, 3 nonconvergence, 4 assembly failure.
"""

import argparse
import dataclasses
import json
import os
import re
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import report as figs
from .energy import build_context, energy_A, energy_G, grad_A, grad_G
from .errors import (
    AssemblyError,
    ConfigError,
    NonconvergenceError,
    OrliczEigError,
)
from .fracgrid import QuadConfig, build_basis, tail_energy_bound
from .kernels import (
    catalog_kernel,
    catalog_source,
    expression_kernel,
    validate_conditions,
)
from .solver import SolverConfig, k_study, linear_oracle, solve_sequence
from .young import young_from_spec

MODES = ("solve", "study", "oracle", "validate")
_MISSING = object()


class _SchemaError(Exception):
    """Config content violation, tagged with the offending key."""

    def __init__(self, key, message):
        super().__init__(message)
        self.key = key
        self.message = message


def _anchored(path, text, key, message):
    """Prefix the message with path:line of the key when it can be found."""
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return f"{path}:{i}: {message}"
    return f"{path}: {message}"


def _get(table, key, kinds, default=_MISSING, where=""):
    name = f"{where}.{key}" if where else key
    if key not in table:
        if default is _MISSING:
            raise _SchemaError(key, f"missing required key {name!r}")
        return default
    val = table[key]
    if kinds is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if isinstance(val, bool) and kinds is not bool:
        raise _SchemaError(key, f"{name} has wrong type {type(val).__name__}")
    if not isinstance(val, kinds):
        kn = kinds.__name__ if isinstance(kinds, type) else "value"
        raise _SchemaError(key, f"{name} must be of type {kn}")
    return val


def _sub_table(data, name):
    tab = data.get(name, {})
    if not isinstance(tab, dict):
        raise _SchemaError(name, f"[{name}] must be a table")
    return tab


def _dataclass_from_table(cls, table, where):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in table:
        if key not in known:
            raise _SchemaError(key, f"unknown key {where}.{key}")
    try:
        return cls(**table)
    except ConfigError as exc:
        key = next(iter(table), where)
        raise _SchemaError(key, f"[{where}] {exc}") from exc


@dataclasses.dataclass
class RunConfig:
    mode: str
    alpha: float
    beta: float
    s: float
    k: int
    k_list: tuple
    i_max: int
    kernel_spec: str
    kernel_expression: str
    kernel_young: str
    kernel_primitive: str
    source_spec: str
    young_spec: str
    quad: QuadConfig
    solver: SolverConfig
    figures: bool
    samples: int
    echo: dict


def parse_config(data):
    """Validate the parsed TOML tree and freeze the run parameters."""
    mode = _get(data, "mode", str, default="solve")
    if mode not in MODES:
        raise _SchemaError("mode", f"mode must be one of {MODES}, got {mode!r}")

    dom = _sub_table(data, "domain")
    alpha = _get(dom, "alpha", float, default=0.0, where="domain")
    beta = _get(dom, "beta", float, default=1.0, where="domain")
    if not (np.isfinite(alpha) and np.isfinite(beta) and alpha < beta):
        raise _SchemaError("alpha", "domain must satisfy alpha < beta, both finite")
    s = _get(dom, "s", float, default=0.5, where="domain")
    if not 0.0 < s < 1.0:
        raise _SchemaError("s", f"s must lie strictly inside (0, 1), got {s}")

    disc = _sub_table(data, "discretization")
    k = _get(disc, "k", int, default=16, where="discretization")
    raw_list = _get(disc, "k_list", list, default=None, where="discretization")
    k_list = ()
    if raw_list is not None:
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in raw_list):
            raise _SchemaError("k_list", "k_list must contain integers")
        k_list = tuple(raw_list)
        if len(k_list) < 2 or any(b <= a for a, b in zip(k_list, k_list[1:])):
            raise _SchemaError("k_list", "k_list must be strictly increasing, length >= 2")
        k = k_list[-1]
    if mode == "study" and not k_list:
        raise _SchemaError("k_list", "mode=study requires discretization.k_list")
    if k < 1:
        raise _SchemaError("k", f"k must be at least 1, got {k}")
    i_max = _get(disc, "i_max", int, default=1, where="discretization")
    if not 1 <= i_max <= k:
        raise _SchemaError("i_max", f"i_max must lie in 1..k={k}, got {i_max}")

    model = _sub_table(data, "model")
    kernel_spec = _get(model, "kernel", str, where="model")
    kernel_expression = _get(model, "expression", str, default="", where="model")
    kernel_young = _get(model, "young", str, default="", where="model")
    kernel_primitive = _get(model, "primitive", str, default="", where="model")
    if kernel_spec == "expr" and not (kernel_expression and kernel_young):
        raise _SchemaError(
            "kernel", "kernel='expr' needs model.expression and model.young"
        )
    default_src = "" if mode == "validate" else _MISSING
    source_spec = _get(model, "source", str, default=default_src, where="model")
    young_spec = _get(model, "young_check", str, default="", where="model")

    quad = _dataclass_from_table(QuadConfig, _sub_table(data, "quad"), "quad")
    solver = _dataclass_from_table(
        SolverConfig, _sub_table(data, "solver"), "solver"
    )

    rep = _sub_table(data, "report")
    figures = _get(rep, "figures", bool, default=True, where="report")

    val = _sub_table(data, "validate")
    samples = _get(val, "samples", int, default=100000, where="validate")
    if samples < 1:
        raise _SchemaError("samples", "validate.samples must be positive")

    return RunConfig(
        mode=mode, alpha=alpha, beta=beta, s=s, k=k, k_list=k_list,
        i_max=i_max, kernel_spec=kernel_spec,
        kernel_expression=kernel_expression, kernel_young=kernel_young,
        kernel_primitive=kernel_primitive, source_spec=source_spec,
        young_spec=young_spec, quad=quad, solver=solver, figures=figures,
        samples=samples, echo=data,
    )


def _build_kernel(cfg):
    if cfg.kernel_spec == "expr":
        young = young_from_spec(cfg.kernel_young)
        return expression_kernel(
            cfg.kernel_expression,
            young,
            name=f"expr({cfg.kernel_expression})",
            A_src=cfg.kernel_primitive or None,
        )
    kernel = catalog_kernel(cfg.kernel_spec)
    if cfg.young_spec:
        pinned = young_from_spec(cfg.young_spec)
        t = np.geomspace(1e-3, 10.0, 40)
        gap = np.max(np.abs(pinned.M(t) - kernel.young.M(t)) / (1.0 + kernel.young.M(t)))
        if gap > 1e-9:
            raise _SchemaError(
                "young_check",
                f"young_check={cfg.young_spec!r} disagrees with the kernel's "
                f"Young function (relative gap {gap:.2e})",
            )
    return kernel


def _sanitize(obj):
    """Make the tree json-serializable and deterministic."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    return obj


def _write_json(path, obj):
    text = json.dumps(_sanitize(obj), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def _pair_dict(res):
    return {
        "i": res.index_i,
        "lambda": res.lambda_,
        "g_value": res.g_value,
        "a_value": res.a_value,
        "residual": res.residual,
        "converged": res.converged,
        "label": res.label,
        "flags": list(res.flags),
        "cluster": res.cluster,
        "iterations": res.iterations,
    }


def _tail_bound(ctx, coeffs):
    """Truncation bound for the reported leading eigenfunction."""
    full = np.zeros(ctx.size)
    full[: len(coeffs)] = coeffs
    u = ctx.E_omega @ full
    p = ctx.kernel.p_hint
    integral = float(np.dot(ctx.omega_quad.weights, np.abs(u) ** p))
    return tail_energy_bound(ctx.quad.tail_box, p, ctx.s, integral)


def _quad_section(ctx, lead_coeffs=None):
    sec = {"pair_count": ctx.quad.pair_count, "tail_bound": None}
    if lead_coeffs is not None:
        sec["tail_bound"] = _tail_bound(ctx, lead_coeffs)
    return sec


def _write_eigenfunctions_csv(path, basis, results):
    nodes = basis.nodes
    header = "x," + ",".join(f"u_{r.index_i}" for r in results)
    lines = [header]
    values = []
    for r in results:
        full = np.zeros(basis.n_interior)
        full[: len(r.coeffs)] = r.coeffs
        values.append(basis.evaluate(full, nodes))
    for row in range(nodes.size):
        cells = [f"{float(nodes[row])!r}"]
        cells += [f"{float(v[row])!r}" for v in values]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _make_context(cfg):
    kernel = _build_kernel(cfg)
    source = catalog_source(cfg.source_spec)
    basis = build_basis(cfg.alpha, cfg.beta, cfg.k)
    return build_context(kernel, source, basis, cfg.s, quad_cfg=cfg.quad)


def _run_solve(cfg, out, quiet):
    ctx = _make_context(cfg)
    seq = solve_sequence(ctx, cfg.k, cfg.i_max, cfg.solver)
    ok = bool(seq) and len(seq) == cfg.i_max and all(r.converged for r in seq)
    payload = {
        "config_echo": cfg.echo,
        "mode": "solve",
        "eigenpairs": [_pair_dict(r) for r in seq],
        "quadrature": _quad_section(ctx, seq[0].coeffs if seq else None),
        "timings": dict(ctx.counters),
    }
    if not ok:
        n_conv = sum(1 for r in seq if r.converged)
        payload["error"] = {
            "type": "nonconvergence",
            "message": f"only {n_conv} of {cfg.i_max} pairs converged",
        }
    _write_json(os.path.join(out, "results.json"), payload)
    if seq:
        _write_eigenfunctions_csv(
            os.path.join(out, "eigenfunctions.csv"), ctx.basis, seq
        )
        if cfg.figures:
            figs.render_eigenfunctions(
                os.path.join(out, "eigenfunctions.png"), ctx.basis, seq
            )
    if not quiet:
        for r in seq:
            star = "" if r.converged else "  [not converged]"
            print(
                f"i={r.index_i}  lambda={r.lambda_:.10g}  g={r.g_value:.6g}  "
                f"residual={r.residual:.2e}{star}"
            )
        print(f"wrote {os.path.join(out, 'results.json')}")
    return 0 if ok else 3


def _run_oracle(cfg, out, quiet):
    ctx = _make_context(cfg)
    pairs = linear_oracle(ctx, cfg.k)
    seq = solve_sequence(ctx, cfg.k, cfg.i_max, cfg.solver)
    eigenpairs = []
    for i, (lam, u) in enumerate(pairs, start=1):
        gA = grad_A(ctx, u)
        gG = grad_G(ctx, u)
        res = float(np.linalg.norm(gA - lam * gG) / np.linalg.norm(gA))
        eigenpairs.append({
            "i": i,
            "lambda": lam,
            "g_value": energy_G(ctx, u),
            "a_value": energy_A(ctx, u),
            "residual": res,
            "converged": True,
            "label": "oracle",
            "flags": [],
            "cluster": False,
            "iterations": 0,
        })
    deltas = []
    from .energy import mass_matrix

    B = mass_matrix(ctx, cfg.k)
    for r in seq:
        lam_o, u_o = pairs[r.index_i - 1]
        du = min(
            float(np.sqrt((r.coeffs - u_o) @ B @ (r.coeffs - u_o))),
            float(np.sqrt((r.coeffs + u_o) @ B @ (r.coeffs + u_o))),
        ) / float(np.sqrt(u_o @ B @ u_o))
        deltas.append({
            "i": r.index_i,
            "lambda_rel_delta": abs(r.lambda_ - lam_o) / abs(lam_o),
            "vector_rel_delta": du,
            "converged": r.converged,
        })
    payload = {
        "config_echo": cfg.echo,
        "mode": "oracle",
        "eigenpairs": eigenpairs,
        "solver_deltas": deltas,
        "quadrature": _quad_section(ctx, pairs[0][1]),
        "timings": dict(ctx.counters),
    }
    _write_json(os.path.join(out, "results.json"), payload)
    if cfg.figures:
        figs.render_spectrum(
            os.path.join(out, "spectrum.png"), [lam for lam, _ in pairs], seq
        )
    ok = bool(seq) and len(seq) == cfg.i_max and all(r.converged for r in seq)
    if not quiet:
        print(f"oracle eigenvalues: {cfg.k} ascending, "
              f"lambda_1={pairs[0][0]:.10g}")
        for d in deltas:
            print(f"i={d['i']}  |dlambda|/lambda={d['lambda_rel_delta']:.2e}  "
                  f"|du|_B={d['vector_rel_delta']:.2e}")
        print(f"wrote {os.path.join(out, 'results.json')}")
    return 0 if ok else 3


def _run_study(cfg, out, quiet):
    ctx = _make_context(cfg)
    rep = k_study(ctx, cfg.solver, cfg.k_list, cfg.i_max)
    lines = ["k,i,lambda,g_value,a_value,residual,converged"]
    for kk in rep.k_list:
        for r in rep.results[kk]:
            lines.append(
                f"{kk},{r.index_i},{float(r.lambda_)!r},{float(r.g_value)!r},"
                f"{float(r.a_value)!r},{float(r.residual)!r},{r.converged}"
            )
    with open(os.path.join(out, "study.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    lead = rep.results[rep.k_list[-1]]
    payload = {
        "config_echo": cfg.echo,
        "mode": "study",
        "eigenpairs": [_pair_dict(r) for r in lead],
        "k_list": list(rep.k_list),
        "g_table": rep.g_table,
        "lambda_table": rep.lambda_table,
        "oracle_lambda1": (
            None if rep.oracle_lambda1 is None
            else {str(k): v for k, v in rep.oracle_lambda1.items()}
        ),
        "verdicts": rep.verdicts,
        "quadrature": _quad_section(
            ctx, lead[0].coeffs if lead else None
        ),
        "timings": dict(ctx.counters),
    }
    all_ok = all(
        r.converged for kk in rep.k_list for r in rep.results[kk]
    ) and all(
        len(rep.results[kk]) == min(cfg.i_max, kk) for kk in rep.k_list
    )
    if not all_ok:
        payload["error"] = {
            "type": "nonconvergence",
            "message": "at least one subspace run did not converge",
        }
    _write_json(os.path.join(out, "results.json"), payload)
    if cfg.figures:
        figs.render_convergence(os.path.join(out, "convergence.png"), rep)
    if not quiet:
        for name, verdict in rep.verdicts.items():
            print(f"{name}: {verdict}")
        print(f"wrote {os.path.join(out, 'study.csv')}")
    return 0 if all_ok else 3


def _run_validate(cfg, out, quiet):
    kernel = _build_kernel(cfg)
    rep = validate_conditions(
        kernel, samples=cfg.samples, rng_seed=cfg.solver.rng_seed
    )
    payload = {
        "config_echo": cfg.echo,
        "mode": "validate",
        "validation": {
            "kernel": rep.kernel,
            "n_samples": rep.n_samples,
            "rng_seed": rep.rng_seed,
            "all_passed": rep.all_passed,
            "failed": rep.failed,
            "checks": {
                name: {
                    "passed": ck.passed,
                    "worst_margin": ck.worst_margin,
                    "at": list(ck.at),
                }
                for name, ck in rep.checks.items()
            },
        },
        "quadrature": {"pair_count": 0, "tail_bound": None},
        "timings": {},
    }
    _write_json(os.path.join(out, "results.json"), payload)
    if cfg.figures:
        figs.render_validation(os.path.join(out, "margins.png"), rep)
    if not quiet:
        print(rep.summary())
        print(f"wrote {os.path.join(out, 'results.json')}")
    # validation reports are data: failed checks are not a process failure
    return 0


_RUNNERS = {
    "solve": _run_solve,
    "oracle": _run_oracle,
    "study": _run_study,
    "validate": _run_validate,
}


def run(config_path, seed=None, out=".", quiet=False):
    """Execute one config file; returns the process exit code."""
    try:
        with open(config_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return 2
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(data)
        if seed is not None:
            cfg = dataclasses.replace(
                cfg,
                solver=dataclasses.replace(cfg.solver, rng_seed=int(seed)),
                echo={**cfg.echo, "overrides": {"seed": int(seed)}},
            )
        os.makedirs(out, exist_ok=True)
        runner = _RUNNERS[cfg.mode]
        return runner(cfg, out, quiet)
    except _SchemaError as exc:
        print(_anchored(config_path, text, exc.key, exc.message),
              file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return 2
    except NonconvergenceError as exc:
        diag = {
            "error": {"type": "nonconvergence", "message": str(exc)},
            "best": None if exc.best is None else _pair_dict(exc.best),
        }
        _write_json(os.path.join(out, "results.json"), diag)
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return 3
    except AssemblyError as exc:
        print(f"assembly failure: {exc}", file=sys.stderr)
        return 4
    except OrliczEigError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="orliczeig",
        description="Galerkin eigenpairs of nonlocal quasilinear operators "
                    "in Orlicz-Sobolev discretizations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser(
        "solve",
        help="run a TOML config (the run mode is chosen inside the file)",
    )
    sp.add_argument("config", help="path to the TOML run configuration")
    sp.add_argument("--seed", type=int, default=None,
                    help="override solver.rng_seed")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--quiet", action="store_true",
                    help="suppress the stdout summary")
    args = parser.parse_args(argv)
    return run(args.config, seed=args.seed, out=args.out, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())

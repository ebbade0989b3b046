"""Command-line front end.

Every invocation is turned into a run configuration, validated against a JSON
schema, then dispatched. A configuration file given with ``--config`` supplies
defaults that explicit flags override.

Exit codes: 0 success, 1 failed verification, 2 configuration, 3 geometry,
4 solver, 5 input/output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import cell, coefficients, dns, fem, io, macro, verify
from .errors import ConfigError, InsufficientSamples, PoroslipError
from .geometry import read_geometry
from .laplace import TalbotContour, WeeksContour, inverse_laplace

SUBCOMMANDS = ("cell-static", "cell-dynamic", "effective", "macro", "dns", "verify")

_number_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_lambda_value = {"oneOf": [{"type": "number"}, _number_pair]}
_times = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}


def _only(name, schema):
    return {"type": "object", "properties": {name: schema}, "required": [name], "additionalProperties": False}


LAMBDA_SCHEMA = {
    "oneOf": [
        _only("list", {"type": "array", "items": _lambda_value, "minItems": 1}),
        _only("log", {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}),
        _only(
            "talbot",
            {
                "type": "object",
                "properties": {"times": _times, "n": {"type": "integer", "minimum": 2}},
                "required": ["times"],
                "additionalProperties": False,
            },
        ),
        _only(
            "weeks",
            {
                "type": "object",
                "properties": {
                    "times": _times,
                    "n": {"type": "integer", "minimum": 2},
                    "sigma": {"type": "number"},
                    "b": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["times"],
                "additionalProperties": False,
            },
        ),
    ]
}

FORCING_SCHEMA = {
    "type": "object",
    "properties": {
        "direction": {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 2},
        "amplitude": {"type": "number"},
        "time": {"enum": ["impulse", "step", "ramp"]},
    },
    "additionalProperties": False,
}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": io.SCHEMA_VERSION},
        "subcommand": {"enum": list(SUBCOMMANDS)},
        "geometry": {"type": "string"},
        "coefficients": {"type": "string"},
        "out": {"type": "string"},
        "lambdas": LAMBDA_SCHEMA,
        "alpha_sweep": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "order": {"enum": [1, 2]},
        "viscous": {"enum": ["full", "symmetric"]},
        "stabilization": {"type": ["boolean", "null"]},
        "noslip": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object",
            "properties": {"permeability_rtol": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "macro": {
            "type": "object",
            "properties": {
                "extent": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1, "maxItems": 2},
                "elements": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1, "maxItems": 2},
                "probes": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1},
                "forcing": FORCING_SCHEMA,
                "region_bound": {"type": "number", "minimum": 0},
                "densities": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "dns": {
            "type": "object",
            "properties": {
                "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "extent": {"type": "number", "exclusiveMinimum": 0},
                "lambda": _lambda_value,
                "refine": {"type": "integer", "minimum": 1},
                "macro_elements": {"type": "integer", "minimum": 1},
                "forcing": FORCING_SCHEMA,
            },
            "additionalProperties": False,
        },
        "suite": {"enum": ["all", *verify.SUITES]},
        "report": {"type": "string"},
    },
    "required": ["schema_version", "subcommand"],
    "additionalProperties": False,
}


def validate_config(cfg: dict) -> dict:
    """Check a run configuration against the schema.

    Raises
    ------
    ConfigError
    """
    try:
        jsonschema.validate(cfg, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid run configuration at {where}: {exc.message}") from None
    return cfg


# parsing ---------------------------------------------------------------------------


def _lambda_from_json(v) -> complex:
    return complex(v) if not isinstance(v, list) else complex(v[0], v[1])


def _parse_lambda(text: str) -> list:
    """``2``, ``2+1j`` or ``2,1`` (real, imaginary)."""
    if "," in text:
        re_, im_ = text.split(",")
        return [float(re_), float(im_)]
    z = complex(text.replace(" ", ""))
    return z.real if z.imag == 0 else [z.real, z.imag]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poroslip", description="Homogenized poroelasticity with interface slip.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, *, geometry=True, lambdas=False):
        sp.add_argument("--config", help="JSON run configuration supplying defaults")
        if geometry:
            sp.add_argument("--geometry", help="geometry JSON file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help="worker threads (default: available cores)")
        sp.add_argument("--order", type=int, choices=(1, 2))
        if lambdas:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--lambda-list", nargs="+", type=_parse_lambda, metavar="LAM")
            g.add_argument("--lambda-log", nargs=3, type=float, metavar=("LO", "HI", "N"))
            sp.add_argument("--viscous", choices=("full", "symmetric"))
            sp.add_argument("--noslip", action="store_true", default=None)
            sp.add_argument("--stabilization", choices=("on", "off", "auto"))

    common(sub.add_parser("cell-static", help="static correctors and q, beta"))
    cd = sub.add_parser("cell-dynamic", help="dynamic permeability tables")
    common(cd, lambdas=True)
    cd.add_argument("--alpha-sweep", nargs="+", type=float)
    common(sub.add_parser("effective", help="full coefficient report"), lambdas=True)
    mp = sub.add_parser("macro", help="macroscopic solve and time traces")
    common(mp, lambdas=True)
    mp.add_argument("--coefficients", help="coefficient report JSON")
    mp.add_argument("--times", nargs="+", type=float)
    mp.add_argument("--method", choices=("weeks", "talbot"))
    mp.add_argument("--extent", nargs="+", type=float)
    mp.add_argument("--elements", nargs="+", type=int)
    mp.add_argument("--probe", nargs="+", type=float, action="append", dest="probes")
    dp = sub.add_parser("dns", help="fine-scale solves and homogenization gap")
    common(dp, lambdas=False)
    dp.add_argument("--viscous", choices=("full", "symmetric"))
    dp.add_argument("--epsilons", nargs="+", type=float)
    dp.add_argument("--lambda", dest="lam", type=_parse_lambda)
    dp.add_argument("--refine", type=int)
    dp.add_argument("--macro-elements", type=int)
    vp = sub.add_parser("verify", help="module self-checks")
    vp.add_argument("--config")
    vp.add_argument("--suite", default=None, choices=("all", *verify.SUITES))
    vp.add_argument("--report", help="write the JSON report here")
    vp.add_argument("--out", help="output directory for verify_report.json")
    return p


def config_from_args(args) -> dict:
    """Merge a configuration file with explicit flags into a run configuration."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = io.read_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("run configuration must be a JSON object")
    cfg.setdefault("schema_version", io.SCHEMA_VERSION)
    if cfg.get("subcommand", args.subcommand) != args.subcommand:
        raise ConfigError(f"configuration is for {cfg['subcommand']!r}, not {args.subcommand!r}")
    cfg["subcommand"] = args.subcommand

    def put(key, value):
        if value is not None:
            cfg[key] = value

    for key in ("geometry", "out", "threads", "order", "viscous", "noslip", "coefficients", "suite", "report"):
        put(key, getattr(args, key, None))
    stab = getattr(args, "stabilization", None)
    if stab is not None:
        cfg["stabilization"] = None if stab == "auto" else stab == "on"
    if getattr(args, "lambda_list", None):
        cfg["lambdas"] = {"list": args.lambda_list}
    if getattr(args, "lambda_log", None):
        cfg["lambdas"] = {"log": list(args.lambda_log)}
    put("alpha_sweep", getattr(args, "alpha_sweep", None))
    if args.subcommand == "macro":
        m = cfg.setdefault("macro", {})
        for key in ("extent", "elements", "probes"):
            if getattr(args, key, None) is not None:
                m[key] = getattr(args, key)
        if args.times is not None:
            cfg["lambdas"] = {args.method or "weeks": {"times": args.times}}
        elif args.method is not None:
            raise ConfigError("--method needs --times")
    if args.subcommand == "dns":
        d = cfg.setdefault("dns", {})
        for key, attr in (("epsilons", "epsilons"), ("lambda", "lam"), ("refine", "refine"), ("macro_elements", "macro_elements")):
            if getattr(args, attr, None) is not None:
                d[key] = getattr(args, attr)
    return validate_config(cfg)


# helpers ----------------------------------------------------------------------------


def _lambdas(cfg) -> list:
    spec = cfg.get("lambdas")
    if spec is None:
        return list(coefficients.DEFAULT_LAMBDAS)
    if "list" in spec:
        return [_lambda_from_json(v) for v in spec["list"]]
    if "log" in spec:
        lo, hi, n = spec["log"]
        if lo <= 0 or hi <= 0 or n < 1 or n != int(n):
            raise ConfigError("log grid needs positive bounds and a whole number of points")
        return list(np.logspace(np.log10(lo), np.log10(hi), int(n)))
    return list(_contour(cfg).nodes)


def _contour(cfg):
    spec = cfg.get("lambdas", {})
    if "talbot" in spec:
        return TalbotContour(**spec["talbot"])
    if "weeks" in spec:
        return WeeksContour(**spec["weeks"])
    return None


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"{cfg['subcommand']} needs '{key}'")
    return cfg[key]


def _out(cfg) -> Path:
    return Path(cfg.get("out", "."))


def _threads(cfg) -> int:
    return int(cfg.get("threads") or os.cpu_count() or 1)


def _forcing(spec: dict | None, dim: int):
    spec = spec or {}
    direction = np.asarray(spec.get("direction", [1.0] + [0.0] * (dim - 1)), dtype=float)
    if direction.shape != (dim,):
        raise ConfigError(f"forcing direction must have {dim} components")
    amp = float(spec.get("amplitude", 1.0))
    power = {"impulse": 0, "step": 1, "ramp": 2}[spec.get("time", "step")]

    def f(lam, x, _ext=None):
        x = np.asarray(x, dtype=float)
        shape = np.prod(np.sin(np.pi * x), axis=1)
        return amp * shape[:, None] * direction[None, :] / complex(lam) ** power

    return f


def _scaled_forcing(spec, extent):
    base = _forcing(spec, len(extent))
    ext = np.asarray(extent, dtype=float)
    return lambda lam, x: base(lam, np.asarray(x) / ext)


# subcommands ------------------------------------------------------------------------


def cmd_cell_static(cfg) -> int:
    c = read_geometry(_require(cfg, "geometry"))
    mesh = fem.build_periodic_mesh(c, cfg.get("order", 2))
    static = cell.solve_static(mesh, c.materials.a)
    q = coefficients.compute_q(static)
    beta_ij, beta = coefficients.compute_betas(static)
    routes = coefficients.beta_routes(static)
    doc = {
        "schema_version": io.SCHEMA_VERSION,
        "q_voigt": q,
        "beta_ij": beta_ij,
        "beta": beta,
        "static_solutions": {
            "order": mesh.order,
            "n_solid_dofs": mesh.n_solid_dofs,
            "pairs": [list(p) for p in sorted(static.chi_ij)],
            "max_residual": max((float(np.max(r)) for r in static.residuals.values()), default=0.0),
            "beta_routes": {("beta" if k == "beta" else f"beta_{k[0]}{k[1]}"): list(v) for k, v in routes.items()},
        },
    }
    path = io.write_json(doc, _out(cfg) / "static.json")
    print(path)
    return 0


def _sweep(c, cfg, lambdas, alpha):
    mesh = fem.build_periodic_mesh(c, cfg.get("order", 2))
    m = c.materials
    sols = cell.solve_theta_sweep(
        mesh,
        lambdas,
        m.mu,
        m.rho_f,
        alpha,
        noslip=cfg.get("noslip", False),
        viscous=cfg.get("viscous", "full"),
        stabilization=cfg.get("stabilization"),
        threads=_threads(cfg),
    )
    rtol = cfg.get("tolerances", {}).get("permeability_rtol", 1e-8)
    return coefficients.compute_permeability(sols, rtol=rtol)


def cmd_cell_dynamic(cfg) -> int:
    c = read_geometry(_require(cfg, "geometry"))
    lambdas = _lambdas(cfg)
    alphas = cfg.get("alpha_sweep")
    out = _out(cfg)
    if not alphas:
        print(io.write_k_table(_sweep(c, cfg, lambdas, c.materials.alpha), out / "K.csv", c.dim))
        return 0
    for a in alphas:
        print(io.write_k_table(_sweep(c, cfg, lambdas, a), out / f"K_alpha={a!r}.csv", c.dim))
    return 0


def _effective(c, cfg, lambdas):
    return coefficients.homogenize(
        c,
        lambdas=lambdas,
        order=cfg.get("order", 2),
        noslip=cfg.get("noslip", False),
        viscous=cfg.get("viscous", "full"),
        threads=_threads(cfg),
    )


def cmd_effective(cfg) -> int:
    c = read_geometry(_require(cfg, "geometry"))
    co = _effective(c, cfg, _lambdas(cfg))
    out = _out(cfg)
    print(io.write_coefficients(co, out / "coefficients.json"))
    print(io.write_k_table(co.K_samples, out / "K.csv", c.dim))
    diag = {"schema_version": io.SCHEMA_VERSION, **{k: float(v) for k, v in coefficients.check_q(co.q).items()}}
    try:
        limit, err = coefficients.high_lambda_limit(co.K_samples, c.materials.rho_f)
        diag["high_lambda_limit"] = {"value": limit, "error_estimate": err}
    except InsufficientSamples as exc:
        diag["high_lambda_limit"] = {"value": None, "reason": str(exc)}
    print(io.write_json(diag, out / "diagnostics.json"))
    return 0


def cmd_macro(cfg) -> int:
    spec = cfg.get("macro", {})
    lambdas = _lambdas(cfg) if "lambdas" in cfg else None
    if lambdas is None:
        raise ConfigError("macro needs parameters: --lambda-list or --times")
    if "talbot" in cfg["lambdas"]:
        raise ConfigError("Talbot nodes leave the half-plane Re(lambda) > 0; use the Weeks contour for macro traces")
    if "geometry" in cfg:
        c = read_geometry(cfg["geometry"])
        co = _effective(c, cfg, lambdas)
        rho_s, rho_f = c.materials.rho_s, c.materials.rho_f
    elif "coefficients" in cfg:
        co = io.read_coefficients(cfg["coefficients"])
        if "densities" not in spec:
            raise ConfigError("macro with a coefficient report needs macro.densities [rho_s, rho_f]")
        rho_s, rho_f = spec["densities"]
    else:
        raise ConfigError("macro needs --geometry or --coefficients")
    dim = co.dim
    extent = spec.get("extent", [1.0] * dim)
    elements = spec.get("elements", [64] * dim)
    probes = np.asarray(spec.get("probes", [[0.5 * e for e in extent]]), dtype=float)
    if probes.shape[1] != dim:
        raise ConfigError(f"probes must have {dim} coordinates")
    problem = macro.MacroProblem(
        extent, elements, co, rho_s, rho_f, _scaled_forcing(spec.get("forcing"), extent), lambdas,
        region_bound=spec.get("region_bound", 1.0),
    )
    contour = _contour(cfg)
    out = _out(cfg)
    sol = macro.solve_macro(problem)
    if contour is not None:
        traces = inverse_laplace(sol.probe(probes), contour, nodes=sol.lambdas)
        print(io.write_traces(contour.times, probes, traces, out / "traces.csv"))
    else:
        vals = sol.probe(probes)
        doc = {
            "schema_version": io.SCHEMA_VERSION,
            "lambdas": [[complex(l).real, complex(l).imag] for l in sol.lambdas],
            "probes": probes,
            "values": vals,
            "residuals": sol.residuals,
        }
        print(io.write_json(doc, out / "probe_values.json"))
    return 0


def cmd_dns(cfg) -> int:
    c = read_geometry(_require(cfg, "geometry"))
    spec = cfg.get("dns", {})
    lam = _lambda_from_json(spec.get("lambda", 2.0))
    extent = float(spec.get("extent", 1.0))
    viscous = cfg.get("viscous", "symmetric")
    force = _scaled_forcing(spec.get("forcing"), [extent] * c.dim)
    co = coefficients.homogenize(c, lambdas=[lam], order=cfg.get("order", 2), viscous=viscous, threads=_threads(cfg))
    n_macro = int(spec.get("macro_elements", 64))
    sol = macro.solve_macro(
        macro.MacroProblem([extent] * c.dim, [n_macro] * c.dim, co, c.materials.rho_s, c.materials.rho_f, force, [lam])
    )
    gaps = []
    for eps in spec.get("epsilons", [0.5, 0.25, 0.125]):
        r = dns.solve_eps_problem(
            dns.DnsConfig(eps, c, extent, lam, force, refine=int(spec.get("refine", 1)), order=cfg.get("order", 2), viscous=viscous)
        )
        gaps.append(dns.homogenization_gap(r, sol))
    print(io.write_json(io.gap_report(gaps, lam), _out(cfg) / "gap_report.json"))
    return 0


def cmd_verify(cfg) -> int:
    suite = cfg.get("suite", "all")
    names = verify.SUITES if suite == "all" else (suite,)
    checks = verify.run_suites(names)
    print(verify.format_table(checks))
    target = cfg.get("report") or (str(_out(cfg) / "verify_report.json") if "out" in cfg else None)
    if target:
        io.write_json(verify.report(checks), target)
    return 0 if all(c.passed for c in checks) else 1


COMMANDS = {
    "cell-static": cmd_cell_static,
    "cell-dynamic": cmd_cell_dynamic,
    "effective": cmd_effective,
    "macro": cmd_macro,
    "dns": cmd_dns,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg["subcommand"]](cfg)
    except PoroslipError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run())

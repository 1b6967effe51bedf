"""Command-line interface: subcommands, INI configs, run manifests and CSV outputs.

Every run writes its CSV outputs, the fully resolved configuration
(``config.ini``) and a ``manifest.json`` into the output directory.  Feeding
``config.ini`` back through ``--config`` reproduces the CSVs byte for byte.

Exit codes: 0 success or pass, 1 certification failure or inadmissible
system, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coeffs import (BUILTINS, CoefficientSystem, PolySyntaxError, as_test_function, builtin,
                     named_function, parse_poly, validate)
from .constants import bound_factor, compute_constants
from .diffusion1d import Propagator1D, check_resolvent, resolvent_solve
from .drift_flow import flow, second_order_bound
from .grid import GridSpec
from .noise import NoiseStream, path_statistics
from .semigroup import DEFAULT_BUDGET, certify, fd_derivative, mc_estimate, trotter_compose

CSV_VERSION = "1"
NAMED_FUNCTIONS = ("mean", "cos-product", "sin-product")
SUBCOMMANDS = ("validate", "constants", "flow", "simulate1d", "resolvent", "estimate", "trotter",
               "certify", "sweep")

# key -> (section, type, default); types: str, int, float, floats, ints
KEYS = {
    "builtin": ("system", "str", None),
    "dim": ("system", "int", 1),
    "kappa": ("system", "float", None),
    "c": ("system", "float", None),
    "mbar": ("system", "float", None),
    "sigma2": ("system", "float", None),
    "drift": ("system", "str", None),
    "sqdiff": ("system", "str", None),
    "seed": ("run", "int", 0),
    "workers": ("run", "int", 1),
    "t": ("run", "float", 1.0),
    "dt": ("run", "float", None),
    "n_paths": ("run", "int", 100_000),
    "f": ("run", "str", None),
    "f_scale": ("run", "float", 1.0),
    "f_k": ("run", "int", 1),
    "m": ("run", "int", 1),
    "x": ("run", "floats", None),
    "x0": ("run", "float", None),
    "order": ("run", "int", 2),
    "tol": ("run", "float", 1e-9),
    "alpha": ("run", "ints", None),
    "h": ("run", "float", None),
    "budget": ("run", "float", DEFAULT_BUDGET),
    "a": ("run", "str", None),
    "phi": ("run", "str", None),
    "lam": ("run", "float", None),
    "nodes": ("run", "int", 1000),
    "n": ("run", "int", 8),
    "grid_points": ("run", "int", 101),
    "interpolation": ("run", "str", "linear"),
    "dims": ("run", "ints", [1, 2, 4, 8, 16, 32]),
    "ms": ("run", "ints", [0, 1, 2]),
    "certify_m": ("run", "int", 1),
}

# options each subcommand reads (besides the system block and seed/workers)
USES = {
    "validate": (),
    "constants": ("grid_points",),
    "flow": ("x", "t", "order", "tol"),
    "simulate1d": ("a", "x0", "t", "dt", "n_paths"),
    "resolvent": ("a", "phi", "lam", "m", "nodes"),
    "estimate": ("f", "f_scale", "f_k", "x", "t", "dt", "n_paths", "alpha", "h"),
    "trotter": ("f", "f_scale", "f_k", "t", "n", "grid_points", "interpolation"),
    "certify": ("f", "f_scale", "f_k", "m", "t", "dt", "n_paths", "h", "budget"),
    "sweep": ("f", "f_scale", "f_k", "t", "dt", "n_paths", "h", "budget", "dims", "ms",
              "certify_m"),
}
# per-subcommand overrides of the defaults in KEYS
COMMAND_DEFAULTS = {
    "simulate1d": {"dt": 1e-3},
    "sweep": {"t": 0.5, "dt": 2e-3, "n_paths": 4096, "budget": 1.5e9},
}
SYSTEM_KEYS = tuple(k for k, v in KEYS.items() if v[0] == "system")
ALWAYS = ("seed", "workers")
# outputs do not depend on these
UNHASHED = ("workers",)


class ConfigError(ValueError):
    """Bad configuration value; the message carries file/line/field context."""


# -- values ------------------------------------------------------------------------
def _convert(key: str, raw, where: str = ""):
    kind = KEYS[key][1]
    if raw is None:
        return None
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "str":
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        items = [s for s in re.split(r"[,\s]+", text) if s]
        if kind == "floats":
            return [float(s) for s in items]
        return [int(s) for s in items]
    except ValueError:
        raise ConfigError(f"{where}field {key!r}: cannot read {text!r} as {kind}") from None


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _line_of(path: Path, section: str, key: str) -> int | None:
    current = None
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return n
    return None


def read_config(path) -> dict:
    """Flat ``key -> value`` from an INI file with ``[system]`` and ``[run]`` sections."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            line = _line_of(path, section, key)
            where = f"{path}:{line}: [{section}] " if line else f"{path}: [{section}] "
            if key not in KEYS:
                raise ConfigError(f"{where}unknown field {key!r}")
            if KEYS[key][0] != section:
                raise ConfigError(f"{where}field {key!r} belongs in [{KEYS[key][0]}]")
            out[key] = _convert(key, raw, where)
    return out


def write_config(cfg: dict, path=None) -> str:
    """INI text for ``cfg``; written to ``path`` when given."""
    buf = io.StringIO()
    for section in ("system", "run"):
        keys = [k for k in cfg if KEYS[k][0] == section and cfg[k] is not None]
        if not keys:
            continue
        buf.write(f"[{section}]\n")
        for k in keys:
            buf.write(f"{k} = {_format(cfg[k])}\n")
        buf.write("\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def resolve(command: str, cli: dict, file_cfg: dict) -> dict:
    """Merge defaults < config file < command line for the keys ``command`` uses."""
    keys = SYSTEM_KEYS + ALWAYS + USES[command]
    cfg = {}
    for k in keys:
        v = COMMAND_DEFAULTS.get(command, {}).get(k, KEYS[k][2])
        if k in file_cfg and file_cfg[k] is not None:
            v = file_cfg[k]
        if cli.get(k) is not None:
            v = _convert(k, cli[k], "command line: ")
        cfg[k] = v
    return cfg


def config_hash(cfg: dict, command: str) -> str:
    payload = {k: v for k, v in cfg.items() if k not in UNHASHED}
    blob = json.dumps({"command": command, "config": payload, "csv_version": CSV_VERSION},
                      sort_keys=True, default=_format)
    return hashlib.sha256(blob.encode()).hexdigest()


# -- system and function construction -------------------------------------------------
def system_from_config(cfg: dict) -> CoefficientSystem:
    d = cfg.get("dim") or 1
    if cfg.get("builtin"):
        if cfg.get("drift") or cfg.get("sqdiff"):
            raise ConfigError("give either builtin or drift/sqdiff, not both")
        params = {k: cfg[k] for k in ("kappa", "c", "mbar", "sigma2") if cfg.get(k) is not None}
        try:
            return builtin(cfg["builtin"], params, d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.get("drift") is None or cfg.get("sqdiff") is None:
        raise ConfigError("a system needs builtin, or both drift and sqdiff")
    drift = [s.strip() for s in cfg["drift"].split(";")]
    sq = [s.strip() for s in cfg["sqdiff"].split(";")]
    if len(drift) != d or len(sq) != d:
        raise ConfigError(f"drift and sqdiff need {d} ';'-separated expressions")
    try:
        return CoefficientSystem(d, [parse_poly(s, d) for s in drift],
                                 [parse_poly(s, 1) for s in sq], name="custom")
    except PolySyntaxError as exc:
        raise ConfigError(f"expression error: {exc}") from None


def function_from_config(cfg: dict, d: int):
    spec = cfg.get("f") or "mean"
    scale = cfg.get("f_scale") or 1.0
    if spec in NAMED_FUNCTIONS:
        f = named_function(spec, d, k=cfg.get("f_k") or 1, scale=scale)
        return f
    try:
        f = as_test_function(spec, d)
    except PolySyntaxError as exc:
        raise ConfigError(f"field 'f': {exc}") from None
    if scale != 1.0:
        f = as_test_function(f.poly * scale)
    return f


def _noise(cfg) -> NoiseStream:
    return NoiseStream(cfg["seed"], 0)


def _point(cfg, d, key="x"):
    x = cfg.get(key)
    if x is None:
        return np.full(d, 0.5)
    if len(x) != d:
        raise ConfigError(f"field {key!r} needs {d} coordinates")
    return np.asarray(x, dtype=float)


# -- CSV ------------------------------------------------------------------------------
def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(_cell(u) for u in v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"# semireg csv v{CSV_VERSION}"])
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


# -- subcommands -------------------------------------------------------------------
def cmd_validate(cfg, sys_, out: Path):
    rep = validate(sys_)
    rows = [(v.invariant, v.coordinate, v.witness, v.value) for v in rep.violations]
    write_csv(out / "validation.csv", ["invariant", "coordinate", "witness", "value"], rows)
    print("admissible" if rep.admissible else "inadmissible")
    for v in rep.violations:
        print(f"  {v.invariant} (coordinate {v.coordinate}) at {v.witness}: {v.value!r}")
    return 0 if rep.admissible else 1


def cmd_constants(cfg, sys_, out: Path):
    rep = compute_constants(sys_, cfg["grid_points"] if sys_.dim > 1 else None)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "index", "value", "grid_resolution"])
    for name, idx, val in rep.rows():
        w.writerow([name, idx, repr(float(val)), rep.grid_resolution])
    (out / "constants.csv").write_text(f"# semireg csv v{CSV_VERSION}\n" + buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_flow(cfg, sys_, out: Path):
    x = _point(cfg, sys_.dim)
    t, order = cfg["t"], cfg["order"]
    if order not in (0, 1, 2):
        raise ConfigError("order must be 0, 1 or 2")
    r = flow(sys_, x, t, order, cfg["tol"])
    rep = compute_constants(sys_)
    b1 = math.exp(rep.lam[1] * t)
    b2 = second_order_bound(rep.lam[2], t)
    rows = []
    for j in range(sys_.dim):
        row = [j + 1, x[j], r.y[j]]
        if r.jac is not None:
            s1 = float(np.abs(r.jac[:, j]).sum())
            row += [s1, b1, s1 / b1]
        else:
            row += ["", "", ""]
        if r.hess is not None:
            s2 = float(np.abs(r.hess[:, :, j]).sum(axis=0).max())
            row += [s2, b2, s2 / b2 if b2 > 0 else (math.nan if s2 == 0 else math.inf)]
        else:
            row += ["", "", ""]
        rows.append(row)
    write_csv(out / "flow.csv", ["index", "x", "y", "jac_sum", "jac_bound", "jac_ratio",
                                 "hess_sum", "hess_bound", "hess_ratio"], rows)
    print(f"y = {[float(v) for v in r.y]} after {r.steps} steps, clamp {r.clamp!r}")
    return 0


def cmd_simulate1d(cfg, sys_, out: Path):
    a = parse_poly(cfg["a"], 1) if cfg.get("a") else sys_.sqdiff[0]
    x0 = cfg["x0"] if cfg.get("x0") is not None else 0.5
    if not 0.0 <= x0 <= 1.0:
        raise ConfigError("x0 must lie in [0, 1]")
    dt = cfg["dt"]

    def values(y):
        y = y[:, 0, 0]
        return np.stack([y, y * y, y ** 3, y ** 4, ((y == 0.0) | (y == 1.0)).astype(float)],
                        axis=1)

    sys1 = CoefficientSystem(1, [parse_poly("0", 1)], [a], name="diffusion1d")
    mean, se, stats = path_statistics(sys1, [[x0]], cfg["t"], dt, cfg["n_paths"], _noise(cfg),
                                      values, 5, cfg["workers"])
    n = stats.n
    m1 = mean[0]
    var = float(stats.m2[0] / max(n - 1, 1))
    mu4 = mean[3] - 4 * m1 * mean[2] + 6 * m1 ** 2 * mean[1] - 3 * m1 ** 4
    var_se = math.sqrt(max(mu4 - var * var, 0.0) / n)
    p = mean[4]
    rows = [("mean", m1, se[0]), ("variance", var, var_se),
            ("absorbed_fraction", p, math.sqrt(p * (1 - p) / n)), ("n_paths", float(n), 0.0)]
    write_csv(out / "ensemble.csv", ["stat", "value", "se"], rows)
    print(f"mean {float(m1)!r} +- {float(se[0])!r}, variance {var!r} +- {var_se!r}")
    return 0


def cmd_resolvent(cfg, sys_, out: Path):
    a = parse_poly(cfg["a"], 1) if cfg.get("a") else sys_.sqdiff[0]
    phi = as_test_function(cfg.get("phi") or "x1^2", 1)
    prop = Propagator1D(a, cfg["nodes"])
    m = cfg["m"] if cfg.get("m") is not None else 2
    rep = check_resolvent(a, min(m, 2), [phi], cfg.get("lam"), cfg["nodes"])
    lam = cfg.get("lam") or float(re.search(r"lambda=([^,]+)", rep.name).group(1))
    u = resolvent_solve(prop, phi, lam)
    write_csv(out / "resolvent.csv", ["node", "x", "value"],
              [(j, prop.x[j], u[j]) for j in range(prop.n_nodes)])
    e = rep.entries[0]
    print(f"resolvent lambda={lam!r}: |d^{min(m, 2)} J phi| = {e.observed!r} "
          f"<= {e.bound!r}: {'pass' if e.passed else 'FAIL'}")
    return 0 if rep.passed else 1


def cmd_estimate(cfg, sys_, out: Path):
    f = function_from_config(cfg, sys_.dim)
    x = _point(cfg, sys_.dim)
    dt = cfg["dt"] or cfg["t"] / 100.0 if cfg["t"] > 0 else 1.0
    alpha = tuple(cfg["alpha"]) if cfg.get("alpha") else None
    if alpha is None or not any(alpha):
        v, se = mc_estimate(sys_, f, x, cfg["t"], dt, cfg["n_paths"], _noise(cfg), cfg["workers"])
    else:
        h = cfg.get("h") or 0.05
        v, se = fd_derivative(sys_, f, x, cfg["t"], alpha, h, dt, cfg["n_paths"], _noise(cfg),
                              cfg["workers"])
    write_csv(out / "estimate.csv", ["stat", "value", "se"], [("value", v, se)])
    print(f"estimate {v!r} +- {se!r}")
    return 0


def cmd_trotter(cfg, sys_, out: Path):
    f = function_from_config(cfg, sys_.dim)
    grid = GridSpec.uniform(sys_.dim, cfg["grid_points"])
    res = trotter_compose(sys_, f, cfg["t"], cfg["n"], grid, cfg["interpolation"], record=True)
    res.result.to_csv(out / "trotter.csv")
    print(f"trotter n={cfg['n']}: sup {res.result.sup()!r}, "
          f"sup nonincreasing: {res.sup_nonincreasing}")
    return 0


def _certificate_rows(rep):
    for alpha, point, value, se, share in rep.rows():
        yield alpha, point, value, se, share


def cmd_certify(cfg, sys_, out: Path):
    f = function_from_config(cfg, sys_.dim)
    if cfg["m"] not in (0, 1, 2):
        raise ConfigError("certify supports m in {0, 1, 2}")
    rep = certify(sys_, f, cfg["m"], cfg["t"], cfg["budget"], cfg["n_paths"], cfg.get("dt"),
                  cfg.get("h"), _noise(cfg), workers=cfg["workers"])
    write_csv(out / "certificate.csv", ["alpha", "point", "value", "se", "bound_share"],
              _certificate_rows(rep))
    print(rep.verdict())
    return 0 if rep.passed else 1


def sweep_dimension(family: str, params: dict, dims, ms=(0, 1, 2), t: float = 0.5,
                    certify_m: int | None = 1, f=None, n_paths: int = 4096, dt: float = 2e-3,
                    budget: float = 1.5e9, noise: NoiseStream | None = None, workers: int = 1,
                    h=None):
    """Constants, bound factors and (budget permitting) a certificate per dimension.

    Returns rows ``(dim, m, lambda_m, mu_m, factor, estimate, pass)``; the
    last two are ``None`` except for ``m == certify_m``.
    """
    rows = []
    reports = {}
    for d in dims:
        sys_ = builtin(family, params, d)
        rep = compute_constants(sys_)
        cert = None
        if certify_m is not None:
            fd = f(d) if callable(f) and not hasattr(f, "derivative") else (f or named_function("mean", d))
            cert = certify(sys_, fd, certify_m, t, budget, n_paths, dt, h, noise, workers=workers,
                           constants=rep)
            reports[d] = cert
        for m in ms:
            fac = bound_factor(rep, m, t, "full")
            est = ok = None
            if cert is not None and m == certify_m:
                est, ok = cert.estimate, cert.passed
            rows.append((d, m, rep.lam[m], rep.mu[m], fac, est, ok))
    return rows, reports


def cmd_sweep(cfg, sys_, out: Path):
    if not cfg.get("builtin"):
        raise ConfigError("sweep needs a builtin family parameterized by dimension")
    params = {k: cfg[k] for k in ("kappa", "c", "mbar", "sigma2") if cfg.get(k) is not None}
    spec = cfg.get("f") or "mean"

    def f_for(d):
        return function_from_config({**cfg, "f": spec}, d)

    rows, reports = sweep_dimension(
        cfg["builtin"], params, cfg["dims"], cfg["ms"], cfg["t"], cfg["certify_m"], f_for,
        cfg["n_paths"], cfg["dt"], cfg["budget"], _noise(cfg), cfg["workers"], cfg.get("h"))
    write_csv(out / "sweep.csv", ["dim", "m", "lambda", "mu", "factor", "estimate", "pass"],
              [tuple("" if v is None else v for v in r) for r in rows])
    failed = [d for d, r in reports.items() if not r.passed]
    for r in reports.values():
        print(r.verdict())
    return 1 if failed else 0


COMMANDS = {
    "validate": cmd_validate, "constants": cmd_constants, "flow": cmd_flow,
    "simulate1d": cmd_simulate1d, "resolvent": cmd_resolvent, "estimate": cmd_estimate,
    "trotter": cmd_trotter, "certify": cmd_certify, "sweep": cmd_sweep,
}


# -- argument parsing -----------------------------------------------------------------
def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semireg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"semireg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file with [system] and [run] sections")
        sp.add_argument("--out", default="semireg-out", help="output directory")
        sp.add_argument("--builtin", choices=BUILTINS)
        for k in SYSTEM_KEYS + ALWAYS + USES[name]:
            if k == "builtin":
                continue
            sp.add_argument(_flag(k), dest=k, default=None, metavar=k.upper())
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cli = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
    try:
        file_cfg = read_config(args.config) if args.config else {}
        cfg = resolve(args.command, cli, file_cfg)
        if cfg["workers"] < 1:
            raise ConfigError("workers must be >= 1")
        sys_ = system_from_config(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, sys_, out)
    except ConfigError as exc:
        print(f"semireg: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, PolySyntaxError) as exc:
        print(f"semireg: error: {exc}", file=sys.stderr)
        return 2
    write_config(cfg, out / "config.ini")
    outputs = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
               for p in sorted(out.glob("*.csv"))}
    manifest = {
        "semireg_version": __version__, "csv_version": CSV_VERSION, "command": args.command,
        "config_hash": config_hash(cfg, args.command), "root_seed": cfg["seed"],
        "config": {k: v for k, v in cfg.items() if v is not None}, "outputs": outputs,
        "exit_code": code,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


def main() -> None:
    sys.exit(run())


__all__ = ["ConfigError", "build_parser", "read_config", "resolve", "run", "sweep_dimension",
           "write_config"]

if __name__ == "__main__":  # pragma: no cover
    main()

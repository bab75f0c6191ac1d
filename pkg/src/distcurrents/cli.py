"""Config-driven batch front end writing deterministic JSON reports.

Usage: ``distcurrents <command> [--config PATH] [--out PATH] [--seed U64] [--threads K]``.
Exit codes: 0 success, 2 validation failure, 3 degenerate input.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bnv import (
    Lattice,
    chain_rule_check,
    cylinder_lattice,
    ju_eval,
    strong_coarea_check,
    weak_coarea_check,
    zero_form,
)
from .currents import DifferentialForm, tu_component
from .distminor import div_minor, pointwise_minor_integral
from .errors import DegenerateInputError, InvalidArgumentError
from .exprdsl import evaluate, parse, parse_vector
from .extension import ExtensionProfile
from .multiindex import MultiIndex
from .fields import BoxGrid, SampledMap, lp_norm, mollify, read_dcf, sample, test_function, write_dcf
from .selftest import run_selftest
from .sobolev import NODE_BUDGET, SobolevParams, gagliardo

SCHEMA_VERSION = 1
COMMANDS = ("norm", "minor", "tu", "jacobian", "coarea", "chain", "strong-coarea", "vortex-demo", "selftest", "convergence")
EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 2, 3

log = logging.getLogger("distcurrents")

VORTEX_SOURCES = ("x1/sqrt(x1^2+x2^2)", "x2/sqrt(x1^2+x2^2)")
VORTEX_PSI = "bump(0,0;0.5)"

KEYS = {
    "domain": {"dim", "codim", "lower", "upper", "resolution"},
    "map": {"file", "mollify"} | {f"u{j}" for j in range(1, 4)},
    "test": {"psi", "alpha", "beta"},
    "run": {
        "seed", "samples", "threads", "extension", "vertical_resolution", "levels", "oracle",
        "quantity", "s", "p", "budget", "save_map", "export_csv", "export_level",
    },
    "F": {f"f{j}" for j in range(1, 4)},
    "form": None,  # keys are dx/dy monomials, checked when parsed
}


class ConfigError(InvalidArgumentError):
    pass


@dataclass
class RunConfig:
    n: int = 2
    N: int = 2
    lower: tuple = (-1.0, -1.0)
    upper: tuple = (1.0, 1.0)
    resolution: tuple = (64, 64)
    map_sources: tuple = VORTEX_SOURCES
    map_file: str | None = None
    mollify: float | None = None
    psi: str = VORTEX_PSI
    alpha: tuple = (1, 2)
    beta: tuple = (1, 2)
    F: tuple | None = None
    form: tuple = ()
    seed: int = 0
    samples: int = 256
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    extension: str = "averaging"
    vertical_resolution: int | None = None
    levels: tuple = ()
    oracle: str = "pointwise"
    quantity: str = "minor"
    s: float | None = None
    p: float = 2.0
    budget: int = NODE_BUDGET
    save_map: str | None = None
    export_csv: str | None = None
    export_level: tuple | None = None

    def echo(self) -> dict:
        """The configuration as reported; the thread count is left out so reports do not depend on it."""
        d = asdict(self)
        d.pop("threads")
        d["form"] = [list(map(list, t[:2])) + [t[2]] for t in self.form]
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _ints(v: str) -> tuple[int, ...]:
    v = _unquote(v)
    return tuple(int(x) for x in v.replace(" ", "").split(",") if x) if v else ()


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in _unquote(v).replace(" ", "").split(",") if x)


def _form_key(key: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """``dx1^dx3^dy2`` gives ``((1, 3), (2,))``; ``scalar`` is the 0-form."""
    if key == "scalar":
        return (), ()
    a, b = [], []
    for part in key.split("^"):
        part = part.strip()
        if part.startswith("dx") and part[2:].isdigit():
            a.append(int(part[2:]))
        elif part.startswith("dy") and part[2:].isdigit():
            b.append(int(part[2:]))
        else:
            raise ConfigError(f"bad form monomial {key!r}")
    if a != sorted(a) or b != sorted(b):
        raise ConfigError(f"form monomial {key!r} must list increasing indices")
    return tuple(a), tuple(b)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file; every expression and index is checked here."""
    cp = configparser.ConfigParser(delimiters=("=",), interpolation=None, comment_prefixes=("#",))
    cp.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for sec in cp.sections():
        if sec not in KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        allowed = KEYS[sec]
        for key in cp[sec]:
            if allowed is not None and key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    cfg = RunConfig()
    try:
        cfg = _fill(cfg, cp)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, InvalidArgumentError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg = replace(cfg, **{k: v})
    validate(cfg)
    return cfg


def _fill(cfg: RunConfig, cp: configparser.ConfigParser) -> RunConfig:
    kw: dict = {}
    d = cp["domain"] if cp.has_section("domain") else {}
    n = int(d.get("dim", cfg.n))
    N = int(d.get("codim", cfg.N))
    kw["n"], kw["N"] = n, N

    def per_axis(vals, default, cast):
        if not vals:
            return tuple(cast(default) for _ in range(n))
        if len(vals) == 1:
            return tuple(cast(vals[0]) for _ in range(n))
        if len(vals) != n:
            raise ConfigError(f"expected 1 or {n} values, got {len(vals)}")
        return tuple(cast(v) for v in vals)

    kw["lower"] = per_axis(_floats(d["lower"]) if "lower" in d else (), -1.0, float)
    kw["upper"] = per_axis(_floats(d["upper"]) if "upper" in d else (), 1.0, float)
    kw["resolution"] = per_axis(_ints(d["resolution"]) if "resolution" in d else (), 64, int)
    m = cp["map"] if cp.has_section("map") else {}
    comps = [_unquote(m[f"u{j}"]) for j in range(1, N + 1) if f"u{j}" in m]
    if "file" in m:
        kw["map_file"] = _unquote(m["file"])
        kw["map_sources"] = ()
    elif comps:
        if len(comps) != N:
            raise ConfigError(f"[map] needs u1..u{N}")
        kw["map_sources"] = tuple(comps)
    elif (n, N) != (2, 2):
        raise ConfigError("[map] must give the components u1..uN or a file")
    if "mollify" in m:
        kw["mollify"] = float(m["mollify"])
    t = cp["test"] if cp.has_section("test") else {}
    if "psi" in t:
        kw["psi"] = _unquote(t["psi"])
    if "alpha" in t:
        kw["alpha"] = _ints(t["alpha"])
    if "beta" in t:
        kw["beta"] = _ints(t["beta"])
    if cp.has_section("F"):
        F = cp["F"]
        kw["F"] = tuple(_unquote(F[f"f{j}"]) for j in range(1, N + 1) if f"f{j}" in F)
        if len(kw["F"]) != N:
            raise ConfigError(f"[F] needs f1..f{N}")
    if cp.has_section("form"):
        kw["form"] = tuple(_form_key(k) + (_unquote(v),) for k, v in cp["form"].items())
    r = cp["run"] if cp.has_section("run") else {}
    casts = {
        "seed": int, "samples": int, "threads": int, "vertical_resolution": int, "budget": int,
        "s": float, "p": float,
    }
    for key, cast in casts.items():
        if key in r:
            kw[key] = cast(_unquote(r[key]))
    for key in ("extension", "oracle", "quantity", "save_map", "export_csv"):
        if key in r:
            kw[key] = _unquote(r[key])
    if "levels" in r:
        kw["levels"] = _ints(r["levels"])
    if "export_level" in r:
        kw["export_level"] = _floats(r["export_level"])
    return replace(cfg, **kw)


def validate(cfg: RunConfig) -> None:
    if cfg.n not in (2, 3) or cfg.N not in (2, 3):
        raise ConfigError("dim and codim must be 2 or 3")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.samples < 1:
        raise ConfigError("samples must be >= 1")
    BoxGrid(cfg.lower, cfg.upper, cfg.resolution)
    if cfg.map_file is None:
        parse_vector(cfg.map_sources, cfg.n)
    elif not Path(cfg.map_file).exists():
        raise ConfigError(f"map file {cfg.map_file} not found")
    if cfg.mollify is not None and cfg.mollify <= 0:
        raise ConfigError("mollify radius must be positive")
    parse(cfg.psi, cfg.n, cfg.N)
    MultiIndex(cfg.alpha, cfg.n)
    MultiIndex(cfg.beta, cfg.N)
    if cfg.F is not None:
        parse_vector(cfg.F, cfg.N)
    if cfg.form:
        DifferentialForm.parse_terms(cfg.n, cfg.N, cfg.form)
    ExtensionProfile(cfg.extension, cfg.vertical_resolution)
    if cfg.quantity not in ("minor", "jacobian"):
        raise ConfigError("convergence quantity must be minor or jacobian")
    if cfg.oracle != "pointwise":
        parse(cfg.oracle, 0)
    if cfg.p < 1:
        raise ConfigError("p must be >= 1")
    if cfg.s is not None:
        SobolevParams(cfg.s, cfg.p)
    if cfg.budget < 2:
        raise ConfigError("budget must be >= 2")
    if cfg.export_level is not None and len(cfg.export_level) != cfg.N:
        raise ConfigError(f"export_level needs {cfg.N} values")


# --- pipeline --------------------------------------------------------------


def build_map(cfg: RunConfig, resolution=None) -> SampledMap:
    if cfg.map_file is not None:
        u = read_dcf(cfg.map_file)
        if u.grid.dim != cfg.n or u.codim != cfg.N:
            raise ConfigError("map file dimensions differ from [domain]")
    else:
        grid = BoxGrid(cfg.lower, cfg.upper, tuple(resolution or cfg.resolution))
        u = sample(parse_vector(cfg.map_sources, cfg.n), grid)
    if cfg.mollify is not None:
        u = mollify(u, cfg.mollify)
    return u


def _profile(cfg: RunConfig) -> ExtensionProfile:
    return ExtensionProfile(cfg.extension, cfg.vertical_resolution)


def _omega(cfg: RunConfig) -> DifferentialForm:
    """The form over ``Omega`` paired with ``[Ju]``: ``[form]`` terms without ``dy``, or ``psi``."""
    if cfg.form:
        if any(b for _, b, _ in cfg.form):
            raise ConfigError("[Ju] pairs with forms over Omega; drop the dy factors")
        return DifferentialForm.parse_terms(cfg.n, 0, cfg.form)
    if cfg.n != cfg.N:
        raise ConfigError("[form] is required when dim != codim")
    return zero_form(parse(cfg.psi, cfg.n), cfg.n)


def _grid_meta(u: SampledMap) -> dict:
    g = u.grid
    return {"lower": list(g.lower), "upper": list(g.upper), "resolution": list(g.resolution), "masked": u.masked_count}


def _minor_value(cfg, u, map_fn):
    psi = test_function(parse(cfg.psi, cfg.n), u.grid)
    return div_minor(u, cfg.alpha, cfg.beta, psi, _profile(cfg), map_fn)


def op_norm(cfg, map_fn):
    u = build_map(cfg)
    params = SobolevParams(cfg.s, cfg.p) if cfg.s is not None else SobolevParams.trace(cfg.p)
    semi = gagliardo(u, params, cfg.budget, map_fn)
    lp = lp_norm(u, params.p)
    return {
        "s": params.s, "p": params.p, "lp": lp, "seminorm": semi.value, "wsp": lp + semi.value,
        "subsampled": semi.subsampled, "stride": semi.stride, "nodes": semi.nodes, "grid": _grid_meta(u),
    }


def op_minor(cfg, map_fn):
    u = build_map(cfg)
    ev = _minor_value(cfg, u, map_fn)
    out = ev.as_dict()
    out["alpha"], out["beta"] = list(cfg.alpha), list(cfg.beta)
    out["grid"].update(_grid_meta(u))
    if cfg.oracle == "pointwise" and not u.masked_count:
        psi = test_function(parse(cfg.psi, cfg.n), u.grid)
        out["pointwise"] = pointwise_minor_integral(u, cfg.alpha, cfg.beta, psi)
    return out


def op_tu(cfg, map_fn):
    u = build_map(cfg)
    psi = parse(cfg.psi, cfg.n, cfg.N)
    val = tu_component(u, cfg.alpha, cfg.beta, psi, _profile(cfg), map_fn)
    return {
        "alpha": list(val.alpha), "beta": list(val.beta), "value": val.value, "route": val.route,
        "breakdown": {str(k): v for k, v in val.breakdown.items()}, "chain_term": val.chain_term,
        "masked": val.masked, "extension": cfg.extension, "grid": _grid_meta(u),
    }


def op_jacobian(cfg, map_fn):
    u = build_map(cfg)
    ev = ju_eval(u, _omega(cfg), _profile(cfg), map_fn)
    return {
        "value": ev.value, "breakdown": {str(k): v for k, v in ev.breakdown.items()}, "masked": ev.masked,
        "extension": cfg.extension, "grid": _grid_meta(u),
    }


def _export(cfg, lattice: Lattice, default_y) -> dict:
    if cfg.export_csv is None:
        return {}
    y = np.array(cfg.export_level if cfg.export_level is not None else default_y, dtype=float)
    cur = lattice.extract(y)
    cur.to_csv(cfg.export_csv)
    return {"export": {"path": cfg.export_csv, "level": y.tolist(), "size": cur.size, "measure": cur.measure()}}


def _check_dict(chk, u, cfg) -> dict:
    return {"lhs": chk.lhs, "rhs": chk.rhs, "relative_error": chk.error, "samples": cfg.samples, "seed": cfg.seed, "grid": _grid_meta(u)}


def op_coarea(cfg, map_fn):
    u = build_map(cfg)
    omega = _omega(cfg)
    out = _check_dict(weak_coarea_check(u, omega, cfg.samples, cfg.seed, _profile(cfg), map_fn), u, cfg)
    if cfg.export_csv is not None:
        psi = test_function(omega.terms[0].coefficient, u.grid)
        lattice, _ = cylinder_lattice(u, psi.support_box(pad=2), _profile(cfg))
        out.update(_export(cfg, lattice, lattice.range_ball()[0]))
    return out


def op_chain(cfg, map_fn):
    if cfg.F is None:
        raise ConfigError("chain needs an [F] section")
    u = build_map(cfg)
    F = parse_vector(cfg.F, cfg.N)
    out = _check_dict(chain_rule_check(u, F, _omega(cfg), cfg.samples, cfg.seed, _profile(cfg), map_fn), u, cfg)
    out["F"] = list(cfg.F)
    return out


def op_strong_coarea(cfg, map_fn):
    u = build_map(cfg)
    out = _check_dict(strong_coarea_check(u, cfg.samples, cfg.seed, map_fn), u, cfg)
    if cfg.export_csv is not None:
        lattice = Lattice(u.grid.axes(), u.values, 1)
        out.update(_export(cfg, lattice, lattice.range_ball()[0]))
    return out


def _vortex_cfg(cfg: RunConfig, explicit: bool) -> RunConfig:
    if explicit:
        return cfg
    return replace(cfg, resolution=(256, 256), map_sources=VORTEX_SOURCES, psi=VORTEX_PSI, alpha=(1, 2), beta=(1, 2))


def _psi_at_origin(cfg: RunConfig) -> float:
    return float(evaluate(parse(cfg.psi, cfg.n), [0.0] * cfg.n))


def op_vortex_demo(cfg, map_fn):
    u = build_map(cfg)
    ev = _minor_value(cfg, u, map_fn)
    target = math.pi * _psi_at_origin(cfg)
    return {
        "value": ev.value, "target": target, "relative_error": abs(ev.value - target) / abs(target),
        "breakdown": {str(k): v for k, v in ev.breakdown.items()}, "masked": ev.masked,
        "extension": ev.extension, "grid": _grid_meta(u),
    }


def op_selftest(cfg, map_fn):
    results = run_selftest()
    return {"properties": [r.as_dict() for r in results], "passed": all(r.passed for r in results)}


def convergence_series(cfg: RunConfig, levels, map_fn=map) -> dict:
    """One row per resolution: value, oracle, error and the empirical order against the previous row."""
    levels = list(levels)
    if len(levels) < 2:
        raise ConfigError("a convergence series needs at least 2 levels")
    if cfg.map_file is not None:
        raise ConfigError("a convergence series resamples the map and needs expressions")
    rows = []
    for res in levels:
        u = build_map(cfg, (res,) * cfg.n)
        if cfg.quantity == "minor":
            value = _minor_value(cfg, u, map_fn).value
        else:
            value = ju_eval(u, _omega(cfg), _profile(cfg), map_fn).value
        if cfg.oracle == "pointwise":
            if cfg.quantity != "minor":
                raise ConfigError("the pointwise oracle applies to minors")
            psi = test_function(parse(cfg.psi, cfg.n), u.grid)
            oracle = pointwise_minor_integral(u, cfg.alpha, cfg.beta, psi)
        else:
            oracle = float(parse(cfg.oracle, 0).evaluate_coords([]))
        rows.append({"resolution": res, "value": value, "oracle": oracle, "error": abs(value - oracle)})
    for prev, row in zip(rows, rows[1:]):
        if prev["error"] > 0 and row["error"] > 0:
            row["order"] = math.log(prev["error"] / row["error"]) / math.log(row["resolution"] / prev["resolution"])
        else:
            row["order"] = None
    rows[0]["order"] = None
    return {"quantity": cfg.quantity, "oracle": cfg.oracle, "rows": rows}


OPERATIONS = {
    "norm": op_norm,
    "minor": op_minor,
    "tu": op_tu,
    "jacobian": op_jacobian,
    "coarea": op_coarea,
    "chain": op_chain,
    "strong-coarea": op_strong_coarea,
    "vortex-demo": op_vortex_demo,
    "selftest": op_selftest,
}


def run(command: str, cfg: RunConfig, timing: bool = False) -> dict:
    """Execute ``command`` and return the report dictionary."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    start = time.perf_counter()
    results, tables = {}, {}
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        if command == "convergence":
            tables["convergence"] = convergence_series(cfg, cfg.levels, pool.map)
        else:
            results[command] = OPERATIONS[command](cfg, pool.map)
        if cfg.save_map is not None and command not in ("selftest", "convergence"):
            write_dcf(cfg.save_map, build_map(cfg))
    meta = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command}
    if timing:
        meta["wall_clock_s"] = time.perf_counter() - start
    return {"config": cfg.echo(), "results": results, "tables": tables, "meta": meta}


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _setup_logging() -> None:
    level = os.environ.get("DISTCURRENTS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="distcurrents", description="Distributional minors, currents and coarea checks.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI config file")
    ap.add_argument("--out", help="report path (default: stdout)")
    ap.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    ap.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    ap.add_argument("--levels", help="comma-separated resolutions for convergence")
    ap.add_argument("--timing", action="store_true", help="add wall-clock time to the report")
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        overrides = {"seed": args.seed, "threads": args.threads}
        if args.levels:
            overrides["levels"] = _ints(args.levels)
        cfg = load_config(args.config, overrides)
        if args.command == "vortex-demo":
            cfg = _vortex_cfg(cfg, args.config is not None)
        log.info("running %s on %s", args.command, cfg.resolution)
        report = run(args.command, cfg, args.timing)
    except DegenerateInputError as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InvalidArgumentError, NotImplementedError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.command == "selftest" and not report["results"]["selftest"]["passed"]:
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line front end.

One subcommand per experiment (periodic, julia, conley, perturb, hakim);
a single JSON config document carries the parameters and every flag is
an override of a config key.  Outputs are deterministic under a fixed
seed and each file embeds the config hash and tool version.

Exit codes: 0 ok, 2 config error, 3 infeasible construction.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .maps import PolyMap, Window, escape_radius
from . import conley, julia, orbits, periodic, perturb, reporting

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


class ConfigError(ValueError):
    pass


def _load_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"bad config file: {e}") from e
    for key, val in (args.override or []):
        cfg[key] = val
    if args.map:
        cfg["map"] = args.map
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    cfg.setdefault("seed", 0)
    return cfg


def _get_map(cfg):
    spec = cfg.get("map")
    if spec is None:
        raise ConfigError("no map given (use --map or config key 'map')")
    try:
        if isinstance(spec, dict):
            return PolyMap.from_json_dict(spec)
        with open(spec) as fh:
            return PolyMap.from_json_dict(json.load(fh))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"bad map spec: {e}") from e


def _get_window(cfg, n, key="window", default_half=2.0):
    w = cfg.get(key)
    if w is None:
        return Window.square(n, -default_half, default_half)
    try:
        return Window(bounds=tuple((float(lo), float(hi)) for lo, hi in w))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad window: {e}") from e


def _positive(cfg, key, default):
    v = cfg.get(key, default)
    try:
        v = type(default)(v)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {v!r}") from None
    if v <= 0:
        raise ConfigError(f"{key} must be positive")
    return v


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_periodic(args):
    cfg = _load_config(args)
    f = _get_map(cfg)
    window = _get_window(cfg, f.n)
    m_max = _positive(cfg, "m_max", 3)
    seeds = _positive(cfg, "seeds", 1024)
    tol = _positive(cfg, "tol", 1e-10)
    out = _outdir(args)
    rep = periodic.hyperbolicity_report(
        f, m_max, window, seeds=seeds, tol=tol, seed=int(cfg["seed"])
    )
    cycles = rep["cycles"]
    reporting.write_csv(os.path.join(out, "cycles.csv"),
                        periodic.cycles_to_csv(cycles, f.n), cfg)
    counts = {}
    for c in cycles:
        counts[c.klass] = counts.get(c.klass, 0) + 1
    reporting.write_json(os.path.join(out, "summary.json"), {
        "cycle_count": len(cycles),
        "by_class": counts,
        "all_hyperbolic": rep["all_hyperbolic"],
        "all_transverse": rep["all_transverse"],
        "fraction_hyperbolic": (
            sum(c.klass != "non_hyperbolic" for c in cycles) / len(cycles)
            if cycles else 1.0
        ),
        "seed": cfg["seed"],
    }, cfg)
    return EXIT_OK


def _parse_slice(cfg):
    s = cfg.get("slice")
    if s is None:
        return ()
    if isinstance(s, str):
        parts = [float(v) for v in s.split(",")]
    else:
        parts = [float(v) for v in s]
    return tuple(parts)


def cmd_julia(args):
    cfg = _load_config(args)
    f = _get_map(cfg)
    window = _get_window(cfg, f.n)
    res = _positive(cfg, "res", 512)
    n_max = _positive(cfg, "n_max", 200)
    m_max = _positive(cfg, "m_max", 6)
    seeds = _positive(cfg, "seeds", 2048)
    R = cfg.get("R")
    if R is None:
        try:
            R = escape_radius(f)
        except ValueError as e:
            raise ConfigError(f"supply R in config: {e}") from e
    fixed = _parse_slice(cfg)
    if f.n > 1 and len(fixed) != 2 * f.n - 2:
        raise ConfigError("n=2 grids need --slice re0,im0 for the other "
                          "coordinate")
    out = _outdir(args)
    grid = julia.escape_grid(f, window, res, n_max, float(R), fixed=fixed)
    boundary = julia.boundary_extract(grid)
    repellers = julia.repeller_cloud(f, m_max, window, seeds=seeds,
                                     seed=int(cfg["seed"]),
                                     include_saddles=f.n >= 2)
    reporting.write_pgm(os.path.join(out, "grid.pgm"),
                        julia.grid_to_pgm(grid), cfg)
    reporting.write_json(os.path.join(out, "grid.json"), {
        "res": grid.res, "n_max": n_max, "R": R,
        "bounded_cells": int((~grid.escaped).sum()),
        "escaped_cells": int(grid.escaped.sum()),
        "cellwidth": grid.cellwidth,
        "boundary_empty_warning": len(boundary) == 0,
        "seed": cfg["seed"],
    }, cfg)
    reporting.write_csv(os.path.join(out, "boundary.csv"),
                        julia.cloud_to_csv(boundary, f.n), cfg)
    reporting.write_csv(os.path.join(out, "repellers.csv"),
                        julia.cloud_to_csv(repellers, f.n), cfg)
    hd = None
    if len(boundary) and len(repellers):
        hd = julia.hausdorff(repellers, boundary)
    reporting.write_json(os.path.join(out, "hausdorff.json"), {
        "hausdorff": hd,
        "repeller_count": len(repellers),
        "boundary_count": len(boundary),
    }, cfg)
    return EXIT_OK


def cmd_conley(args):
    cfg = _load_config(args)
    f = _get_map(cfg)
    window = _get_window(cfg, f.n)
    depth = _positive(cfg, "depth", 5)
    spb = _positive(cfg, "samples_per_box", 8)
    m_max = _positive(cfg, "m_max", 3)
    pad_mode = cfg.get("pad_mode", "jacobian")
    petal = cfg.get("petal_threshold")
    out = _outdir(args)
    report, g, mg, recs = conley.hurley_report(
        f, window, depth, samples_per_box=spb, pad_mode=pad_mode,
        m_max=m_max, seed=int(cfg["seed"]),
        petal_threshold=petal,
    )
    reporting.write_dot(os.path.join(out, "morse.dot"),
                        conley.morse_to_dot(mg), cfg)
    mask = conley.recurrent_mask(mg)
    if mask.ndim == 2:
        reporting.write_pgm(os.path.join(out, "recurrent.pgm"),
                            julia.mask_to_pgm(mask), cfg)
    reporting.write_json(os.path.join(out, "hurley.json"), report, cfg)
    return EXIT_OK


def cmd_perturb(args):
    cfg = _load_config(args)
    f = _get_map(cfg)
    op = cfg.get("operation", "make_periodic")
    window = _get_window(cfg, f.n, key="K", default_half=2.0)
    budget = _positive(cfg, "budget", 30 if op == "escaping" else 8)
    out = _outdir(args)
    if op == "make_periodic":
        q = np.array([complex(re, im) for re, im in cfg.get("q", [[0.3, 0.0]])])
        m = _positive(cfg, "m", 1)
        kind = cfg.get("kind", "super_attracting")
        res = perturb.make_periodic_point(f, q, m, kind, window, budget)
        ver = {
            "kind": res["cycle"].klass,
            "period": res["cycle"].period,
            "multipliers": list(res["cycle"].multipliers),
            "expected_multipliers": list(res["expected_multipliers"]),
            "constraint_residual": res["correction"].constraint_residual,
            "sup_norm_on_K": res["correction"].sup_norm_on_K,
            "condition_number": res["correction"].condition_number,
        }
        produced = res["h"]
    elif op == "escaping":
        q = np.array([complex(re, im) for re, im in cfg.get("q", [[1.1, 0.0]])])
        radii = cfg.get("radii", [2.0, 3.0, 4.0, 5.0])
        eps = float(cfg.get("eps", 1.0))
        windows = [Window.square(f.n, -r, r) for r in radii]
        res = perturb.escaping_construction(f, q, windows, eps, budget,
                                            seed=int(cfg["seed"]))
        ver = {
            "m": res["m"],
            "stage_norms": res["stage_norms"],
            "total_norm_bound": res["total_norm_bound"],
            "witness_final_norm": float(np.abs(res["witness"][-1]).max()),
            "exits_last_window": not bool(
                windows[-1].contains(res["witness"][-1])
            ),
        }
        produced = res["h"]
    else:
        raise ConfigError(f"unknown perturb operation {op!r}")
    with open(os.path.join(out, "produced_map.json"), "w") as fh:
        json.dump(produced.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    reporting.write_json(os.path.join(out, "verification.json"), ver, cfg)
    return EXIT_OK


def cmd_hakim(args):
    cfg = _load_config(args)
    dim = int(cfg.get("dim", 1))
    start = cfg.get("start", [[-0.2, 0.0]] * dim)
    start = np.array([complex(re, im) for re, im in start])
    steps = _positive(cfg, "steps", 10_000)
    out = _outdir(args)
    rep = perturb.hakim_experiment(dim, start, steps=steps)
    lines = ["k,norm,k_times_norm\n"]
    norms = rep["orbit_norms"]
    kxn = rep["k_times_norm"]
    for k in range(1, len(norms)):
        lines.append(f"{k},{norms[k]:.12g},{kxn[k-1]:.12g}\n")
    reporting.write_csv(os.path.join(out, "decay.csv"), "".join(lines), cfg)
    reporting.write_json(os.path.join(out, "report.json"), {
        "dim": dim,
        "multipliers": list(rep["multipliers"]),
        "derivative_growth": {str(k): v
                              for k, v in rep["derivative_growth"].items()},
        "final_norm": float(norms[-1]),
    }, cfg)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser():
    p = argparse.ArgumentParser(
        prog="endolab",
        description="experiments on polynomial endomorphisms of C^n",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("periodic", cmd_periodic), ("julia", cmd_julia),
                     ("conley", cmd_conley), ("perturb", cmd_perturb),
                     ("hakim", cmd_hakim)):
        sp = sub.add_parser(name)
        sp.add_argument("--map", help="map spec JSON file")
        sp.add_argument("--config", help="config JSON file")
        sp.add_argument("--out", help="output directory (default: cwd)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--set", dest="override", nargs=2, action="append",
                        metavar=("KEY", "JSON"),
                        help="override a config key with a JSON value")
        sp.set_defaults(fn=fn)
    return p


def main(argv=None):
    p = _build_parser()
    args = p.parse_args(argv)
    if args.override:
        parsed = []
        for key, raw in args.override:
            try:
                parsed.append((key, json.loads(raw)))
            except json.JSONDecodeError:
                parsed.append((key, raw))
        args.override = parsed
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except perturb.InfeasibleError as e:
        stage = getattr(e, "stage", None)
        extra = f" (stage {stage})" if stage is not None else ""
        print(f"infeasible: {e}{extra}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: exact verification, scans, contour dumps, sampling
and benchmarks.

Each subcommand reads one flat JSON config (``--config``) overlaid by flags;
flags win. Exit codes: 0 success, 1 a check failed, 2 usage or config error.
Relative output paths are resolved against ``$PCA_ISING_OUTDIR`` when set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import contours, dynamics, mc, measures
from .hamiltonian import KernelKind, ModelParams, kind_for
from .lattice import BC, all_configs, build_geometry

OUTDIR_ENV = "PCA_ISING_OUTDIR"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

TV_COLUMNS = ("L", "bc", "kind", "J", "delta", "tv", "sqrt_delta", "tv_over_delta_L", "c1", "residual_first_order")
KP_COLUMNS = (
    "kind", "J", "delta", "a", "A", "x", "series", "threshold",
    "satisfied", "sufficient_A", "radius_window", "truncated_sum", "cutoff", "tail_bound",
)

MAX_VERIFY_L = 4

DEFAULTS = {
    "verify": {"L": 3, "J": 2.5, "delta": 1e-3, "kinds": [k.value for k in KernelKind], "seed": 0, "subset": 64},
    "tv-scan": {
        "L": [2, 3, 4], "J": 2.5, "kind": "rev", "bc": "plus",
        "delta_grid": {"lo": 1e-4, "hi": 1e-2, "per_decade": 5},
    },
    "kp-scan": {
        "J_grid": {"lo": 1.0, "hi": 3.0, "n": 201}, "deltas": [0.0, 1e-5, 1e-3],
        "kinds": [KernelKind.REVERSIBLE_PLUS.value, KernelKind.IRREVERSIBLE_PERIODIC.value], "cutoff": 64,
    },
    "contour-dump": {"L": 5, "bc": "plus", "kind": "rev", "flips": []},
    "sample": {
        "L": 16, "bc": "plus", "kind": "rev", "J": 0.6, "delta": 1e-3, "seed": 0, "sweeps": 1000,
        "burn_in": None, "init": "plus", "sampler": "pca", "workers": 1,
    },
    "bench": {"L": 256, "bc": "periodic", "kind": "rev", "J": 0.6, "delta": 1e-3, "seed": 0, "sweeps": 5, "workers": [1, 4]},
}

DEFAULT_OUT = {"tv-scan": "tv_scan.csv", "kp-scan": "kp_scan.csv", "sample": "trace.csv"}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _overlay(base: dict, layer: dict) -> dict:
    out = dict(base)
    if "delta" in layer or "q" in layer:
        # a layer naming either of the pair replaces both
        out.pop("delta", None)
        out.pop("q", None)
    out.update(layer)
    return out


def load_config(command: str, path: str | None, flags: dict) -> dict:
    """Defaults, then the JSON file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    if path is not None:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        if "delta" in file_cfg and "q" in file_cfg:
            raise ConfigError("give exactly one of delta and q")
        cfg = _overlay(cfg, file_cfg)
    cfg = _overlay(cfg, {k: v for k, v in flags.items() if v is not None})
    if "delta" in cfg and "q" in cfg:
        raise ConfigError("give exactly one of delta and q")
    return cfg


def _params(J, cfg: dict) -> ModelParams:
    try:
        if "q" in cfg and cfg["q"] is not None:
            return ModelParams.from_q(float(J), float(cfg["q"]))
        return ModelParams(float(J), float(cfg["delta"]))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _delta_values(cfg: dict) -> list[float]:
    if "q" in cfg:
        qs = cfg["q"] if isinstance(cfg["q"], list) else [cfg["q"]]
        return [math.exp(-2.0 * float(q)) for q in qs]
    if cfg.get("delta") is not None:
        ds = cfg["delta"] if isinstance(cfg["delta"], list) else [cfg["delta"]]
        return [float(d) for d in ds]
    grid = cfg.get("delta_grid")
    if not grid:
        raise ConfigError("no delta values given")
    return measures.delta_grid(float(grid["lo"]), float(grid["hi"]), int(grid.get("per_decade", 5))).tolist()


def _as_list(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _kind(cfg: dict) -> KernelKind:
    kind = cfg.get("kind", "rev")
    try:
        if kind in ("rev", "irrev"):
            bc = cfg.get("bc") or ("periodic" if kind == "irrev" else "plus")
            return kind_for(bc, kind == "rev")
        return KernelKind(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _geometry(L, bc):
    try:
        return build_geometry(int(L), bc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _out_path(cfg: dict, command: str) -> Path | None:
    out = cfg.get("out") or DEFAULT_OUT.get(command)
    if out is None:
        return None
    path = Path(out)
    base = os.environ.get(OUTDIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    if not path.parent.exists():
        raise ConfigError(f"output directory {path.parent} does not exist")
    return path


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _dump_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k != "out"}


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _check(name, value, tol, kind=None, bc=None, mode="le") -> dict:
    if mode == "le":
        passed = bool(value <= tol)
    elif mode == "gt":
        passed = bool(value > tol)
    else:
        passed = bool(value == tol)
    out = {"name": name, "value": value, "tol": tol, "passed": passed, "mode": mode}
    if kind is not None:
        out["kind"] = kind.value
    if bc is not None:
        out["bc"] = bc.value
    return out


def _class_additivity(g, sigmas, kind) -> int:
    conn = contours.connectivity_for(kind)
    worst = 0
    for s in sigmas:
        gamma = contours.extract_contour(g, s)
        total = np.array(gamma.vertex_classes(kind))
        parts = sum((np.array(c.vertex_classes(kind)) for c in contours.decompose(gamma, conn)), np.zeros_like(total))
        worst = max(worst, int(np.abs(parts - total).max()))
    return worst


def _geometry_checks(g, sigmas) -> list[dict]:
    bc = g.bc
    energy = max(abs(contours.energy_contour_identity(g, s)) for s in sigmas)
    checks = [_check("contour-energy", energy, 0, bc=bc, mode="eq")]
    if len(sigmas) == 2**g.n_sites:
        images = len(contours.contour_images(g))
        expected = 2**g.n_sites // contours.image_multiplicity(g)
        checks.append(_check("contour-map", images, expected, bc=bc, mode="eq"))
    return checks


def verify_report(cfg: dict) -> dict:
    """Run the exact suite and return the report (no I/O)."""
    L = int(cfg["L"])
    if not 2 <= L <= MAX_VERIFY_L:
        raise ConfigError(f"verify needs 2 <= L <= {MAX_VERIFY_L}, got L={L}")
    p = _params(cfg["J"], cfg)
    if p.delta == 0:
        raise ConfigError("verify needs delta > 0")
    try:
        kinds = [KernelKind(k) for k in _as_list(cfg["kinds"])]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not kinds:
        raise ConfigError("no kinds to verify")
    full = L <= 3
    n = L * L
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    subset = None
    if not full:
        # random configurations plus the heavy ones: all plus and its single flips
        picks = rng.choice(2**n, size=min(int(cfg["subset"]), 2**n), replace=False)
        subset = np.union1d(picks, [0] + [1 << i for i in range(n)])
    S = all_configs(n)
    sigmas = S if full else S[subset]

    checks: list[dict] = []
    skipped: list[dict] = []
    done_bc = set()
    for kind in kinds:
        if kind.bc is BC.PERIODIC and L < 3:
            skipped.append({"kind": kind.value, "reason": "periodic boxes need L >= 3"})
            continue
        g = build_geometry(L, kind.bc)
        if g.bc not in done_bc:
            checks += _geometry_checks(g, sigmas)
            done_bc.add(g.bc)
        checks.append(_check("factorization", measures.factorization_residual(g, p, kind, sigmas), 1e-12, kind))
        db, pair = dynamics.detailed_balance_residual(g, p, kind, subset)
        if kind.reversible:
            checks.append(_check("detailed-balance", db, 1e-12, kind))
        else:
            c = _check("irreversibility-witness", db, 1e-12, kind, mode="gt")
            c["pair"] = list(pair)
            checks.append(c)
        checks.append(_check("stationarity", dynamics.stationarity_residual(g, p, kind, subset), 1e-10, kind))
        if not kind.reversible:
            dbr = dynamics.dynamical_balance_residual(g, p)
            checks.append(_check("dynamical-balance", float(np.max(dbr)), 1e-12, kind))
        if full:
            gap = np.abs(
                dynamics.transition_matrix(g, p, kind, "product") - dynamics.transition_matrix(g, p, kind, "boltzmann")
            ).max()
            checks.append(_check("kernel-forms", float(gap), 1e-12, kind))
        checks.append(_check("class-additivity", _class_additivity(g, sigmas, kind), 0, kind, mode="eq"))
        for k in (1, 2):
            spin = contours.spin_side_partition(g, k, p.J, p.delta, kind)
            cont = contours.contour_partition(g, k, p.J, p.delta, kind)
            checks.append(_check(f"contour-gas-k{k}", abs(cont - spin) / spin, 1e-10, kind))
        tv = measures.tv_distance(measures.pca_measure(g, p, kind), measures.gibbs_measure(g, p.J))
        bound = math.sqrt(measures.delta_functional(g, p, kind))
        c = _check("tv-bound", tv - bound, 0.0, kind, mode="le")
        c.update(tv=tv, sqrt_delta=bound)
        checks.append(c)

    failed = sorted({c["name"] for c in checks if not c["passed"]})
    return {"config": _echo(cfg), "checks": checks, "skipped": skipped, "failed": failed, "passed": not failed}


def cmd_verify(cfg: dict) -> int:
    report = verify_report(cfg)
    _dump_json(report, _out_path(cfg, "verify"))
    if report["failed"]:
        print("failed checks: " + ", ".join(report["failed"]), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

def tv_rows(cfg: dict) -> list[dict]:
    kind = _kind(cfg)
    Ls = [int(x) for x in _as_list(cfg["L"])]
    Js = [float(x) for x in _as_list(cfg["J"])]
    deltas = _delta_values(cfg)
    if not Ls or not Js or not deltas:
        raise ConfigError("empty grid")
    if max(Ls) > MAX_VERIFY_L:
        raise ConfigError(f"exact tables need L <= {MAX_VERIFY_L}")
    rows = []
    for L in Ls:
        g = _geometry(L, kind.bc)
        for J in Js:
            c1 = measures.first_order_coefficient(g, J, kind)
            gibbs = measures.gibbs_measure(g, J)
            for d in deltas:
                p = _params(J, {"delta": d})
                tv = measures.tv_distance(measures.pca_measure(g, p, kind), gibbs)
                rows.append({
                    "L": L, "bc": g.bc.value, "kind": kind.value, "J": J, "delta": d, "tv": tv,
                    "sqrt_delta": math.sqrt(measures.delta_functional(g, p, kind)),
                    "tv_over_delta_L": tv / (d * L) if d > 0 else math.nan,
                    "c1": c1,
                    "residual_first_order": measures.first_order_residual(g, J, d, kind, 1, c1),
                })
    return rows


def cmd_tv_scan(cfg: dict) -> int:
    rows = tv_rows(cfg)
    path = _out_path(cfg, "tv-scan")
    _write_csv(path, TV_COLUMNS, rows)
    _dump_json({"config": _echo(cfg), "columns": list(TV_COLUMNS), "rows": len(rows)}, path.with_suffix(".json"))
    return EXIT_OK


def _j_values(cfg: dict) -> list[float]:
    if cfg.get("J") is not None:
        return [float(x) for x in _as_list(cfg["J"])]
    grid = cfg["J_grid"]
    n = int(grid["n"])
    if n < 1:
        raise ConfigError("empty J grid")
    return np.linspace(float(grid["lo"]), float(grid["hi"]), n).tolist()


def kp_rows(cfg: dict) -> list[dict]:
    Js = _j_values(cfg)
    deltas = [float(d) for d in _as_list(cfg["deltas"])]
    if "kind" in cfg:
        kinds = [_kind(cfg)]
    else:
        kinds = [KernelKind(k) for k in _as_list(cfg["kinds"])]
    if not deltas or not kinds:
        raise ConfigError("empty grid")
    rows = []
    for kind in kinds:
        for d in deltas:
            for J in Js:
                rows.append(contours.kp_check(J, d, kind, int(cfg["cutoff"])).as_dict())
    return rows


def cmd_kp_scan(cfg: dict) -> int:
    rows = kp_rows(cfg)
    path = _out_path(cfg, "kp-scan")
    _write_csv(path, KP_COLUMNS, rows)
    side = {
        "config": _echo(cfg),
        "columns": list(KP_COLUMNS),
        "rows": len(rows),
        "window_crossing_J_delta0": contours.window_crossing(0.0),
        "window_threshold_J": contours.radius_threshold_J(),
    }
    _dump_json(side, path.with_suffix(".json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# contours, sampling, benchmark
# ---------------------------------------------------------------------------

def _configuration(g, cfg: dict) -> np.ndarray:
    if cfg.get("sigma") is not None:
        s = np.asarray(cfg["sigma"], dtype=np.int8).ravel()
        if s.shape != (g.n_sites,) or not np.all(np.abs(s) == 1):
            raise ConfigError(f"sigma must list {g.n_sites} spins of +-1")
        return s
    s = np.ones(g.n_sites, dtype=np.int8)
    for rc in cfg.get("flips") or []:
        r, c = (int(v) for v in rc)
        if not (0 <= r < g.L and 0 <= c < g.L):
            raise ConfigError(f"flip {rc} outside the box")
        s[g.site(r, c)] = -1
    return s


def cmd_contour_dump(cfg: dict) -> int:
    kind = _kind(cfg)
    g = _geometry(cfg["L"], kind.bc)
    dump = contours.contour_dump(g, _configuration(g, cfg), kind)
    dump["config"] = _echo(cfg)
    _dump_json(dump, _out_path(cfg, "contour-dump"))
    return EXIT_OK


def cmd_sample(cfg: dict) -> int:
    kind = _kind(cfg)
    g = _geometry(cfg["L"], kind.bc)
    sweeps = int(cfg["sweeps"])
    if sweeps < 1:
        raise ConfigError("sweeps must be >= 1")
    sampler = cfg["sampler"]
    init = cfg["init"] if isinstance(cfg["init"], str) else np.asarray(cfg["init"])
    if sampler == "pca":
        p = _params(cfg["J"], cfg)
        trace = mc.run_pca(g, p, kind, sweeps, cfg["burn_in"], int(cfg["seed"]), init, int(cfg["workers"]))
    elif sampler == "glauber":
        trace = mc.run_glauber(g, float(cfg["J"]), sweeps, cfg["burn_in"], int(cfg["seed"]), init)
    else:
        raise ConfigError(f"unknown sampler {sampler!r}")
    path = _out_path(cfg, "sample")
    trace.write_csv(path)
    trace.meta["config"] = _echo(cfg)
    for name in ("m", "e"):
        mean, err = trace.mean(name) if len(trace) >= mc.N_BATCHES else (float(np.mean(getattr(trace, name))), math.nan)
        trace.meta[f"{name}_mean"], trace.meta[f"{name}_err"] = mean, err
    trace.write_meta(path.with_suffix(".json"))
    return EXIT_OK


def cmd_bench(cfg: dict) -> int:
    kind = _kind(cfg)
    g = _geometry(cfg["L"], kind.bc)
    p = _params(cfg["J"], cfg)
    workers = [int(w) for w in _as_list(cfg["workers"])]
    if not workers or min(workers) < 1:
        raise ConfigError("workers must be positive")
    report = mc.bench_sweep(g, p, kind, workers, int(cfg["sweeps"]), int(cfg["seed"]))
    report["config"] = _echo(cfg)
    _dump_json(report, _out_path(cfg, "bench"))
    return EXIT_OK if report["identical"] else EXIT_FAIL


COMMANDS = {
    "verify": cmd_verify,
    "tv-scan": cmd_tv_scan,
    "kp-scan": cmd_kp_scan,
    "contour-dump": cmd_contour_dump,
    "sample": cmd_sample,
    "bench": cmd_bench,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pca-ising", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--L", type=int)
        sp.add_argument("--bc", choices=[b.value for b in BC])
        sp.add_argument("--kind", choices=["rev", "irrev"])
        sp.add_argument("--J", type=float)
        pair = sp.add_mutually_exclusive_group()
        pair.add_argument("--delta", type=float)
        pair.add_argument("--q", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--sweeps", type=int)
        sp.add_argument("--out", metavar="PATH")
        if name == "sample":
            sp.add_argument("--sampler", choices=["pca", "glauber"])
            sp.add_argument("--burn-in", dest="burn_in", type=int)
            sp.add_argument("--workers", type=int)
        if name == "bench":
            sp.add_argument("--workers", type=int, nargs="+")
    return parser


def _flags(ns: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    # verify runs a list of kinds; --kind/--bc narrow it to one
    if ns.command == "verify" and (ns.kind is not None or ns.bc is not None):
        flags["kinds"] = [_kind({"kind": ns.kind or "rev", "bc": ns.bc}).value]
        flags.pop("kind")
        flags.pop("bc")
    return flags


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(ns.command, ns.config, _flags(ns))
        return COMMANDS[ns.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

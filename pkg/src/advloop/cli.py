"""Command line entry point: ``advloop <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

log = logging.getLogger("advloop")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
METRIC_COLUMNS = ["scenario", "condition", "seed", "config_hash", "trace_digest", "ap", "recall", "min_ade",
                  "mean_ade", "plan_lat", "plan_jerk", "drive_lat", "drive_jerk", "cost"]


class ConfigError(Exception):
    """Bad arguments or missing inputs (exit code 2)."""


# ------------------------------------------------------------------ helpers

def _asset_dir(args) -> Path | None:
    d = getattr(args, "assets", None) or os.environ.get("ADVLOOP_ASSET_DIR")
    return Path(d) if d else None


def _library(args):
    from .shape.vehicles import AssetLibrary

    d = _asset_dir(args)
    if d is None:
        return AssetLibrary.default()
    if not (d / "library.json").exists():
        raise ConfigError(f"asset directory {d} has no library.json (run gen-assets first)")
    return AssetLibrary.from_dir(d)


def _scenarios(names: list[str] | None):
    """Resolve --scenario values: bundled names, 'all', 'nominal' or JSON paths."""
    from .sim.scenario import Scenario, ScenarioError
    from .sim.suite import bundled_suite, nominal_empty_road

    if not names:
        raise ConfigError("at least one --scenario is required")
    suite = {s.name: s for s in bundled_suite()}
    nominal = nominal_empty_road()
    out = []
    for name in names:
        if name == "all":
            out.extend(suite.values())
        elif name in suite:
            out.append(suite[name])
        elif name in (nominal.name, "nominal"):
            out.append(nominal)
        else:
            p = Path(name)
            if not p.exists():
                raise ConfigError(f"unknown scenario {name!r}: not a bundled name and no such file")
            try:
                out.append(Scenario.load(p))
            except (ScenarioError, ValueError, KeyError) as exc:
                raise ConfigError(f"{p}: invalid scenario file: {exc}") from exc
    return out


def _scenario_digest(scenario) -> str:
    return hashlib.sha256(json.dumps(scenario.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _basis(args, library):
    from .protocol import BASIS_FILE, load_or_fit_basis
    from .shape.basis import ShapeBasis

    if args.basis:
        p = Path(args.basis)
        if not p.exists():
            raise ConfigError(f"basis file {p} does not exist")
        try:
            return ShapeBasis.load(p), hashlib.sha256(p.read_bytes()).hexdigest()[:16]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    d = _asset_dir(args)
    cache = d / BASIS_FILE if d is not None else None
    basis = load_or_fit_basis(cache, library)
    blob = cache.read_bytes() if cache is not None and cache.exists() else _basis_bytes(basis)
    return basis, hashlib.sha256(blob).hexdigest()[:16]


def _basis_bytes(basis) -> bytes:
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "b.bin"
        basis.save(p)
        return p.read_bytes()


def _episode_config(args):
    from .adversary.objective import PRESETS
    from .loop.episode import EpisodeConfig

    weights = PRESETS[args.objective]
    return EpisodeConfig(duration=args.duration, actor_mode=args.actors_mode, seed=args.seed,
                         objective=args.objective, weights=weights)


def _header(cfg_hash: str, seed: int) -> str:
    return f"config_hash={cfg_hash} seed={seed}"


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _write_metrics(out: Path, rows: list[dict], cfg_hash: str, seed: int) -> None:
    from .report import write_rows_csv

    write_rows_csv(rows, out / "metrics.csv", METRIC_COLUMNS)
    _write_json(out / "metrics.json", {"config_hash": cfg_hash, "seed": seed, "rows": rows})


# ------------------------------------------------------------------ subcommands

def cmd_gen_assets(args) -> int:
    from .shape.vehicles import AssetLibrary
    from .sim.suite import write_suite

    out = Path(args.out) if args.out else _asset_dir(args)
    if out is None:
        raise ConfigError("gen-assets needs --out or ADVLOOP_ASSET_DIR")
    lib = AssetLibrary.default(args.per_class, args.seed)
    lib.save(out)
    paths = write_suite(out / "scenarios")
    cfg = {"command": "gen-assets", "per_class": args.per_class, "seed": args.seed}
    _write_json(out / "assets_meta.json", {"config_hash": _hash(cfg), "seed": args.seed, "n_assets": len(lib),
                                           "scenarios": [p.name for p in paths]})
    print(f"wrote {len(lib)} assets and {len(paths)} scenarios to {out}")
    return EXIT_OK


def cmd_fit_basis(args) -> int:
    from .shape.basis import fit_library_basis

    if args.k < 1:
        raise ConfigError("K must be >= 1")
    if args.resolution < 4:
        raise ConfigError("resolution must be >= 4")
    library = _library(args)
    if len(library) < args.k + 1:
        raise ConfigError(f"need at least K+1={args.k + 1} assets, library has {len(library)}")
    basis = fit_library_basis(library, args.k, args.resolution)
    out = Path(args.out) if args.out else (_asset_dir(args) or Path(".")) / "basis.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    basis.save(out)
    cfg = {"command": "fit-basis", "k": args.k, "resolution": args.resolution, "assets": library.ids(),
           "seed": args.seed}
    var = basis.explained_variance
    report = {"config_hash": _hash(cfg), "seed": args.seed, "k": basis.k, "resolution": basis.resolution,
              "canonical_scale": basis.canonical_scale, "explained_variance": var.tolist(),
              "variance_non_increasing": bool(np.all(np.diff(var) <= 0)),
              "latent_lo": basis.latent_lo.tolist(), "latent_hi": basis.latent_hi.tolist(),
              "sha256": hashlib.sha256(out.read_bytes()).hexdigest()}
    _write_json(out.with_suffix(".json"), report)
    print(f"basis K={basis.k} R={basis.resolution} -> {out}")
    return EXIT_OK


def _hash(cfg: dict) -> str:
    from .optim.search import config_hash

    return config_hash(cfg)


def _simulate_one(job) -> dict:
    from .loop.trace_io import save_trace
    from .adversary.objective import write_step_costs
    from .protocol import metrics_row
    from .optim import EpisodeObjective

    scenario, mode, episode, library, out, cfg_hash = job
    objective = EpisodeObjective(scenario, [], mode, episode, library)
    trace = objective.run({}, keep_clouds=True)
    if trace.aborted:
        raise RuntimeError(f"{scenario.name}: episode aborted: {trace.error}")
    d = out / scenario.name
    save_trace(trace, d / "trace", {"config_hash": cfg_hash, "seed": episode.seed})
    write_step_costs(trace.step_costs, d / "step_costs.csv")
    row = metrics_row(scenario.name, f"original-{mode}" if mode == "open" else "original", trace, episode.seed,
                      cfg_hash)
    _write_metrics(d, [row], cfg_hash, episode.seed)
    return row


def cmd_simulate(args) -> int:
    scenarios = _scenarios(args.scenario)
    library = _library(args)
    episode = _episode_config(args)
    out = Path(args.out)
    cfg = {"command": "simulate", "scenarios": {s.name: _scenario_digest(s) for s in scenarios},
           "mode": args.mode, "episode": _episode_dict(episode), "library": library.ids()}
    cfg_hash = _hash(cfg)
    jobs = [(s, args.mode, episode, library, out, cfg_hash) for s in scenarios]
    rows = _map(_simulate_one, jobs, args.jobs)
    for r in rows:
        print(f"{r['scenario']}: cost={r['cost']:.3f} AP={_pct(r['ap'])} recall={_pct(r['recall'])}")
    return EXIT_OK


def _episode_dict(episode) -> dict:
    d = asdict(episode)
    return d


def _pct(v) -> str:
    return "n/a" if v is None else f"{100 * v:.1f}"


def _map(fn, jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


def _attack_one(job) -> dict:
    from .adversary.objective import write_step_costs
    from .loop.trace_io import save_trace
    from .optim import AttackConfig, write_history
    from .protocol import attack_scenario, closed_loop_trace, metrics_row
    from .shape.mesh import write_obj

    scenario, attack_cfg, basis, library, mode, m, episode, out, cfg_hash = job
    d = out / scenario.name
    d.mkdir(parents=True, exist_ok=True)
    seed = attack_cfg.seed
    header = _header(cfg_hash, seed)
    run = attack_scenario(scenario, attack_cfg, basis, library, mode, m, episode,
                          checkpoint=d / "checkpoint.json" if attack_cfg.algorithm == "bo" else None)
    write_history(run.result, d / "history.csv", cfg_hash)
    overrides = run.best_overrides()
    for aid, mesh in overrides.items():
        write_obj(mesh, d / f"best_{aid}.obj", header=f"{header} scenario={scenario.name} actor={aid}")
    base = closed_loop_trace(scenario, {}, library, episode)
    adv = closed_loop_trace(scenario, overrides, library, episode, keep_clouds=True)
    if base.aborted or adv.aborted:
        raise RuntimeError(f"{scenario.name}: evaluation episode aborted")
    save_trace(adv, d / "trace", {"config_hash": cfg_hash, "seed": seed, "condition": f"adv-{mode}"})
    write_step_costs(adv.step_costs, d / "step_costs.csv")
    rows = [metrics_row(scenario.name, "original", base, seed, cfg_hash),
            metrics_row(scenario.name, f"adv-{mode}", adv, seed, cfg_hash)]
    _write_metrics(d, rows, cfg_hash, seed)
    best = run.result.best
    summary = {"config_hash": cfg_hash, "seed": seed, "scenario": scenario.name, "targets": run.targets,
               "mode": mode, "actors": m, "dim": run.result.dim, "attack": attack_cfg.to_dict(),
               "best_cost": run.result.best_cost, "best_index": None if best is None else best.index,
               "best_point": None if best is None else list(best.point),
               "failed_queries": sum(q.failed for q in run.result.history)}
    _write_json(d / "attack.json", summary)
    if (d / "checkpoint.json").exists():
        (d / "checkpoint.json").unlink()
    return {"scenario": scenario.name, "best_cost": run.result.best_cost, "rows": rows}


def _attack_config(args):
    from .optim import AttackConfig

    try:
        return AttackConfig(args.algorithm, args.budget, args.init, args.beta, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_attack(args) -> int:
    from .optim import select_target_actors

    scenarios = _scenarios(args.scenario)
    attack_cfg = _attack_config(args)
    library = _library(args)
    episode = _episode_config(args)
    if args.actors < 1:
        raise ConfigError("--actors must be >= 1")
    for s in scenarios:
        try:
            select_target_actors(s, args.actors)
        except ValueError as exc:
            raise ConfigError(f"{s.name}: {exc}") from exc
    basis, basis_id = (None, None) if attack_cfg.algorithm == "bruteforce" else _basis(args, library)
    if attack_cfg.algorithm == "grid" and basis.code_dim * args.actors > attack_cfg.grid_max_dim:
        raise ConfigError(f"grid search refused for dimension {basis.code_dim * args.actors}")
    out = Path(args.out)
    rows = []
    jobs = []
    for s in scenarios:
        cfg = {"command": "attack", "scenario": s.name, "scenario_digest": _scenario_digest(s),
               "attack": attack_cfg.to_dict(), "mode": args.mode, "actors": args.actors,
               "episode": _episode_dict(episode), "basis": basis_id, "library": library.ids()}
        jobs.append((s, attack_cfg, basis, library, args.mode, args.actors, episode, out, _hash(cfg)))
    for res in _map(_attack_one, jobs, args.jobs):
        rows.extend(res["rows"])
        print(f"{res['scenario']}: best cost {res['best_cost']:.3f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    """Closed-loop evaluation of the best shapes stored in attack result directories."""
    from .adversary.objective import write_step_costs
    from .loop.trace_io import save_trace
    from .protocol import closed_loop_trace, metrics_row
    from .shape.mesh import read_obj

    library = _library(args)
    episode = _episode_config(args)
    suite = {}
    for res in args.results:
        d = Path(res)
        meta_path = d / "attack.json"
        if not meta_path.exists():
            raise ConfigError(f"{d} is not an attack result directory (no attack.json)")
        meta = json.loads(meta_path.read_text())
        if not suite:
            suite = {s.name: s for s in _scenarios(["all"])}
        scenario = suite.get(meta["scenario"])
        if scenario is None:
            scenario = _scenarios([args.scenario[0]])[0] if args.scenario else None
        if scenario is None:
            raise ConfigError(f"{d}: scenario {meta['scenario']!r} not found; pass --scenario")
        overrides = {}
        for aid in meta["targets"]:
            p = d / f"best_{aid}.obj"
            if not p.exists():
                raise ConfigError(f"{d}: missing best shape {p.name}")
            overrides[aid] = read_obj(p)
        trace = closed_loop_trace(scenario, overrides, library, episode, keep_clouds=True)
        if trace.aborted:
            raise RuntimeError(f"{scenario.name}: evaluation episode aborted: {trace.error}")
        cond = f"eval-adv-{meta['mode']}"
        cfg_hash, seed = meta["config_hash"], meta["seed"]
        save_trace(trace, d / "eval_trace", {"config_hash": cfg_hash, "seed": seed, "condition": cond})
        write_step_costs(trace.step_costs, d / "eval_step_costs.csv")
        row = metrics_row(scenario.name, cond, trace, seed, cfg_hash)
        _write_metrics_append(d, row, cfg_hash, seed)
        print(f"{d}: {cond} AP={_pct(row['ap'])} cost={row['cost']:.3f}")
    return EXIT_OK


def _write_metrics_append(d: Path, row: dict, cfg_hash: str, seed: int) -> None:
    from .report import read_rows_csv

    rows = []
    if (d / "metrics.json").exists():
        rows = [r for r in json.loads((d / "metrics.json").read_text())["rows"] if r["condition"] != row["condition"]]
    elif (d / "metrics.csv").exists():
        rows = read_rows_csv(d / "metrics.csv")
    _write_metrics(d, rows + [row], cfg_hash, seed)


def cmd_report(args) -> int:
    from .loop.trace_io import TraceError, load_index
    from .optim import read_history
    from .report import (bev_svg, curve_svg, median_table, paired_rows, save_text, worst_tick,
                         write_rows_csv)

    out = Path(args.out)
    rows, curves = [], {}
    result_dirs = []
    for res in args.results:
        base = Path(res)
        if not base.exists():
            raise ConfigError(f"result directory {base} does not exist")
        # a directory either is a scenario result or holds one per scenario
        found = [base] if (base / "metrics.json").exists() else sorted(
            p for p in base.iterdir() if (p / "metrics.json").exists())
        if not found:
            raise ConfigError(f"{base}: no metrics.json found")
        result_dirs.extend(found)
    metas = []
    for d in result_dirs:
        m = json.loads((d / "metrics.json").read_text())
        rows.extend(m["rows"])
        metas.append((m["config_hash"], m["seed"]))
        if (d / "history.csv").exists():
            header, hist = read_history(d / "history.csv")
            label = f"{d.name}/{json.loads((d / 'attack.json').read_text())['mode']}" if (
                d / "attack.json").exists() else d.name
            curves[label] = np.array([float(r["best_so_far"]) for r in hist])
        trace_dir = d / "trace"
        if not (trace_dir / "trace.json").exists():
            raise ConfigError(f"{d}: missing trace (trace/trace.json)")
        try:
            index = load_index(trace_dir)
        except TraceError as exc:
            raise ConfigError(str(exc)) from exc
        k = worst_tick(index)
        meta = {"config_hash": index["meta"].get("config_hash", ""), "seed": index["meta"].get("seed", "")}
        save_text(out / "bev" / f"{d.parent.name}_{d.name}_tick{k:02d}.svg",
                  bev_svg(index["ticks"][k], title=f"{d.name} tick {k} (worst C_t)", meta=meta))
    report_hash = _hash({"command": "report", "inputs": sorted(set(metas))})
    seeds = sorted({s for _, s in metas})
    meta = {"config_hash": report_hash, "seed": ",".join(map(str, seeds))}
    rows = paired_rows(rows)
    write_rows_csv(rows, out / "rows.csv", METRIC_COLUMNS)
    metrics = ("ap", "recall", "min_ade", "mean_ade", "plan_lat", "plan_jerk", "drive_lat", "drive_jerk", "cost")
    table = median_table(rows, metrics)
    for r in table:
        r.update(meta)
    write_rows_csv(table, out / "summary.csv", ["condition", "n_scenarios", *metrics, "config_hash", "seed"])
    if curves:
        save_text(out / "best_so_far.svg", curve_svg(curves, "best-so-far episode cost", meta))
    _write_json(out / "report.json", {**meta, "rows": rows, "summary": table})
    print(f"report: {len(rows)} rows from {len(result_dirs)} results -> {out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advloop", description="Closed-loop adversarial shape search")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, episode=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--assets", default=None, help="asset directory (default: $ADVLOOP_ASSET_DIR)")
        sp.add_argument("--jobs", type=int, default=1)
        if episode:
            sp.add_argument("--duration", type=float, default=5.0)
            sp.add_argument("--actors-mode", choices=("reactive", "replay"), default="reactive")
            sp.add_argument("--objective", choices=("instance", "instance_free"), default="instance")

    g = sub.add_parser("gen-assets", help="write the procedural asset library and scenario suite")
    common(g, episode=False)
    g.add_argument("--per-class", type=int, default=10)
    g.set_defaults(func=cmd_gen_assets)

    f = sub.add_parser("fit-basis", help="fit the PCA shape basis over the asset library")
    common(f, episode=False)
    f.add_argument("--k", type=int, default=3)
    f.add_argument("--resolution", type=int, default=48)
    f.set_defaults(func=cmd_fit_basis)

    s = sub.add_parser("simulate", help="run unattacked episodes and save traces")
    common(s)
    s.add_argument("--scenario", action="append")
    s.add_argument("--mode", choices=("open", "closed"), default="closed")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="search adversarial shapes for the target actors")
    common(a)
    a.add_argument("--scenario", action="append")
    a.add_argument("--algorithm", choices=("bo", "random", "grid", "bruteforce"), default="bo")
    a.add_argument("--budget", type=int, default=100)
    a.add_argument("--init", type=int, default=11)
    a.add_argument("--beta", type=float, default=1.0)
    a.add_argument("--mode", choices=("open", "closed"), default="closed")
    a.add_argument("--actors", type=int, default=1, metavar="M")
    a.add_argument("--basis", default=None, help="basis file (default: cached in the asset directory)")
    a.set_defaults(func=cmd_attack)

    e = sub.add_parser("evaluate", help="closed-loop evaluation of attack results")
    common(e)
    e.add_argument("results", nargs="+")
    e.add_argument("--scenario", action="append")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="aggregate result directories into CSV and SVG")
    r.add_argument("results", nargs="+")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "out", None) is None and args.command in ("simulate", "attack"):
        print(f"advloop {args.command}: --out is required", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "jobs", 1) < 1:
        print("advloop: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"advloop {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure with its own exit code
        log.debug("runtime failure", exc_info=True)
        print(f"advloop {args.command}: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

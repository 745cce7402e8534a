"""Command-line front end.

Commands:
    generate      build a problem instance, write it plus a measurement manifest
    run           run every configured (algorithm, seed) pair on one instance
    sweep-sigma   regenerate/run across a list of device-spread values sigma,
                  tabulate communication-to-accuracy and emit one SVG per sigma
    check-repro   execute a config twice and compare the CSVs byte for byte
                  (wall-clock column excluded)

Exit codes: 0 success, 1 configuration error, 2 divergence in at least one
run, 3 I/O error.  The environment variable VI_COMMSIM_SEED overrides the
config's problem seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .compressors import KINDS, PERMUTATION
from .errors import ConfigError, DivergenceError
from .problems import generate_bilinear, load_instance, save_instance
from .simulator import (
    ALG_EXTRA_GRADIENT,
    ALG_OPTIMISTIC_MASHA,
    ALGORITHMS,
    RunConfig,
    aggregate_metrics,
    contraction_summary,
    csv_comparable_bytes,
    floats_to_accuracy,
    read_csv,
    resolve_params,
    run,
    write_csv,
    RunMetrics,
)
from .svgplot import Series, line_chart, write_svg

ENV_SEED = "VI_COMMSIM_SEED"

_DEFAULT_ALGORITHMS = (
    {
        "name": ALG_OPTIMISTIC_MASHA,
        "compressor": "permutation",
        "gamma": "auto",
        "eta": "auto",
        "alpha": "auto",
    },
    {"name": ALG_EXTRA_GRADIENT, "eta": "auto"},
)


def _fig1_preset(lam, sigma, max_rounds):
    return {
        "problem": {
            "type": "bilinear",
            "M": 10,
            "d": 100,
            "target_norm_A": 100.0,
            "sigma": sigma,
            "lambda": lam,
            "seed": 20240501,
        },
        "algorithms": [copy.deepcopy(dict(a)) for a in _DEFAULT_ALGORITHMS],
        "run": {
            "max_rounds": max_rounds,
            "target_rel_dist_sq": 1e-4,
            "seeds": list(range(1, 11)),
            "log_every": 100,
        },
        "output": {"directory": "fig1", "emit_svg": True},
    }


# paper-* pin the headline experiment values (condition number ~1e7; far past
# desk budgets, documented but not exercised by the test suite); desk-*
# substitute lambda = ||A||/100 so the same sweep finishes in minutes.
PRESETS = {
    "paper-fig1-small": _fig1_preset(1e-3, 1.0, 20_000_000),
    "paper-fig1-medium": _fig1_preset(1e-3, 10.0, 20_000_000),
    "paper-fig1-big": _fig1_preset(1e-3, 100.0, 40_000_000),
    "paper-fig1-sweep": _fig1_preset(1e-3, [1.0, 10.0, 100.0], 40_000_000),
    "desk-fig1-small": _fig1_preset(1.0, 1.0, 60_000),
    "desk-fig1-medium": _fig1_preset(1.0, 10.0, 150_000),
    "desk-fig1-big": _fig1_preset(1.0, 100.0, 400_000),
    "desk-fig1-sweep": _fig1_preset(1.0, [1.0, 10.0, 100.0], 400_000),
}


# ---------------------------------------------------------------------------
# config loading / validation
# ---------------------------------------------------------------------------


def _bad(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _req(doc, key, path):
    if key not in doc:
        _bad(f"{path}.{key}", "missing required field")
    return doc[key]


def _as_int(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        _bad(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        _bad(path, f"must be >= {minimum}, got {v}")
    return v


def _as_number(v, path, minimum=None, strict=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _bad(path, f"expected a number, got {v!r}")
    v = float(v)
    if minimum is not None and (v < minimum or (strict and v == minimum)):
        _bad(path, f"must be {'>' if strict else '>='} {minimum}, got {v}")
    return v


def _auto_or_number(v, path, minimum=None, strict=False):
    if v == "auto":
        return "auto"
    return _as_number(v, path, minimum=minimum, strict=strict)


def validate_config(doc: dict) -> dict:
    """Normalize and validate an experiment config document."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    out = {}

    problem = _req(doc, "problem", "")
    ptype = problem.get("type", "bilinear")
    if ptype != "bilinear":
        _bad("problem.type", f"only 'bilinear' is supported, got {ptype!r}")
    sigma = _req(problem, "sigma", "problem")
    if isinstance(sigma, list):
        sigma = [_as_number(s, "problem.sigma[]", minimum=0.0) for s in sigma]
    else:
        sigma = _as_number(sigma, "problem.sigma", minimum=0.0)
    out["problem"] = {
        "type": "bilinear",
        "M": _as_int(_req(problem, "M", "problem"), "problem.M", minimum=1),
        "d": _as_int(_req(problem, "d", "problem"), "problem.d", minimum=1),
        "target_norm_A": _as_number(
            _req(problem, "target_norm_A", "problem"),
            "problem.target_norm_A", minimum=0.0, strict=True,
        ),
        "sigma": sigma,
        "lambda": _as_number(
            _req(problem, "lambda", "problem"), "problem.lambda",
            minimum=0.0, strict=True,
        ),
        "seed": _as_int(_req(problem, "seed", "problem"), "problem.seed"),
    }

    algorithms = _req(doc, "algorithms", "")
    if not isinstance(algorithms, list) or not algorithms:
        _bad("algorithms", "expected a non-empty list")
    out["algorithms"] = []
    for i, entry in enumerate(algorithms):
        path = f"algorithms[{i}]"
        name = _req(entry, "name", path)
        if name not in ALGORITHMS:
            _bad(f"{path}.name", f"expected one of {ALGORITHMS}, got {name!r}")
        norm = {"name": name}
        if name == ALG_OPTIMISTIC_MASHA:
            comp = entry.get("compressor", "permutation")
            if comp not in KINDS:
                _bad(f"{path}.compressor", f"expected one of {KINDS}, got {comp!r}")
            norm["compressor"] = comp
            norm["gamma"] = _auto_or_number(
                entry.get("gamma", "auto"), f"{path}.gamma", minimum=0.0, strict=True
            )
            norm["alpha"] = _auto_or_number(
                entry.get("alpha", "auto"), f"{path}.alpha", minimum=0.0, strict=True
            )
        norm["eta"] = _auto_or_number(
            entry.get("eta", "auto"), f"{path}.eta", minimum=0.0, strict=True
        )
        out["algorithms"].append(norm)

    runblk = _req(doc, "run", "")
    max_rounds = runblk.get("max_rounds")
    if max_rounds is not None:
        max_rounds = _as_int(max_rounds, "run.max_rounds", minimum=0)
    target = runblk.get("target_rel_dist_sq")
    if target is not None:
        target = _as_number(target, "run.target_rel_dist_sq", minimum=0.0,
                            strict=True)
    if max_rounds is None and target is None:
        _bad("run", "set max_rounds and/or target_rel_dist_sq")
    seeds = _req(runblk, "seeds", "run")
    if not isinstance(seeds, list) or not seeds:
        _bad("run.seeds", "expected a non-empty list of integers")
    seeds = [_as_int(s, "run.seeds[]") for s in seeds]
    if len(set(seeds)) != len(seeds):
        _bad("run.seeds", "seeds must be distinct")
    out["run"] = {
        "max_rounds": max_rounds,
        "target_rel_dist_sq": target,
        "seeds": seeds,
        "log_every": _as_int(runblk.get("log_every", 1), "run.log_every", minimum=1),
    }

    output = doc.get("output", {})
    out["output"] = {
        "directory": output.get("directory", "out"),
        "emit_svg": bool(output.get("emit_svg", True)),
    }
    return out


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def load_config(args) -> dict:
    doc = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; available: {sorted(PRESETS)}"
            )
        doc = copy.deepcopy(PRESETS[args.preset])
    if args.config:
        try:
            with open(args.config) as fh:
                file_doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
        doc = _deep_update(doc, file_doc) if doc else file_doc
    if not doc:
        raise ConfigError("provide --config and/or --preset")
    if getattr(args, "lambda_scale", None) is not None:
        if not args.lambda_scale > 0:
            raise ConfigError("--lambda-scale must be positive")
        doc.setdefault("problem", {})
        doc["problem"]["lambda"] = doc["problem"]["target_norm_A"] * args.lambda_scale
    seed = args.seed
    if seed is None and os.environ.get(ENV_SEED):
        try:
            seed = int(os.environ[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED} must be an integer") from exc
    if seed is not None:
        doc.setdefault("problem", {})["seed"] = seed
    return validate_config(doc)


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _write_json(path: str, payload) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _instance_from_config(cfg: dict, sigma=None):
    p = cfg["problem"]
    sig = p["sigma"] if sigma is None else sigma
    if isinstance(sig, list):
        raise ConfigError(
            "problem.sigma is a list; use sweep-sigma or pick one value"
        )
    return generate_bilinear(
        n_devices=p["M"],
        block_dim=p["d"],
        target_norm_A=p["target_norm_A"],
        sigma=sig,
        lam=p["lambda"],
        seed=p["seed"],
    )


def _constants_payload(instance) -> dict:
    from .problems import power_iteration_norm

    consts = instance.constants
    return {
        "L": consts.L,
        "mu": consts.mu,
        "delta": consts.delta,
        "norm_A_bar": power_iteration_norm(instance.A_bar),
    }


def cmd_generate(cfg: dict, out_dir: str) -> int:
    instance = _instance_from_config(cfg)
    os.makedirs(out_dir, exist_ok=True)
    inst_path = os.path.join(out_dir, "instance.npz")
    save_instance(instance, inst_path)
    manifest = {
        "problem": cfg["problem"],
        "constants": _constants_payload(instance),
        "z_star": [float(v) for v in instance.solution],
        "instance_file": "instance.npz",
    }
    _write_json(os.path.join(out_dir, "instance_manifest.json"), manifest)
    print(f"wrote {inst_path}")
    return 0


def _run_config_kwargs(cfg: dict, algo: dict, seed: int) -> dict:
    kwargs = {
        "algorithm": algo["name"],
        "seed": seed,
        "max_rounds": cfg["run"]["max_rounds"],
        "target_rel_dist_sq": cfg["run"]["target_rel_dist_sq"],
        "log_every": cfg["run"]["log_every"],
    }
    if algo["name"] == ALG_OPTIMISTIC_MASHA:
        kwargs["compressor"] = algo.get("compressor", PERMUTATION)
        for key in ("gamma", "eta", "alpha"):
            value = algo.get(key, "auto")
            kwargs[key] = None if value == "auto" else float(value)
    else:
        value = algo.get("eta", "auto")
        kwargs["eta"] = None if value == "auto" else float(value)
    return kwargs


def _csv_name(algorithm: str, seed: int) -> str:
    return f"{algorithm}_seed{seed}.csv"


def _execute_run(instance_path: str, cfg_kwargs: dict, csv_path: str) -> dict:
    """Worker for one (algorithm, seed) run; safe to call in a subprocess."""
    instance = load_instance(instance_path)
    config = RunConfig(**cfg_kwargs)
    diverged = False
    try:
        metrics = run(config, instance)
    except DivergenceError as err:
        metrics = err.partial_metrics
        diverged = True
    write_csv(metrics, csv_path)
    target = cfg_kwargs.get("target_rel_dist_sq")
    final_rel = float(metrics.rel_dist_sq[-1]) if len(metrics) else math.nan
    summary = {
        "algorithm": metrics.algorithm,
        "seed": metrics.seed,
        "csv": os.path.basename(csv_path),
        "params": metrics.params,
        "rounds": int(metrics.k[-1]) if len(metrics) else 0,
        "final_rel_dist_sq": final_rel,
        "diverged": diverged,
        "reached_target": bool(target is not None and not diverged
                               and final_rel <= target),
        "floats_to_accuracy": (
            floats_to_accuracy(metrics, target) if target is not None else None
        ),
    }
    if target is not None:
        summary["max_rounds_exhausted"] = (
            not summary["reached_target"] and not diverged
        )
    return summary


def _metrics_from_csv(path: str, algorithm: str, seed: int, params: dict):
    cols = read_csv(path)
    return RunMetrics(
        algorithm=algorithm,
        seed=seed,
        params=params,
        k=cols["k"],
        uplink_scalars=cols["uplink_scalars"],
        dist_sq=cols["dist_sq"],
        rel_dist_sq=cols["rel_dist_sq"],
        lyapunov=cols["lyapunov"],
        sync=cols["sync"],
        wall_time_ns=cols["wall_time_ns"],
    )


def _echo_config(cfg: dict, instance) -> dict:
    """Config with every 'auto' replaced by the value the runs actually used."""
    echo = copy.deepcopy(cfg)
    for algo in echo["algorithms"]:
        kwargs = _run_config_kwargs(cfg, algo, seed=0)
        kwargs.pop("algorithm")
        resolved = resolve_params(
            RunConfig(algorithm=algo["name"], **{k: v for k, v in kwargs.items()
                                                 if k != "seed"}, seed=0),
            instance,
        )
        algo.update({k: v for k, v in resolved.items() if k != "compressor"})
    return echo


def cmd_run(cfg: dict, out_dir: str, jobs: int) -> int:
    os.makedirs(out_dir, exist_ok=True)
    inst_path = os.path.join(out_dir, "instance.npz")
    if not os.path.exists(inst_path):
        instance = _instance_from_config(cfg)
        save_instance(instance, inst_path)
    else:
        instance = load_instance(inst_path)

    runs_dir = os.path.join(out_dir, "runs")
    tasks = []
    for algo in cfg["algorithms"]:
        for seed in cfg["run"]["seeds"]:
            kwargs = _run_config_kwargs(cfg, algo, seed)
            csv_path = os.path.join(runs_dir, _csv_name(algo["name"], seed))
            tasks.append((inst_path, kwargs, csv_path))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_execute_run_star, tasks))
    else:
        summaries = [_execute_run(*task) for task in tasks]

    metrics = [
        _metrics_from_csv(os.path.join(runs_dir, s["csv"]), s["algorithm"],
                          s["seed"], s["params"])
        for s in summaries if not s["diverged"]
    ]
    manifest = {
        "config": _echo_config(cfg, instance),
        "constants": _constants_payload(instance),
        "z_star_norm": float(np.linalg.norm(instance.solution)),
        "runs": summaries,
        "contraction": contraction_summary(instance, metrics),
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)

    diverged = [s for s in summaries if s["diverged"]]
    print(f"{len(summaries)} runs -> {runs_dir} ({len(diverged)} diverged)")
    return 2 if diverged else 0


def _execute_run_star(task):
    return _execute_run(*task)


def _sigma_tag(sigma: float) -> str:
    return format(sigma, "g").replace(".", "p").replace("-", "m")


def _mean_floats(summaries, algorithm) -> float | None:
    values = [s["floats_to_accuracy"] for s in summaries
              if s["algorithm"] == algorithm]
    if not values or any(v is None for v in values):
        return None
    return float(np.mean(values))


def cmd_sweep_sigma(cfg: dict, out_dir: str, jobs: int) -> int:
    sigmas = cfg["problem"]["sigma"]
    if not isinstance(sigmas, list) or len(sigmas) < 2:
        raise ConfigError("sweep-sigma needs problem.sigma to be a list of "
                          ">= 2 values")
    target = cfg["run"]["target_rel_dist_sq"]
    os.makedirs(out_dir, exist_ok=True)
    table_rows = []
    worst_code = 0
    for sigma in sigmas:
        sub_cfg = copy.deepcopy(cfg)
        sub_cfg["problem"]["sigma"] = sigma
        sub_dir = os.path.join(out_dir, f"sigma_{_sigma_tag(sigma)}")
        code = cmd_run(sub_cfg, sub_dir, jobs)
        worst_code = max(worst_code, code)
        with open(os.path.join(sub_dir, "manifest.json")) as fh:
            manifest = json.load(fh)
        summaries = manifest["runs"]
        row = {"sigma": sigma, "delta": manifest["constants"]["delta"]}
        for algo in cfg["algorithms"]:
            row[algo["name"]] = _mean_floats(summaries, algo["name"])
        eg, om = row.get(ALG_EXTRA_GRADIENT), row.get(ALG_OPTIMISTIC_MASHA)
        row["ratio_eg_over_om"] = (eg / om) if (eg and om) else None
        table_rows.append(row)

        if cfg["output"]["emit_svg"]:
            _emit_sigma_svg(cfg, sub_dir, out_dir, sigma)

    algo_names = [a["name"] for a in cfg["algorithms"]]
    header = ["sigma", "delta"] + [f"{n}_floats" for n in algo_names] + [
        "ratio_eg_over_om"
    ]
    lines = [",".join(header)]
    for row in table_rows:
        cells = [format(row["sigma"], "g"), format(row["delta"], ".6g")]
        for name in algo_names:
            v = row[name]
            cells.append("" if v is None else format(v, ".17g"))
        r = row["ratio_eg_over_om"]
        cells.append("" if r is None else format(r, ".6g"))
        lines.append(",".join(cells))
    table_path = os.path.join(out_dir, "sweep_table.csv")
    with open(table_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    _write_json(os.path.join(out_dir, "sweep_manifest.json"), {
        "config": cfg,
        "target_rel_dist_sq": target,
        "table": table_rows,
    })
    return worst_code


def _emit_sigma_svg(cfg, sub_dir, out_dir, sigma) -> None:
    runs_dir = os.path.join(sub_dir, "runs")
    series = []
    for algo in cfg["algorithms"]:
        per_seed = []
        for seed in cfg["run"]["seeds"]:
            path = os.path.join(runs_dir, _csv_name(algo["name"], seed))
            if os.path.exists(path):
                per_seed.append(
                    _metrics_from_csv(path, algo["name"], seed, {})
                )
        if not per_seed:
            continue
        agg = aggregate_metrics(per_seed)
        keep = agg.rel_mean > 0
        series.append(Series(
            label=algo["name"],
            x=agg.grid[keep],
            y=np.log10(agg.rel_mean[keep]),
        ))
    svg = line_chart(
        series,
        title=f"bilinear saddle, device spread sigma = {format(sigma, 'g')}",
        xlabel="cumulative uplink scalars per device",
        ylabel="log10 relative squared distance to solution",
    )
    write_svg(os.path.join(out_dir, f"fig_sigma_{_sigma_tag(sigma)}.svg"), svg)


def cmd_check_repro(cfg: dict, out_dir: str, jobs: int) -> int:
    dirs = [os.path.join(out_dir, "repro_a"), os.path.join(out_dir, "repro_b")]
    codes = [cmd_run(copy.deepcopy(cfg), d, jobs) for d in dirs]
    if max(codes) == 2:
        print("check-repro: runs diverged; comparing the partial logs anyway")
    names = sorted(os.listdir(os.path.join(dirs[0], "runs")))
    other = sorted(os.listdir(os.path.join(dirs[1], "runs")))
    if names != other:
        print(f"check-repro: file sets differ: {names} vs {other}")
        return 1
    mismatched = []
    for name in names:
        a = csv_comparable_bytes(os.path.join(dirs[0], "runs", name))
        b = csv_comparable_bytes(os.path.join(dirs[1], "runs", name))
        status = "OK" if a == b else "MISMATCH"
        if a != b:
            mismatched.append(name)
        print(f"check-repro: {name}: {status}")
    if mismatched:
        print(f"check-repro: {len(mismatched)} file(s) differ")
        return 1
    print(f"check-repro: {len(names)} files byte-identical "
          "(wall-time column excluded)")
    return max(codes, default=0)


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vi-commsim",
        description="communication-efficient distributed VI solver simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("generate", "generate an instance and its measurement manifest"),
        ("run", "run all configured (algorithm, seed) pairs"),
        ("sweep-sigma", "run the full sigma sweep with table and SVG output"),
        ("check-repro", "run twice and compare outputs byte for byte"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", help=f"named preset: {', '.join(sorted(PRESETS))}")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the problem seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes")
        p.add_argument("--lambda-scale", dest="lambda_scale", type=float,
                       default=None,
                       help="set problem lambda = target_norm_A * SCALE")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "generate":
            return cmd_generate(cfg, args.out)
        if args.command == "run":
            return cmd_run(cfg, args.out, args.jobs)
        if args.command == "sweep-sigma":
            return cmd_sweep_sigma(cfg, args.out, args.jobs)
        return cmd_check_repro(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: data analysis on delimited files and batch
simulation, with figures rendered next to every delimited report.

Exit codes: 0 success, 2 configuration or validation error, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, figures, inference, reporting, simulation
from .model import Dataset, RngSpec, ValidationError, load_csv, make_dataset
from .regression import RankDeficiencyError
from .screening import LassoConvergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

THREADS_ENV = "MULTISPLIT_THREADS"

RULES = ("fwer", "fdr", "fdr-corrected", "ev", "single-split")


class ConfigError(ValueError):
    pass


def thread_count(flag_value) -> int:
    """Worker count: flag beats the environment beats available parallelism."""
    if flag_value is not None:
        return max(1, int(flag_value))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _versions() -> dict:
    import scipy

    return {"multisplit": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multisplit",
        description="Multi-split p-values and error-controlled variable selection "
        "for (possibly p >> n) linear regression.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    pa = sub.add_parser("analyze", help="run the multi-split pipeline on a delimited data file")
    pa.add_argument("--input", help="path to the data file")
    pa.add_argument("--response", help="response column, by header name or 1-based index")
    pa.add_argument("--delimiter", default=",")
    pa.add_argument("--no-header", action="store_true", help="file has no header row")
    pa.add_argument("--screener", choices=("fixed", "cv", "adap"), default="adap")
    pa.add_argument("--splits", type=int, default=50, help="number of random splits B")
    pa.add_argument("--rule", choices=RULES, default="fwer")
    pa.add_argument("--alpha", type=float, default=0.05)
    pa.add_argument("--q", type=float, default=0.05)
    pa.add_argument("--gamma-min", type=float, default=0.05)
    pa.add_argument("--k-factor", type=float, default=20.0,
                    help="correction factor K for the ev rule")
    pa.add_argument("--pvalues", choices=("normal", "t"), default="normal")
    pa.add_argument("--center", action="store_true",
                    help="center the response and design columns before fitting")
    pa.add_argument("--folds", type=int, default=10)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--threads", type=int, default=None)
    pa.add_argument("--manifest", help="reproduce a previous run from its manifest file")
    pa.add_argument("--out", required=True, help="output directory")

    ps = sub.add_parser("simulate", help="run a simulation grid from a config file")
    ps.add_argument("--config", help="config file path or bundled name "
                    "(setting_a, setting_b, smoke)")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--threads", type=int, default=None)
    ps.add_argument("--manifest", help="reproduce a previous run from its manifest file")
    ps.add_argument("--out", required=True)

    pe = sub.add_parser("ecdf", help="export one variable's p-value ECDF and rejection bound")
    pe.add_argument("--run", required=True, help="output directory of a completed analyze run")
    pe.add_argument("--variable", required=True, help="variable name (or 1-based index)")
    pe.add_argument("--alpha", type=float, default=None, help="default: the analyze run's alpha")
    pe.add_argument("--gamma-min", type=float, default=None)
    pe.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------- analyze


def _analyze_config(args) -> dict:
    if args.manifest:
        with open(args.manifest) as fh:
            stored = json.load(fh)
        return stored["config"]
    if not args.input or args.response is None:
        raise ConfigError("analyze needs --input and --response (or --manifest)")
    return {
        "input": str(args.input),
        "response": args.response,
        "delimiter": args.delimiter,
        "header": not args.no_header,
        "screener": args.screener,
        "splits": args.splits,
        "rule": args.rule,
        "alpha": args.alpha,
        "q": args.q,
        "gamma_min": args.gamma_min,
        "k_factor": args.k_factor,
        "pvalue_mode": args.pvalues,
        "center": bool(args.center),
        "folds": args.folds,
        "seed": args.seed,
    }


def center_dataset(dataset: Dataset) -> Dataset:
    x = dataset.x - dataset.x.mean(axis=0)
    y = dataset.y - dataset.y.mean()
    return make_dataset(y, x, dataset.variable_names)


def _parse_response(value: str):
    try:
        return int(value)
    except ValueError:
        return value


def run_analyze(args) -> int:
    cfg = _analyze_config(args)
    if cfg["rule"] not in RULES:
        raise ConfigError(f"unknown rule {cfg['rule']!r}")
    manifest = {"subcommand": "analyze", "config": cfg, "versions": _versions()}
    digest = reporting.manifest_hash(manifest)

    # all outputs are written only after the computation succeeds
    dataset = load_csv(
        cfg["input"],
        _parse_response(cfg["response"]),
        delimiter=cfg["delimiter"],
        header=cfg["header"],
    )
    if cfg["center"]:
        dataset = center_dataset(dataset)

    rng = RngSpec(cfg["seed"])
    workers = thread_count(args.threads)
    kwargs = {"pvalue_mode": cfg["pvalue_mode"], "folds": cfg["folds"]}
    rule = cfg["rule"]
    alpha, q = cfg["alpha"], cfg["q"]

    matrix = None
    if rule == "single-split":
        report = inference.single_split_select(dataset, cfg["screener"], alpha, rng, **kwargs)
        row = report.pvalues.values
        matrix = inference.PValueMatrix(
            row.reshape(1, -1),
            np.asarray([report.meta["screened_size"]]),
            row.reshape(1, -1).copy(),
            (report.flags,),
        )
        control = f"FWER <= {alpha:g} (single split)"
    else:
        matrix = inference.pvalue_matrix(
            dataset, cfg["screener"], cfg["splits"], rng, workers=workers, **kwargs
        )
        agg = inference.aggregate_adaptive(matrix, cfg["gamma_min"])
        if rule == "fwer":
            report = inference.fwer_select(agg, alpha)
            control = f"FWER <= {alpha:g}"
        elif rule in ("fdr", "fdr-corrected"):
            corrected = rule == "fdr-corrected"
            uncapped = inference.aggregate_adaptive(matrix, cfg["gamma_min"], capped=False)
            report = inference.fdr_select(agg, q, corrected, uncapped)
            level = q if corrected else q * inference.harmonic_number(dataset.p)
            control = f"FDR <= {level:g}"
        else:  # ev
            uncapped = inference.aggregate_adaptive(matrix, cfg["gamma_min"], capped=False)
            report = inference.ev_select(agg, alpha, cfg["k_factor"], uncapped)
            control = f"E[V] <= {alpha * cfg['k_factor']:g}"

    names = dataset.variable_names
    values = report.pvalues.values
    selected_mask = np.zeros(dataset.p, dtype=bool)
    selected_mask[report.selected] = True
    var_flags = _per_variable_flags(matrix.split_flags, dataset.p)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    reporting.write_manifest(outdir / "manifest.json", manifest)
    reporting.write_csv(
        outdir / "pvalues.csv",
        ["variable", "p_value", f"selected_{rule.replace('-', '_')}", "flags"],
        [
            (names[j], values[j], bool(selected_mask[j]), ";".join(var_flags[j]))
            for j in range(dataset.p)
        ],
        digest,
    )
    reporting.write_csv(
        outdir / "pvalue_matrix.csv",
        ["split_id", "screened_size", *names],
        [
            (b + 1, matrix.screened_sizes[b], *matrix.values[b])
            for b in range(matrix.n_splits)
        ],
        digest,
    )
    reporting.write_json(
        outdir / "report.json",
        {
            "rule": report.rule,
            "control_target": control,
            "screener": cfg["screener"],
            "splits": matrix.n_splits,
            "selected_indices": [int(j) + 1 for j in report.selected],
            "selected_variables": [names[j] for j in report.selected],
            "pvalues": {names[j]: float(values[j]) for j in range(dataset.p)},
            "split_flags": [list(f) for f in matrix.split_flags],
            "seed": cfg["seed"],
        },
        digest,
    )
    if rule in ("fdr", "fdr-corrected"):
        threshold = q
    elif rule == "ev":
        threshold = min(1.0, alpha * cfg["k_factor"])
    else:
        threshold = alpha
    figures.pvalue_figure(
        outdir / "pvalues.png", values, threshold, report.selected, names,
        title=f"{rule} selection: {int(selected_mask.sum())} of {dataset.p} variables",
    )
    return EXIT_OK


def _per_variable_flags(split_flags, p: int):
    """Collect per-variable flags of the form tag:index from every split."""
    out = [[] for _ in range(p)]
    for b, flags in enumerate(split_flags):
        for flag in flags:
            tag, _, idx = flag.partition(":")
            if idx.isdigit() and int(idx) < p:
                out[int(idx)].append(f"split{b + 1}:{tag}")
    return out


# ---------------------------------------------------------------- simulate


def _resolve_config_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("multisplit").joinpath(f"configs/{name}.json")
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"no such config file or bundled config: {name}")


def _grid_configs(spec: dict):
    defaults = spec.get("defaults", {})
    grid = spec.get("grid", [{}])
    known = {f.name for f in dataclasses.fields(simulation.SimulationConfig)}
    configs = []
    for i, cell in enumerate(grid):
        merged = {**defaults, **cell}
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)} in grid entry {i + 1}")
        if "name" not in merged:
            tags = [f"{k}={cell[k]}" for k in sorted(cell)]
            merged["name"] = ",".join(tags) if tags else f"cell{i + 1}"
        try:
            configs.append(simulation.SimulationConfig(**merged).validate())
        except ValueError as exc:
            raise ConfigError(f"grid entry {i + 1}: {exc}") from None
    return configs


def run_simulate(args) -> int:
    if args.manifest:
        with open(args.manifest) as fh:
            stored = json.load(fh)
        spec = stored["config"]["spec"]
        seed = stored["config"]["seed"]
    else:
        if not args.config:
            raise ConfigError("simulate needs --config (or --manifest)")
        with open(_resolve_config_path(args.config)) as fh:
            spec = json.load(fh)
        seed = args.seed
    methods = spec.get("methods")
    if not methods:
        raise ConfigError("config must list at least one method")
    for m in methods:
        if m not in simulation.METHODS:
            raise ConfigError(f"unknown method {m!r}; known: {', '.join(simulation.METHODS)}")
    configs = _grid_configs(spec)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subcommand": "simulate",
        "config": {"spec": spec, "seed": seed},
        "versions": _versions(),
    }
    digest = reporting.write_manifest(outdir / "manifest.json", manifest)

    workers = thread_count(args.threads)
    rng = RngSpec(seed)
    rows = []
    summaries = []
    for ci, config in enumerate(configs):
        result = simulation.run_experiment(
            config, methods, rng.child("replication", ci), workers=workers
        )
        for rep, method, metrics, err in result.rows:
            rows.append(
                (
                    config.name,
                    rep,
                    method,
                    metrics.true_positives if metrics else "",
                    metrics.false_positives if metrics else "",
                    metrics.fwer_indicator if metrics else "",
                    metrics.fdp if metrics else "",
                    metrics.selected_count if metrics else "",
                    err or "",
                )
            )
        for method, stats in result.summary.items():
            summaries.append(
                {"config": config.name, "method": method,
                 **{k: v for k, v in dataclasses.asdict(config).items() if k != "name"},
                 **stats}
            )

    reporting.write_csv(
        outdir / "results.csv",
        ["config", "rep", "method", "tp", "fp", "fwer_indicator", "fdp", "selected_count", "error"],
        rows,
        digest,
    )
    reporting.write_json(outdir / "summary.json", {"results": summaries, "seed": seed}, digest)
    drawable = [r for r in summaries if np.isfinite(r.get("fwer", float("nan")))]
    if drawable:
        figures.summary_figure(outdir / "summary.png", drawable)
    return EXIT_OK


# ---------------------------------------------------------------- ecdf


def run_ecdf(args) -> int:
    rundir = Path(args.run)
    with open(rundir / "manifest.json") as fh:
        run_manifest = json.load(fh)
    run_cfg = run_manifest["config"]
    alpha = args.alpha if args.alpha is not None else run_cfg.get("alpha", 0.05)
    gamma_min = args.gamma_min if args.gamma_min is not None else run_cfg.get("gamma_min", 0.05)

    header, data, _ = reporting.read_csv(rundir / "pvalue_matrix.csv")
    names = header[2:]
    if args.variable in names:
        col = header.index(args.variable)
    else:
        try:
            idx = int(args.variable)
        except ValueError:
            raise ConfigError(
                f"unknown variable {args.variable!r}; known: {', '.join(names[:8])}..."
            ) from None
        if not 1 <= idx <= len(names):
            raise ConfigError(f"variable index {idx} out of range 1..{len(names)}")
        col = 2 + idx - 1
    variable = header[col]
    column = np.asarray([float(row[col]) for row in data])

    crossing, table = inference.ecdf_crossing_check(column, alpha, gamma_min)
    agg = inference.aggregate_adaptive(
        inference.PValueMatrix(column.reshape(-1, 1), np.zeros(column.size, dtype=int),
                               column.reshape(-1, 1)),
        gamma_min,
    )
    grid = np.linspace(0.0, 1.0, 501)
    bound = inference.crossing_bound(grid, alpha, gamma_min)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subcommand": "ecdf",
        "config": {
            "run": str(rundir),
            "run_manifest_hash": run_manifest.get("manifest_hash"),
            "variable": variable,
            "alpha": alpha,
            "gamma_min": gamma_min,
        },
        "versions": _versions(),
    }
    digest = reporting.write_manifest(outdir / "manifest.json", manifest)
    reporting.write_csv(outdir / "ecdf.csv", ["p_value", "ecdf"], table.tolist(), digest)
    reporting.write_csv(outdir / "bound.csv", ["p", "bound"],
                        np.column_stack([grid, bound]).tolist(), digest)
    reporting.write_json(
        outdir / "ecdf.json",
        {
            "variable": variable,
            "crossing": crossing,
            "adaptive_pvalue": float(agg.values[0]),
            "alpha": alpha,
            "gamma_min": gamma_min,
            "splits": int(column.size),
        },
        digest,
    )
    figures.ecdf_figure(outdir / "ecdf.png", table, grid, bound, crossing, variable)
    return EXIT_OK


# ---------------------------------------------------------------- entry


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    runner = {"analyze": run_analyze, "simulate": run_simulate, "ecdf": run_ecdf}[args.subcommand]
    try:
        return runner(args)
    except (
        LassoConvergenceError,
        RankDeficiencyError,
        np.linalg.LinAlgError,
        FloatingPointError,
        simulation.FullModelInfeasibleError,
    ) as exc:
        print(f"error ({args.subcommand}, numerical): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValidationError, ValueError) as exc:
        # malformed JSON configs land here too (JSONDecodeError is a ValueError)
        print(f"error ({args.subcommand}, configuration): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error ({args.subcommand}, i/o): {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""``fanwatch`` command line.

Exit status: 0 ok, 2 usage, 3 config error, 4 data error, 5 file error.
Failures also print one JSON line ``{"error": kind, "code": n, "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from fanwatch import config as config_mod
from fanwatch import formats
from fanwatch.core import ConfigError, DataError, Impeller, SplitPair
from fanwatch.evaluation import (
    ReportRow,
    cell_seed,
    evaluate,
    fit_model,
    health_eval,
    run_grid,
)
from fanwatch.preprocess import (
    BinConfig,
    Binning,
    Downsample,
    FeatureSet,
    downsample,
    parse_reduction,
    remove_ascends,
)
from fanwatch.splits import partitioned_split, shuffled_split
from fanwatch.synthgen import generate_run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_FILE = 5

log = logging.getLogger("fanwatch")


def _config(args) -> config_mod.RunConfig:
    return config_mod.load(getattr(args, "config", None))


def _reduction(args):
    if args.mode == "downsample":
        if args.fraction is None:
            raise ConfigError("--mode downsample needs --fraction")
        return Downsample(args.fraction)
    if args.size is None:
        raise ConfigError("--mode bin needs --size")
    try:
        return Binning(BinConfig(args.size, FeatureSet.parse(args.features)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_table(path, cfg, keep_ascends=False):
    table = formats.read_table(path, cfg.schedule)
    return table if keep_ascends else remove_ascends(table)


def cmd_config(args) -> int:
    text = config_mod.emit() if args.emit_default else config_mod.emit(_config(args))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _config(args)
    impeller = Impeller(args.impeller)
    profile = cfg.healthy_profile if impeller is Impeller.HEALTHY else cfg.damaged_profile
    seed = cfg.master_seed if args.seed is None else args.seed
    rec = generate_run(cfg.schedule, profile, seed, impeller, cfg.sample_budget)
    if args.raw_multirate:
        formats.write_multirate(args.out, rec)
    else:
        formats.write_recording_from_run(args.out, rec)
    return EXIT_OK


def cmd_reduce(args) -> int:
    cfg = _config(args)
    reduction = _reduction(args)
    kind = formats.read_header(args.input)[0].get("kind")
    if kind == "dataset":
        if not isinstance(reduction, Downsample):
            raise DataError("binning needs a recording input")
        ds = downsample(formats.read_dataset(args.input), reduction.fraction)
    else:
        ds = reduction.apply(_load_table(args.input, cfg, args.keep_ascends))
    formats.write_dataset(args.out, ds, config_id=reduction.config_id)
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    if args.strategy == "shuffled":
        meta = formats.dataset_meta(args.input)
        seed = cfg.master_seed if args.seed is None else args.seed
        ratio = cfg.grid.ratio if args.ratio is None else args.ratio
        pair = shuffled_split(formats.read_dataset(args.input), ratio, seed)
        config_id = meta.get("config_id", "")
    else:
        reduction = _reduction(args)
        pair = partitioned_split(_load_table(args.input, cfg), cfg.grid.plan, reduction)
        config_id = reduction.config_id
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", pair.train), ("test", pair.test)):
        formats.write_dataset(out / f"{name}.csv", ds, config_id=config_id,
                              split=args.strategy, part=name)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    meta = formats.dataset_meta(args.input)
    ds = formats.read_dataset(args.input)
    seed = cfg.master_seed if args.seed is None else args.seed
    model = fit_model(args.model, ds, cfg.forest, seed)
    formats.write_model(args.out, model, seed=seed, config_id=meta.get("config_id", ""),
                        split=meta.get("split", ""), model_name=args.model)
    return EXIT_OK


def _model_meta(model) -> dict:
    return dict(model.meta)


def cmd_evaluate(args) -> int:
    model = formats.read_model(args.model)
    train = formats.read_dataset(args.train)
    test = formats.read_dataset(args.test)
    tr, te = evaluate(model, SplitPair(train, test))
    meta = _model_meta(model)
    config_id = meta.get("config_id", "")
    row = ReportRow(config_id=config_id, reduction=_describe(config_id), split=meta.get("split", ""),
                    model=meta.get("model_name", ""), nmse_train=tr, nmse_test=te,
                    n_train=len(train), n_test=len(test), seed=int(meta.get("seed", 0) or 0))
    _emit_report(args.out, [row])
    return EXIT_OK


def _describe(config_id: str) -> str:
    if not config_id:
        return ""
    return parse_reduction(config_id).describe()


def _emit_report(path, rows, master_seed=""):
    if path:
        formats.write_report(path, rows, master_seed)
    else:
        sys.stdout.write("\n".join(formats.report_lines(rows)) + "\n")


def cmd_grid(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    grid = cfg.grid_config(args.jobs)
    if args.healthy:
        healthy = _load_table(args.healthy, cfg)
    else:
        healthy = generate_run(cfg.schedule, cfg.healthy_profile, cfg.master_seed,
                               Impeller.HEALTHY, cfg.sample_budget)
    if args.damaged:
        damaged = _load_table(args.damaged, cfg)
    elif args.healthy or args.no_health:
        damaged = None
    else:
        damaged = generate_run(cfg.schedule, cfg.damaged_profile, cfg.master_seed,
                               Impeller.DAMAGED, cfg.sample_budget)
    report = run_grid(healthy, grid, damaged)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_report(out / "report.csv", report)
    formats.write_figure_data(out, report)
    if report.health is not None:
        formats.write_health(out / "health.csv", report.health)
    elif damaged is not None:
        log.warning("health cell %s/shuffled/rf did not run; no health.csv written",
                    grid.health_config)
    failed = sum(not r.ok for r in report.rows)
    log.info("%d cells, %d failed, output in %s", len(report), failed, out)
    return EXIT_OK


def cmd_health(args) -> int:
    model = formats.read_model(args.model)
    healthy = formats.read_dataset(args.healthy)
    damaged = formats.read_dataset(args.damaged)
    meta = _model_meta(model)
    report = health_eval(model, healthy, damaged, meta.get("config_id", ""),
                         meta.get("model_name", ""), meta.get("split", "") or "shuffled")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.write_health(out, report)
    pairs = Path(args.pairs) if args.pairs else out.with_name("fig_health.csv")
    formats.write_health_pairs(pairs, report)
    return EXIT_OK


def cmd_seed(args) -> int:
    cfg = _config(args)
    master = cfg.master_seed if args.master_seed is None else args.master_seed
    try:
        config_id, split, model = args.cell.split("/")
    except ValueError:
        raise ConfigError("--cell must look like <config_id>/<split>/<model>") from None
    print(cell_seed(master, config_id, split, model))
    return EXIT_OK


def _add_reduction_args(p, required_mode=True):
    p.add_argument("--mode", choices=("downsample", "bin"), required=required_mode)
    p.add_argument("--fraction", type=float)
    p.add_argument("--size", type=int)
    p.add_argument("--features", default="mean",
                   help="comma list of mean,std,range,median,kurtosis or a preset: mean, mean_std, all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fanwatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help=f"config file, or 'default' (falls back to ${config_mod.ENV_VAR})")
        p.set_defaults(func=func)
        return p

    p = add("config", cmd_config, "print the configuration")
    p.add_argument("--emit-default", action="store_true", help="built-in defaults, documented")
    p.add_argument("--out")

    p = add("generate", cmd_generate, "write a synthetic recording")
    p.add_argument("--impeller", choices=[i.value for i in Impeller], default="healthy")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="CSV file, or a directory with --raw-multirate")
    p.add_argument("--raw-multirate", action="store_true", help="native-rate rpm.csv and gyro.csv")

    p = add("reduce", cmd_reduce, "downsample or bin a recording")
    _add_reduction_args(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep-ascends", action="store_true", help="do not drop ramp rows")

    p = add("split", cmd_split, "train/test split")
    p.add_argument("--strategy", choices=("shuffled", "partitioned"), required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="dataset (shuffled) or recording (partitioned)")
    p.add_argument("--out-dir", required=True, help="receives train.csv and test.csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float)
    _add_reduction_args(p, required_mode=False)

    p = add("train", cmd_train, "fit a model")
    p.add_argument("--model", choices=("lr", "rf"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = add("evaluate", cmd_evaluate, "score a model on a train/test pair")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")

    p = add("grid", cmd_grid, "run the full experiment grid")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--healthy", help="recording CSV; generated when omitted")
    p.add_argument("--damaged", help="recording CSV; generated when neither input is given")
    p.add_argument("--no-health", action="store_true")

    p = add("health", cmd_health, "score a healthy model on healthy and damaged datasets")
    p.add_argument("--model", required=True)
    p.add_argument("--healthy", required=True)
    p.add_argument("--damaged", required=True)
    p.add_argument("--out", default="health.csv")
    p.add_argument("--pairs", help="prediction/actual pairs (default fig_health.csv next to --out)")

    p = add("seed", cmd_seed, "print the seed of one grid cell")
    p.add_argument("--cell", required=True, help="<config_id>/<split>/<model>")
    p.add_argument("--master-seed", type=int)
    return parser


def _fail(kind: str, code: int, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "code": code, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        return _fail("config", EXIT_CONFIG, ConfigError("--jobs must be >= 1"))
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except DataError as exc:
        return _fail("data", EXIT_DATA, exc)
    except OSError as exc:
        return _fail("file", EXIT_FILE, exc)
    except ValueError as exc:
        return _fail("data", EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())

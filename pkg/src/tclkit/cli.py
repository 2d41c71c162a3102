"""Command-line interface.

Subcommands: `train` (run a manifest, write metrics + figures),
`gradcheck` (finite-difference gradient suite), `analyze` (cost report
for a config), `tables` (recompute a reference savings table), `synth`
(write a synthetic IDX dataset). Exit codes: 0 success, 1 validation
error, 2 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis, config, plots, presets, reporting
from .data import (
    Dataset,
    IdxConsistencyError,
    IdxFormatError,
    IdxTruncatedError,
    save_idx,
)
from .layers import LabelError, NumericError, gradient_suite
from .network import ConfigError, build_network, train
from .tensor import ModeError, ShapeError

_VALIDATION_ERRORS = (ConfigError, ShapeError, ModeError, LabelError,
                      IdxFormatError, IdxConsistencyError, ValueError)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tclkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a network from a manifest")
    p_train.add_argument("--config", help="key-value config file")
    p_train.add_argument("--preset", help="network preset name")
    p_train.add_argument("--seed", type=int, help="run seed")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--precision", choices=("f32", "f64"))

    p_grad = sub.add_parser("gradcheck", help="run the gradient suite")
    p_grad.add_argument("--seed", type=int, default=0)

    p_an = sub.add_parser("analyze", help="cost report for a preset")
    p_an.add_argument("--preset", help="network preset name")
    p_an.add_argument("--config", help="config file naming network.preset")
    p_an.add_argument("--out", help="directory for report files")

    p_tab = sub.add_parser("tables", help="recompute a reference table")
    p_tab.add_argument("table", type=int, choices=(1, 2, 3))
    p_tab.add_argument("--out", help="directory for report files")

    p_syn = sub.add_parser("synth", help="write a synthetic IDX dataset")
    p_syn.add_argument("--config", help="key-value config file")
    p_syn.add_argument("--seed", type=int, help="dataset seed")
    p_syn.add_argument("--out", required=True, help="output directory")

    return parser


def _overrides(args) -> dict:
    over = {}
    if getattr(args, "seed", None) is not None:
        over["run.seed"] = str(args.seed)
    if getattr(args, "out", None):
        over["run.out"] = args.out
    if getattr(args, "preset", None):
        over["network.preset"] = args.preset
    if getattr(args, "precision", None):
        over["train.precision"] = args.precision
    return over


def _resolve(args) -> config.RunManifest:
    file_values = config.parse_kv_file(args.config) if getattr(args, "config", None) else None
    return config.resolve_manifest(file_values, _overrides(args))


def run_train(args) -> int:
    manifest = _resolve(args)
    out = manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest.save(out / "manifest.cfg")

    train_set, test_set = manifest.load_datasets()
    cfg = manifest.train_config()
    net = build_network(manifest.network_config(), seed=manifest.seed,
                        dtype=cfg.dtype)

    report = analysis.preset_cost_report(manifest.preset)
    reporting.write_cost_report(report, out / "cost_report.tsv")

    def progress(rec):
        print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.4f}  "
              f"train {rec.train_top1:.3f}  test {rec.test_top1:.3f}")

    with reporting.MetricsWriter(out / "metrics.tsv") as sink:
        metrics = train(net, train_set, test_set, cfg, sink=sink,
                        progress=progress)
    metrics.cost_report = report

    plots.plot_training_curves(metrics.records, out / "training_curves.png")
    plots.plot_cost_breakdown(report, out / "params_breakdown.png")
    last = metrics.records[-1]
    print(f"done: {cfg.epochs} epochs, final test top-1 {last.test_top1:.3f}; "
          f"outputs in {out}")
    return 0


def run_gradcheck(args) -> int:
    results = gradient_suite(seed=args.seed)
    worst = 0.0
    failed = []
    for name, err, tol in results:
        status = "ok" if err < tol else "FAIL"
        print(f"{name:10s} max rel err {err:.3e}  (tolerance {tol:g})  {status}")
        worst = max(worst, err)
        if err >= tol:
            failed.append(name)
    print(f"worst relative error: {worst:.3e}")
    if failed:
        raise NumericError(f"gradient check failed for: {', '.join(failed)}")
    return 0


def run_analyze(args) -> int:
    preset = args.preset
    if not preset and args.config:
        preset = config.parse_kv_file(args.config).get("network.preset")
    if not preset:
        raise ConfigError("analyze needs --preset or a config with network.preset")
    report = analysis.preset_cost_report(preset)
    print(reporting.format_cost_report(report), end="")
    cfg = presets.get_preset(preset).normalized()
    shapes = analysis.infer_shapes(cfg.input_shape, cfg.layers)
    cur = tuple(cfg.input_shape)
    for i, spec in enumerate(cfg.layers):
        if spec.kind == "tcl":
            ranks = spec.params["ranks"]
            asc = analysis.tcl_flops(cur, ranks)
            order, best = analysis.tcl_flops_best_order(cur, ranks)
            print(f"tcl{i}: {asc} MACs ascending; best order {order}: {best} MACs")
        cur = shapes[i]
    if report.space_savings is not None:
        print(f"space savings vs {report.baseline}: "
              f"{100.0 * report.space_savings:.2f}%")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        reporting.write_cost_report(report, out / f"cost_{preset}.tsv")
        plots.plot_cost_breakdown(report, out / f"params_{preset}.png")
        print(f"report files in {out}")
    return 0


def run_tables(args) -> int:
    rows = analysis.reproduce_table(args.table)
    print(reporting.format_table(rows), end="")
    if args.table == 3:
        print("note: the reference column is only consistent under a mixed "
              "activation reading; each row is computed under both "
              "(256,5,5) and (256,6,6).")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        reporting.write_table(rows, out / f"table{args.table}.tsv")
        plots.plot_table_comparison(rows, f"table {args.table} space savings",
                                    out / f"table{args.table}.png")
        print(f"report files in {out}")
    return 0


def run_synth(args) -> int:
    manifest = _resolve(args)
    v = manifest.values
    if v["data.kind"] != "synth":
        raise ConfigError("synth subcommand needs data.kind = synth")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set, test_set = manifest.load_datasets()
    for split, ds in (("train", train_set), ("test", test_set)):
        save_idx(ds, out / f"{split}-images.idx", out / f"{split}-labels.idx")
        print(f"{split}: {len(ds)} samples, {ds.num_classes} classes -> "
              f"{out / f'{split}-images.idx'}")
    manifest.save(out / "dataset.cfg")
    return 0


_COMMANDS = {
    "train": run_train,
    "gradcheck": run_gradcheck,
    "analyze": run_analyze,
    "tables": run_tables,
    "synth": run_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"tclkit: error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, IdxTruncatedError, ArithmeticError, OSError) as exc:
        print(f"tclkit: runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

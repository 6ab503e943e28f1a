"""Command line entry point: ``reprocf <subcommand> [flags]``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiment as ex
from .evaluate import confusion, dummy_predict, metrics
from .factorize import AlsConfig, export_factors, fit_als, load_model, save_model
from .matrix import (
    MatrixFormatError,
    load_mask_csv,
    load_matrix_csv,
    save_mask_csv,
    save_matrix_csv,
    training_ratio,
)
from .render import render_matrix, render_overlay
from .sampling import Method, SamplingSpec, sample_mask
from .synthgen import SyntheticSpec, generate_synthetic

logger = logging.getLogger("reprocf")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    return p


def _add_als_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--factors", type=int, default=50, help="latent factors (default 50)")
    p.add_argument("--reg", type=float, default=0.01, help="regularization parameter (default 0.01)")
    p.add_argument("--iters", type=int, default=5, help="ALS rounds (default 5)")
    p.add_argument("--nonnegative", action=argparse.BooleanOptionalAction, default=True,
                   help="constrain factors to be non-negative (default on)")
    p.add_argument("--bias", action=argparse.BooleanOptionalAction, default=False,
                   help="add global mean, subject and file biases (default off)")
    p.add_argument("--bias-style", choices=("fixed", "learned"), default="fixed",
                   help="fixed average deviations or re-fitted biases (default fixed)")
    p.add_argument("--weighted-reg", action=argparse.BooleanOptionalAction, default=True,
                   help="scale the penalty by each entity's training-cell count (default on)")


def _als_from_args(args) -> AlsConfig:
    return AlsConfig(
        n_factors=args.factors,
        regularization=args.reg,
        max_iterations=args.iters,
        nonnegative=args.nonnegative,
        use_bias=args.bias,
        seed=args.seed,
        weighted_regularization=args.weighted_reg,
        bias_mode=args.bias_style,
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(
        prog="reprocf",
        description="Predict reproducibility matrices with ALS under file-order constraints.",
    )
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic matrix CSV",
                       description="Write a synthetic matrix (headerless 0/1 CSV, rows = files).")
    p.add_argument("--types", type=int, required=True, help="number of subject types (power of two)")
    p.add_argument("--files", type=int, default=100)
    p.add_argument("--subjects", type=int, default=100)
    p.add_argument("--out", required=True, help="output matrix CSV")

    p = sub.add_parser("sample", parents=[common], help="sample a training mask",
                       description="Write a training mask as 'file,subject' lines (0-based).")
    p.add_argument("--method", required=True,
                   help="complete-columns, complete-rows, rs, rfnu, rfntl, rfnts or random-unreal")
    p.add_argument("--alpha", type=float, required=True, help="target training ratio in (0, 1)")
    p.add_argument("--matrix", required=True, help="matrix CSV (only its shape is used)")
    p.add_argument("--out", required=True, help="output mask CSV")
    p.add_argument("--tolerance", type=float, default=0.01, help="training ratio tolerance")
    p.add_argument("--no-cold-start", dest="cold_start", action="store_false",
                   help="do not add the first row and a random complete column")

    p = sub.add_parser("fit", parents=[common], help="fit ALS on the training cells",
                       description="Fit ALS on the masked cells; the model file holds factor and bias blocks.")
    p.add_argument("--matrix", required=True)
    p.add_argument("--mask", required=True, help="training mask CSV")
    p.add_argument("--model-out", required=True, help="output model file")
    p.add_argument("--factors-out", help="prefix for <prefix>_subjects.csv and <prefix>_files.csv")
    _add_als_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="score a model on the test cells",
                       description="Write accuracy, sensitivity, specificity and raw counts as one CSV row.")
    p.add_argument("--matrix", required=True)
    p.add_argument("--mask", required=True, help="training mask CSV; test cells are the rest")
    p.add_argument("--model", help="model file from 'fit'; omit with --dummy")
    p.add_argument("--dummy", action="store_true", help="score the majority-class baseline instead")
    p.add_argument("--positive", type=int, choices=(0, 1), default=1,
                   help="cell value treated as the positive class (default 1 = error)")
    p.add_argument("--out", required=True, help="output metrics CSV")

    p = sub.add_parser("sweep", parents=[common], help="run a sweep from a TOML config",
                       description="Run every dataset x method x alpha x bias x repetition cell.")
    p.add_argument("--config", required=True, help="sweep TOML file")
    p.add_argument("--out", required=True, help="per-repetition results CSV")
    p.add_argument("--summary-out", help="mean/std per cell group (default <out stem>.summary.csv)")
    p.add_argument("--no-timing", action="store_true", help="omit the wall_time column")

    p = sub.add_parser("roc", parents=[common], help="mean sensitivity/specificity per method",
                       description="Run the config at one alpha without bias and tabulate per method.")
    p.add_argument("--config", required=True)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hyper", parents=[common], help="vary the number of factors or iterations",
                       description="Vary one ALS hyperparameter, everything else fixed.")
    p.add_argument("--config", help="TOML with dataset/method/alphas/axis/values keys")
    p.add_argument("--dataset", default="synthetic:8")
    p.add_argument("--method", default="rfnu")
    p.add_argument("--axis", choices=sorted(ex.HYPER_AXES), default="factors")
    p.add_argument("--values", default="2,3,50", help="comma-separated positive integers")
    p.add_argument("--alphas", default="0.7", help="comma-separated training ratios")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", parents=[common], help="draw a matrix or a prediction overlay",
                       description="PGM of the matrix, or a PPM overlay when --mask and --model are given.")
    p.add_argument("--matrix", required=True)
    p.add_argument("--mask")
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    return parser


def _cmd_generate(args) -> None:
    m = generate_synthetic(SyntheticSpec(args.types, args.files, args.subjects, args.seed))
    save_matrix_csv(m, args.out)


def _cmd_sample(args) -> None:
    m = load_matrix_csv(args.matrix)
    spec = SamplingSpec(Method.parse(args.method), args.alpha, args.seed, args.tolerance, args.cold_start)
    mask = sample_mask(spec, m.shape)
    save_mask_csv(mask, args.out)
    logger.info("training ratio %.4f (%d cells)", training_ratio(mask), len(mask))


def _cmd_fit(args) -> None:
    m = load_matrix_csv(args.matrix)
    mask = load_mask_csv(args.mask, m.shape)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_als(m, mask, _als_from_args(args))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    save_model(model, args.model_out)
    if args.factors_out:
        export_factors(model, f"{args.factors_out}_subjects.csv", f"{args.factors_out}_files.csv")


def _cmd_evaluate(args) -> None:
    m = load_matrix_csv(args.matrix)
    mask = load_mask_csv(args.mask, m.shape)
    if args.dummy:
        pred = dummy_predict(m, mask)
    elif args.model:
        model = load_model(args.model)
        if model.shape != m.shape:
            raise ValueError(f"model is {model.shape[0]}x{model.shape[1]}, matrix is {m.shape[0]}x{m.shape[1]}")
        pred = model.predict_binary()
    else:
        raise ValueError("give --model or --dummy")
    counts = confusion(m, pred, mask.complement(), positive=args.positive)
    rec = metrics(counts)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["accuracy", "sensitivity", "specificity", "tp", "fp", "tn", "fn"])
        w.writerow([ex._fmt(rec.accuracy), ex._fmt(rec.sensitivity), ex._fmt(rec.specificity),
                    counts.tp, counts.fp, counts.tn, counts.fn])


def _config_with_overrides(args):
    config = ex.load_config(args.config)
    if args.workers is not None:
        from dataclasses import replace

        config = replace(config, workers=args.workers)
    return config


def _progress(done: int, total: int) -> None:
    if done % 50 == 0 or done == total:
        logger.info("%d/%d cells", done, total)


def _cmd_sweep(args) -> None:
    config = _config_with_overrides(args)
    result = ex.sweep(config, progress=_progress)
    ex.write_results_csv(result.rows, args.out, include_timing=not args.no_timing)
    summary_path = args.summary_out or str(Path(args.out).with_suffix("")) + ".summary.csv"
    ex.write_summary_csv(result.summary, summary_path)
    failed = sum(1 for r in result.rows if r.metrics is None)
    if failed:
        print(f"warning: {failed} cells failed, see the warning column", file=sys.stderr)


def _cmd_roc(args) -> None:
    config = _config_with_overrides(args)
    ex.write_roc_csv(ex.run_roc(config, args.alpha), args.out)


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _cmd_hyper(args) -> None:
    dataset, method, axis = args.dataset, args.method, args.axis
    values, alphas, reps, seed = _ints(args.values), _floats(args.alphas), args.reps, args.seed
    als = AlsConfig()
    if args.config:
        import tomli

        doc = tomli.loads(Path(args.config).read_text())
        axis = doc.pop("axis", axis)
        values = [int(v) for v in doc.pop("values", values)]
        config = ex.config_from_mapping(doc, base_dir=Path(args.config).parent)
        source = config.datasets[0]
        method, alphas, reps, seed, als = (
            config.methods[0], list(config.alphas), config.repetitions, config.master_seed, config.als,
        )
    else:
        source = ex.DatasetSource.parse(dataset)
    results = ex.hyper_study(source, method, axis, values, alphas, als, reps, seed)
    ex.write_hyper_csv(axis, results, args.out)


def _cmd_render(args) -> None:
    m = load_matrix_csv(args.matrix)
    if args.mask is None and args.model is None:
        render_matrix(m, args.out)
        return
    if args.mask is None or args.model is None:
        raise ValueError("an overlay needs both --mask and --model")
    mask = load_mask_csv(args.mask, m.shape)
    model = load_model(args.model)
    render_overlay(m, mask, model.predict_binary(), args.out)


COMMANDS = {
    "generate": _cmd_generate,
    "sample": _cmd_sample,
    "fit": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "roc": _cmd_roc,
    "hyper": _cmd_hyper,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"reprocf: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (FileNotFoundError, PermissionError, IsADirectoryError, OSError) as exc:
        print(f"reprocf {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MatrixFormatError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"reprocf {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

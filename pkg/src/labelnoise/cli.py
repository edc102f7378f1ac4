"""``labelnoise`` command line.

Every subcommand parses arguments, calls the library and writes the result.
Exit codes: 0 success, 2 bad arguments, 3 data or parse errors,
4 numerical or convergence failures. Diagnostics go to stderr; data goes to
``--out`` or stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from labelnoise import __version__, bayes, channels, embednoise, experiment, learner, mixture, theory
from labelnoise.errors import LabelNoiseError, NumericalError, ParameterError, ParseError, StateError

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _eps_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
        return theory.epsilon_grid(start, stop, step)
    except (ValueError, ParameterError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _json_obj(obj) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


def _csv_rows(header, rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return out.getvalue()


def _record(args, fields: dict) -> str:
    if args.format == "json":
        return _json_obj(fields)
    return _csv_rows(list(fields), [list(fields.values())])


def _noise_spec(args, c: int) -> channels.NoiseSpec:
    targets = None
    if args.targets is not None:
        targets = json.loads(Path(args.targets).read_text(encoding="utf-8")) if Path(args.targets).exists() \
            else json.loads(args.targets)
    return channels.NoiseSpec(args.kind, args.epsilon, args.spread, targets)


def _add_noise_flags(p, required=True):
    p.add_argument("--kind", required=required, help="noise kind (uniform, class_dependent, uniform_x, "
                   "resampling, inverse_resampling, gap_min, gap_max)")
    p.add_argument("--epsilon", type=float, required=required, help="noise level in [0, 1]")
    p.add_argument("--spread", type=int, default=None, help="class_dependent spread s")
    p.add_argument("--targets", default=None,
                   help="class_dependent target lists as JSON or a JSON file (default: (k+1..k+s) mod c)")


# --- subcommands -------------------------------------------------------------


def cmd_mixture_gen(args) -> str:
    if args.mixture is not None:
        mix = mixture.load_mixture(args.mixture)
    elif args.grid_spacing is not None:
        mix = mixture.make_grid_mixture(args.c, args.d, args.grid_spacing)
    else:
        mix = mixture.make_benchmark_mixture(args.c, args.d, args.separation, args.seed)
    if args.save_mixture:
        mixture.save_mixture(mix, args.save_mixture)
    if args.n_per_class is None:
        if args.format == "csv":
            rows = [[k, float(mix.priors[k]), *map(float, mix.means[k])] for k in range(mix.n_classes)]
            return _csv_rows(["class", "prior", *[f"mu{j}" for j in range(mix.dim)]], rows)
        return _json_obj(mix.to_dict())
    data = mixture.sample(mix, args.n_per_class, args.seed)
    if args.format == "json":
        return _json_obj({"features": data.features.tolist(), "labels": data.true_labels.tolist()})
    return mixture.dataset_to_csv(data)


def cmd_noise_apply(args) -> str:
    data = mixture.read_dataset_csv(args.data)
    mix = mixture.load_mixture(args.mixture) if args.mixture else None
    c = mix.n_classes if mix is not None else (args.n_classes or int(data.true_labels.max()) + 1)
    spec = _noise_spec(args, c)
    if spec.kind.needs_alpha and not spec.calibrated:
        if mix is None:
            raise ParameterError(f"{spec.kind.value} noise needs --mixture")
        spec = channels.calibrate(spec, data, mix, args.tolerance).spec
    noisy = channels.apply(spec, data, mix, seed=args.seed, mode=args.mode, n_classes=c)
    if args.format == "json":
        return _json_obj({
            "spec": spec.to_dict(),
            "mode": args.mode,
            "seed": args.seed,
            "realized_rate": float(noisy.flip_mask.mean()),
            "transition_counts": channels.transition_counts(noisy.true_labels, noisy.noisy_labels, c).tolist(),
            "noisy_labels": noisy.noisy_labels.tolist(),
        })
    return mixture.dataset_to_csv(noisy)


def cmd_theory_curve(args) -> str:
    grid = [theory.TheoryParams(args.c, e, args.m_bar, args.lam, args.s) for e in args.eps_grid]
    result = theory.curve(grid)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return _json_obj(result.to_dict()) if args.format == "json" else result.to_csv()


def cmd_bayes_eval(args) -> str:
    mix = mixture.load_mixture(args.mixture)
    spec = None
    if args.kind is not None:
        if args.epsilon is None:
            raise ParameterError("--kind needs --epsilon")
        spec = _noise_spec(args, mix.n_classes)
        if not spec.calibrated:
            X, y = mixture.draw_prior_weighted(mix, args.calibration_n, np.random.default_rng([args.seed, 1]))
            spec = channels.calibrate(spec, mixture.LabeledDataset(X, y), mix, args.tolerance).spec
    if args.mode != "clean_plugin" and spec is None:
        raise ParameterError(f"{args.mode} needs --kind and --epsilon")
    if args.labels == "noisy" and spec is None:
        raise ParameterError("--labels noisy needs --kind and --epsilon")
    handle = bayes.ClassifierHandle(args.mode, mix, spec if args.mode != "clean_plugin" else None)
    est = bayes.mc_accuracy(handle, mix, spec if args.labels == "noisy" else "clean", args.n, args.seed)
    return _record(args, {
        "mode": args.mode,
        "kind": "" if spec is None else spec.kind.value,
        "epsilon": "" if spec is None else spec.epsilon,
        "labels": args.labels,
        "n": est.n,
        "accuracy": est.mean,
        "std_error": est.std_error,
    })


def cmd_mlp_train(args) -> str:
    data = mixture.read_dataset_csv(args.data)
    config = learner.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
    )
    if args.labels == "noisy" and data.noisy_labels is None:
        raise ParameterError("training file has no noisy_label values; use --labels true")
    params = learner.train(data, config, args.labels, n_classes=args.n_classes, backend=args.backend)
    if args.checkpoint:
        learner.save_checkpoint(params, args.checkpoint)
    fields = {"train_accuracy": learner.evaluate(params, data, args.labels).mean}
    if args.test:
        test = mixture.read_dataset_csv(args.test)
        est = learner.evaluate(params, test, "true")
        fields.update(test_accuracy=est.mean, test_std_error=est.std_error)
        if test.noisy_labels is not None:
            fields["test_noisy_accuracy"] = learner.evaluate(params, test, "noisy").mean
    return _record(args, fields)


def cmd_sweep_run(args) -> str:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    config = experiment.SweepConfig.from_json(text)
    table = experiment.run_sweep(config, jobs=args.jobs)
    if args.m_bar is not None:
        table = experiment.overlay_theory(table, args.m_bar, args.lam)
    return _json_obj(table.to_dict()) if args.format == "json" else table.to_csv()


def cmd_embed_inject(args) -> str:
    data = embednoise.load_features(args.features, remap=args.remap)
    result = embednoise.inject(data, args.epsilon, args.spread, args.mode, args.seed, args.count_mode, args.tolerance)
    if args.report:
        Path(args.report).write_text(result.report_json(), encoding="utf-8")
    return result.report_json() if args.format == "json" else result.to_csv(data)


# --- parser ------------------------------------------------------------------


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # skip the auto default when the help already states one
    def _get_help_string(self, action):
        if "(default" in (action.help or "") or action.default in (None, False) or action.required:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")

    parser = _Parser(prog="labelnoise", description="Label-noise channels, accuracy laws and experiments.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="store_true", help="print version as JSON and exit")
    parser.add_argument("--config-schema", action="store_true", help="print the sweep config JSON schema and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("mixture-gen", parents=[common], formatter_class=fmt,
                       help="generate a benchmark mixture and optionally sample it")
    p.add_argument("--c", type=int, default=10, help="number of classes")
    p.add_argument("--d", type=int, default=2, help="feature dimension")
    p.add_argument("--separation", type=float, default=2.0, help="benchmark separation")
    p.add_argument("--grid-spacing", type=float, default=None, help="use a well-separated grid layout instead")
    p.add_argument("--mixture", default=None, help="sample from this saved mixture instead of generating one")
    p.add_argument("--n-per-class", type=int, default=None, help="emit a sampled dataset with this many rows per class")
    p.add_argument("--save-mixture", default=None, help="also write the mixture JSON here")
    p.set_defaults(func=cmd_mixture_gen)

    p = sub.add_parser("noise-apply", parents=[common], formatter_class=fmt, help="draw noisy labels for a dataset")
    p.add_argument("--data", required=True, help="dataset CSV (id,label,noisy_label,f0..)")
    _add_noise_flags(p)
    p.add_argument("--mixture", default=None, help="mixture JSON (required for feature-dependent kinds)")
    p.add_argument("--mode", choices=channels.MODES, default="bernoulli", help="flip count mode")
    p.add_argument("--n-classes", type=int, default=None, help="class count when no mixture is given")
    p.add_argument("--tolerance", type=float, default=1e-4, help="calibration tolerance")
    p.set_defaults(func=cmd_noise_apply)

    p = sub.add_parser("theory-curve", parents=[common], formatter_class=fmt, help="evaluate the accuracy laws")
    p.add_argument("--c", type=int, required=True, help="number of classes")
    p.add_argument("--s", type=int, default=None, help="spread (default: c-1, uniform noise)")
    p.add_argument("--m-bar", type=float, default=0.9, help="mean clean posterior of the predicted class")
    p.add_argument("--lambda", dest="lam", type=float, default=50.0, help="log of the softmax base")
    p.add_argument("--eps-grid", type=_eps_grid, default="0:1:0.1",
                   help="start:stop:step, endpoints inclusive")
    p.set_defaults(func=cmd_theory_curve)

    p = sub.add_parser("bayes-eval", parents=[common], formatter_class=fmt,
                       help="Monte Carlo accuracy of a plug-in classifier")
    p.add_argument("--mixture", required=True, help="mixture JSON")
    p.add_argument("--mode", choices=bayes.MODES, default="clean_plugin", help="classifier")
    _add_noise_flags(p, required=False)
    p.add_argument("--labels", choices=("clean", "noisy"), default="clean", help="test labels")
    p.add_argument("--n", type=int, default=100_000, help="Monte Carlo sample size")
    p.add_argument("--calibration-n", type=int, default=100_000, help="reference size for calibration")
    p.add_argument("--tolerance", type=float, default=1e-4, help="calibration tolerance")
    p.set_defaults(func=cmd_bayes_eval)

    p = sub.add_parser("mlp-train", parents=[common], formatter_class=fmt, help="train the MLP on a dataset")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--test", default=None, help="test dataset CSV")
    p.add_argument("--labels", choices=("noisy", "true"), default="noisy", help="training labels")
    p.add_argument("--epochs", type=int, default=200, help="training epochs")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=32, help="minibatch size")
    p.add_argument("--n-classes", type=int, default=None, help="output width (default: max label + 1)")
    p.add_argument("--backend", choices=("compiled", "python"), default=None, help="training kernel (default: best)")
    p.add_argument("--checkpoint", default=None, help="write trained parameters here (JSON)")
    p.set_defaults(func=cmd_mlp_train)

    p = sub.add_parser("sweep-run", parents=[common], formatter_class=fmt, help="run an experiment sweep")
    p.add_argument("--config", required=True, help="sweep config JSON (see --config-schema)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--m-bar", type=float, default=None, help="append theory columns with this m_bar")
    p.add_argument("--lambda", dest="lam", type=float, default=50.0, help="log softmax base for theory columns")
    p.set_defaults(func=cmd_sweep_run)

    p = sub.add_parser("embed-inject", parents=[common], formatter_class=fmt,
                       help="inject center-based noise into an embedded dataset")
    p.add_argument("--features", required=True, help="CSV id,label,f0..")
    p.add_argument("--epsilon", type=float, required=True, help="noise level in [0, 1]")
    p.add_argument("--spread", type=int, required=True, help="number of nearest centers")
    p.add_argument("--mode", choices=embednoise.MODES, default="class_dependent", help="injection mode")
    p.add_argument("--count-mode", choices=channels.MODES, default="bernoulli", help="flip count mode")
    p.add_argument("--remap", action="store_true", help="renumber non-contiguous labels")
    p.add_argument("--report", default=None, help="also write the JSON report here")
    p.add_argument("--tolerance", type=float, default=1e-4, help="calibration tolerance")
    p.set_defaults(func=cmd_embed_inject)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, experiment.CellFailure):
        return _exit_code(exc.cause)
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    if isinstance(exc, (ParseError, OSError, json.JSONDecodeError)):
        return EXIT_DATA
    if isinstance(exc, (ParameterError, StateError)):
        return EXIT_ARGS
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ARGS
    if args.version:
        sys.stdout.write(_json_obj({"name": "labelnoise", "version": __version__}))
        return EXIT_OK
    if args.config_schema:
        sys.stdout.write(_json_obj(experiment.config_schema()))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_ARGS
    if args.out is not None and not Path(args.out).resolve().parent.is_dir():
        print(f"labelnoise: error: parent directory of --out {args.out!r} does not exist", file=sys.stderr)
        return EXIT_ARGS
    try:
        text = args.func(args)
    except (LabelNoiseError, OSError, json.JSONDecodeError) as exc:
        print(f"labelnoise {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands::

    visualize     incremental fit of a data file onto a layout
    pair          recover the pairing between inputs and shuffled outputs
    refine        pairwise-swap refinement of an existing arrangement
    eval-oracle   randomised agreement check of the closed-form deltas

Options can also come from ``--config FILE``, a flat ``key = value`` text
file whose keys are the long option names (``max-samples = 500``).
Command-line flags take precedence over the file.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from xml.sax.saxutils import escape

import numpy as np

from . import dataio
from .dataio import dumps_json
from .elm import DEFAULT_RCOND, hidden_layer, init_model, projection_matrix
from .evaluation import confusion, metrics_document, oracle_trials
from .incremental import RunConfig, default_neuron_schedule, fixed_neurons, run
from .swap import AcceptanceTrace, elmvis_plus_run, init_state

EXIT_NUMERIC = 1
EXIT_USAGE = 2
ORACLE_THRESHOLD = 1e-7

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _neurons(text: str):
    if text == "schedule":
        return default_neuron_schedule
    try:
        return fixed_neurons(_positive_int(text))
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"--neurons takes 'schedule' or a positive integer, got {text!r}")


def read_config(path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.lstrip("-")] = value.strip("\"'")
    return values


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file with default option values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")


def _fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=_positive_int, default=8, help="candidates per iteration")
    p.add_argument("--neurons", type=_neurons, default=default_neuron_schedule,
                   help="'schedule' (ceil(i_B/4) clamped to [4, 256]) or a fixed count")
    p.add_argument("--activation", choices=("tanh", "sigmoid", "linear"), default="tanh")
    p.add_argument("--stagnation", type=_positive_int, default=None,
                   help="rejections before promotion (default max(500, 10*k))")
    p.add_argument("--refine-stagnation", type=_positive_int, default=None)
    p.add_argument("--refine", action="store_true",
                   help="pairwise-swap refinement of the fitted set after each iteration")
    p.add_argument("--max-samples", type=_positive_int, default=None,
                   help="stop after this many samples are placed")
    p.add_argument("--rcond", type=float, default=DEFAULT_RCOND)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="use data rows as given instead of unit-normalising them")
    p.add_argument("--shuffle-inputs", action="store_true",
                   help="admit layout rows in a seeded random order instead of file order")
    p.add_argument("--trace", action="store_true", help="write accepted moves to trace.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elmvis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("visualize", help="place data samples on a fixed layout")
    _common(p)
    _fit_options(p)
    p.add_argument("--data", required=True)
    p.add_argument("--layout", choices=("grid", "normal", "uniform"), default="grid")
    p.add_argument("--dims", type=_positive_int, default=2)
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--seeds-file", help="CSV of v_index,x_index pairs to pin first")
    p.add_argument("--labels", help="per-sample labels, used only to colour the plot")

    p = sub.add_parser("pair", help="recover the pairing of inputs and shuffled outputs")
    _common(p)
    _fit_options(p)
    p.add_argument("--inputs", required=True)
    p.add_argument("--outputs", required=True)
    p.add_argument("--true-labels", required=True,
                   help="class of each output row, in file order; row i of the inputs "
                        "and row i of the outputs are the ground-truth pair")
    p.add_argument("--input-labels",
                   help="class of each input row (default: argmax of the input row)")

    p = sub.add_parser("refine", help="pairwise-swap refinement of an arrangement")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--layout-file", required=True)
    p.add_argument("--order", required=True, help="order.csv from a previous run")
    p.add_argument("--neurons", type=_positive_int, default=None,
                   help="hidden neurons (default ceil(n/4) clamped to [4, 256])")
    p.add_argument("--activation", choices=("tanh", "sigmoid", "linear"), default="tanh")
    p.add_argument("--stagnation", type=_positive_int, default=None)
    p.add_argument("--rcond", type=float, default=DEFAULT_RCOND)
    p.add_argument("--no-normalize", dest="normalize", action="store_false")
    p.add_argument("--trace", action="store_true")

    p = sub.add_parser("eval-oracle", help="check closed-form deltas against full refits")
    p.add_argument("--config")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1,
                   help="split trials across worker processes")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((tok for tok in rest if tok in COMMANDS), None)
    if not known.config or command is None:
        return
    try:
        values = read_config(known.config)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    except UsageError as exc:
        parser.error(str(exc))
    sub = parser._subparsers._group_actions[0].choices[command]
    by_option = {opt.lstrip("-"): a for a in sub._actions for opt in a.option_strings}
    defaults = {}
    for key, value in values.items():
        action = by_option.get(key)
        if action is None or key in ("config", "help", "h"):
            parser.error(f"unknown config key {key!r} for {command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if value.lower() in ("1", "true", "yes", "on"):
                defaults[action.dest] = action.const
        else:
            try:
                defaults[action.dest] = action.type(value) if action.type else value
            except (ValueError, argparse.ArgumentTypeError) as exc:
                parser.error(f"config key {key!r}: {exc}")
            if action.choices is not None and defaults[action.dest] not in action.choices:
                parser.error(f"config key {key!r}: invalid choice {value!r}")
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config(parser, argv)
    return parser.parse_args(argv)


def _load(path, what: str) -> np.ndarray:
    if not os.path.exists(path):
        raise UsageError(f"{what} file not found: {path}")
    try:
        M = dataio.load_matrix(path)
    except dataio.ParseError as exc:
        raise UsageError(f"{path}: {exc}")
    if M.size == 0:
        raise UsageError(f"{what} file is empty: {path}")
    return M


def _load_labels(path, n: int, what: str) -> np.ndarray:
    if not os.path.exists(path):
        raise UsageError(f"{what} file not found: {path}")
    try:
        labels = dataio.load_labels(path)
    except dataio.ParseError as exc:
        raise UsageError(f"{path}: {exc}")
    if labels.size != n:
        raise UsageError(f"{path}: expected {n} labels, found {labels.size}")
    if labels.min() < 0:
        raise UsageError(f"{path}: labels must be non-negative")
    return labels


def _prepare(X: np.ndarray, normalize: bool) -> np.ndarray:
    if not normalize:
        return X
    try:
        return dataio.normalize_rows(X)
    except dataio.DataError as exc:
        raise UsageError(str(exc))


def _outdir(args) -> str:
    if not args.out:
        raise UsageError("--out is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _config(args, pairs=None) -> RunConfig:
    return RunConfig(k=args.k, stagnation_inner=args.stagnation,
                     stagnation_refine=args.refine_stagnation, neuron_schedule=args.neurons,
                     refine_each_iteration=args.refine, rcond=args.rcond, seed=args.seed,
                     activation=args.activation, initial_pairs=pairs,
                     max_samples=args.max_samples, shuffle_inputs=args.shuffle_inputs)


def write_order(path, positions, samples) -> None:
    with open(path, "w") as fh:
        fh.write("position,sample_index\n")
        for p, s in zip(positions, samples):
            fh.write(f"{int(p)},{int(s)}\n")


def read_order(path) -> tuple[np.ndarray, np.ndarray]:
    if not os.path.exists(path):
        raise UsageError(f"order file not found: {path}")
    positions, samples = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "position,sample_index":
            raise UsageError(f"{path}: expected header 'position,sample_index'")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                p, s = (int(v) for v in line.split(","))
            except ValueError:
                raise UsageError(f"{path}: line {lineno}: expected two integers")
            positions.append(p)
            samples.append(s)
    return np.array(positions, dtype=np.int64), np.array(samples, dtype=np.int64)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(obj) + "\n")


def scatter_svg(points: np.ndarray, colors=None, size: int = 480, radius: float = 3.0) -> str:
    """Plain SVG scatter plot, one <circle> per point."""
    margin = 10.0
    lo = points.min(axis=0)
    span = np.where(points.max(axis=0) > lo, points.max(axis=0) - lo, 1.0)
    scaled = margin + (points - lo) / span * (size - 2 * margin)
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for i, (x, y) in enumerate(scaled):
        color = PALETTE[int(colors[i]) % len(PALETTE)] if colors is not None else "#333333"
        # svg y grows downwards
        lines.append(f'<circle cx="{x:.3f}" cy="{size - y:.3f}" r="{radius}" '
                     f'fill="{escape(color)}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


@contextlib.contextmanager
def _maybe_trace(enabled: bool, out: str):
    if not enabled:
        yield None
        return
    with open(os.path.join(out, "trace.csv"), "w") as fh:
        yield AcceptanceTrace(fh)


def cmd_visualize(args) -> int:
    X = _load(args.data, "data")
    labels = _load_labels(args.labels, X.shape[0], "labels") if args.labels else None
    pairs = None
    if args.seeds_file:
        if not os.path.exists(args.seeds_file):
            raise UsageError(f"seeds file not found: {args.seeds_file}")
        try:
            pairs = dataio.load_pairs(args.seeds_file)
        except dataio.ParseError as exc:
            raise UsageError(f"{args.seeds_file}: {exc}")
    out = _outdir(args)
    N = X.shape[0]
    V = dataio.make_layout(args.layout, N, args.dims, args.extent, args.seed)
    Xn = _prepare(X, args.normalize)
    try:
        config = _config(args, pairs)
    except ValueError as exc:
        raise UsageError(str(exc))
    with open(os.path.join(out, "progress.jsonl"), "w") as progress, \
            _maybe_trace(args.trace, out) as trace:
        try:
            result = run(V, Xn, config, progress, trace)
        except ValueError as exc:
            raise UsageError(str(exc))

    p = result.partition
    positions = p.vperm[:result.n_fixed]
    samples = p.perm[:result.n_fixed]
    write_order(os.path.join(out, "order.csv"), positions, samples)
    dataio.save_matrix(os.path.join(out, "layout.csv"), V)
    write_json(os.path.join(out, "metrics.json"), {
        "N": N, "n_fixed": result.n_fixed, "neurons": result.model.n_neurons,
        "normalized": args.normalize, "seed": args.seed,
        "S_final": result.S_history[-1][1] if result.S_history else 0.0,
        "S_history": [[i, s] for i, s in result.S_history],
    })
    if args.dims == 2:
        colors = labels[samples] if labels is not None else None
        with open(os.path.join(out, "scatter.svg"), "w") as fh:
            fh.write(scatter_svg(V[positions], colors))
    print(f"placed {result.n_fixed} of {N} samples, S = {result.S_history[-1][1]:.6g}")
    return 0


def cmd_pair(args) -> int:
    V = _load(args.inputs, "inputs")
    Y = _load(args.outputs, "outputs")
    if V.shape[0] != Y.shape[0]:
        raise UsageError(f"inputs have {V.shape[0]} rows but outputs have {Y.shape[0]}")
    true = _load_labels(args.true_labels, Y.shape[0], "true-labels")
    if args.input_labels:
        vlab = _load_labels(args.input_labels, V.shape[0], "input-labels")
    else:
        vlab = np.argmax(V, axis=1)
    k = int(max(true.max(), vlab.max())) + 1
    out = _outdir(args)

    Xs, shuffle = dataio.shuffle_rows(Y, args.seed)
    Xn = _prepare(Xs, args.normalize)
    try:
        config = _config(args)
    except ValueError as exc:
        raise UsageError(str(exc))
    with open(os.path.join(out, "progress.jsonl"), "w") as progress, \
            _maybe_trace(args.trace, out) as trace:
        try:
            result = run(V, Xn, config, progress, trace)
        except ValueError as exc:
            raise UsageError(str(exc))

    p = result.partition
    positions = p.vperm[:result.n_fixed]
    samples = p.perm[:result.n_fixed]
    # report in terms of the original output rows
    original = shuffle[samples]
    cm = confusion(true[original], vlab[positions], k)
    np.savetxt(os.path.join(out, "confusion.csv"), cm, fmt="%d", delimiter=",")
    write_order(os.path.join(out, "order.csv"), positions, original)
    doc = metrics_document(cm, result.S_history, n_fixed=result.n_fixed,
                           exact_recovery=float(np.mean(original == positions)),
                           normalized=args.normalize, seed=args.seed)
    write_json(os.path.join(out, "metrics.json"), doc)
    print(f"best-permutation accuracy {doc['accuracy']:.4f} over {result.n_fixed} samples")
    return 0


def cmd_refine(args) -> int:
    X = _load(args.data, "data")
    V = _load(args.layout_file, "layout")
    positions, samples = read_order(args.order)
    if positions.size == 0:
        raise UsageError(f"{args.order}: no rows")
    if positions.max() >= V.shape[0] or samples.max() >= X.shape[0] or min(positions.min(), samples.min()) < 0:
        raise UsageError(f"{args.order}: index out of range")
    if len(set(positions.tolist())) != positions.size or len(set(samples.tolist())) != samples.size:
        raise UsageError(f"{args.order}: duplicate positions or samples")
    out = _outdir(args)
    n = positions.size
    n_neurons = args.neurons or default_neuron_schedule(n)
    model = init_model(V.shape[1], n_neurons, args.activation, args.seed)
    X_in = _prepare(X[samples], args.normalize).copy()
    A = projection_matrix(hidden_layer(model, V[positions]), args.rcond)
    state = init_state(A, X_in)
    S_before = state.S
    order = samples.copy()
    if n >= 2:
        with _maybe_trace(args.trace, out) as trace:
            accepted, S_after = elmvis_plus_run(state, X_in, 0, n, args.stagnation, args.seed,
                                                order, trace)
    else:
        accepted, S_after = 0, S_before
    write_order(os.path.join(out, "order.csv"), positions, order)
    write_json(os.path.join(out, "metrics.json"), {
        "n": n, "neurons": n_neurons, "accepted_swaps": accepted,
        "S_before": S_before, "S_after": S_after, "seed": args.seed,
    })
    print(f"S {S_before:.6g} -> {S_after:.6g} ({accepted} swaps)")
    return 0


def _trial_chunk(job):
    n, seed = job
    return oracle_trials(n, seed)


def cmd_eval_oracle(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.jobs == 1:
        summary = oracle_trials(args.trials, args.seed)
        worst = summary.max_error
    else:
        from concurrent.futures import ProcessPoolExecutor
        # job j runs its share of trials from its own child seed
        sizes = [len(c) for c in np.array_split(np.arange(args.trials), args.jobs) if len(c)]
        seeds = np.random.SeedSequence(args.seed).spawn(len(sizes))
        jobs = [(n, int(s.generate_state(1)[0])) for n, s in zip(sizes, seeds)]
        with ProcessPoolExecutor(len(jobs)) as pool:
            worst = max(s.max_error for s in pool.map(_trial_chunk, jobs))
    status = "ok" if worst <= ORACLE_THRESHOLD else "FAIL"
    print(f"trials={args.trials} seed={args.seed} max_rel_error={worst:.17g} {status}")
    return 0 if worst <= ORACLE_THRESHOLD else EXIT_NUMERIC


COMMANDS = {"visualize": cmd_visualize, "pair": cmd_pair, "refine": cmd_refine,
            "eval-oracle": cmd_eval_oracle}


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"elmvis {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"elmvis {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

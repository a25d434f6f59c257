"""Command-line interface.

Subcommands: parse, ted, grammar, train, encode, decode, eval-autoencode,
project, dynsys {fit, simulate, check}, cluster, outliers, predict-eval,
synth {corpus, traces}, grid. Exit codes: 0 success, 1 usage error, 2 data
error. A TOML/JSON ``--config`` file supplies defaults for any long flag;
the TREEVEC_SEED environment variable supplies the default seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import analysis, autoencoder, corpus
from .frontend import FrontendError, parse_program
from .grammar import (GrammarError, Tree, minipy, parse_tree, serialize_tree,
                      tree_size, validate)
from .numerics import Rng
from .ted import ted

DataError = (FrontendError, GrammarError, autoencoder.ModelError,
             analysis.AnalysisError, corpus.CorpusError, OSError,
             json.JSONDecodeError, ValueError)


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_tree(path: str) -> Tree:
    """Read a file as a serialized tree, falling back to minipy source."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".py"):
        return parse_program(text)
    try:
        return parse_tree(minipy(), text.strip())
    except GrammarError:
        return parse_program(text)


def _load_corpus_trees(path: str) -> list[Tree]:
    """Trees from a JSONL trace file, a tree-per-line file, or a directory
    of .py sources."""
    g = minipy()
    if os.path.isdir(path):
        trees = []
        for name in sorted(os.listdir(path)):
            if name.endswith(".py"):
                with open(os.path.join(path, name), encoding="utf-8") as fh:
                    trees.append(parse_program(fh.read()))
        if not trees:
            raise corpus.CorpusError(f"{path}: no .py files found")
        return trees
    with open(path, encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line.strip()
                break
    if first.startswith("{"):
        traces, _ = corpus.load_traces(g, path)
        return [t for tr in traces for t in tr.trees()]
    with open(path, encoding="utf-8") as fh:
        return [parse_tree(g, line.strip()) for line in fh if line.strip()]


def _load_trace_trees(path: str) -> list[corpus.TreeTrace]:
    traces, _ = corpus.load_traces(minipy(), path)
    return traces


def _encode_corpus(model, trees: list[Tree]) -> np.ndarray:
    return np.asarray([autoencoder.encode(model, t) for t in trees])


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_parse(args) -> int:
    with open(args.file, encoding="utf-8") as fh:
        tree = parse_program(fh.read())
    print(serialize_tree(minipy(), tree))
    return 0


def _cmd_ted(args) -> int:
    print(ted(_read_tree(args.file_a), _read_tree(args.file_b)))
    return 0


def _cmd_grammar(args) -> int:
    g = minipy()
    sys.stdout.write(g.to_text())
    print(f"# digest: {g.digest()}")
    return 0


def _cmd_train(args) -> int:
    trees = _load_corpus_trees(args.corpus)
    config = autoencoder.ModelConfig(
        latent_dim=args.dim, beta=args.beta, learning_rate=args.lr,
        batch_size=args.batch, seed=args.seed)
    model = autoencoder.init_model(minipy(), config)
    model, losses = autoencoder.train(model, trees, args.epochs,
                                      progress_every=args.progress_every)
    autoencoder.save(model, args.out)
    if losses:
        print(f"trained {args.epochs} epochs; final loss {losses[-1]:.4f}")
    return 0


def _cmd_encode(args) -> int:
    model = autoencoder.load(args.model)
    code = autoencoder.encode(model, _read_tree(args.file))
    print(",".join(_fmt(x) for x in code))
    return 0


def _cmd_decode(args) -> int:
    model = autoencoder.load(args.model)
    vec = np.array([float(x) for x in args.vec.split(",")])
    print(serialize_tree(model.grammar, autoencoder.decode(model, vec)))
    return 0


def _cmd_eval_autoencode(args) -> int:
    model = autoencoder.load(args.model)
    trees = _load_corpus_trees(args.corpus)
    by_size: dict[int, list[int]] = {}
    timing_rows = []
    for t in trees:
        size = tree_size(t)
        t0 = time.perf_counter()
        code = autoencoder.encode(model, t)
        t1 = time.perf_counter()
        out = autoencoder.decode(model, code)
        t2 = time.perf_counter()
        by_size.setdefault(size, []).append(ted(t, out))
        timing_rows.append([size, _fmt(t1 - t0), _fmt(t2 - t1), tree_size(out)])
    error_rows = []
    for size in sorted(by_size):
        errs = np.asarray(by_size[size], dtype=float)
        error_rows.append([size, errs.size, _fmt(errs.mean()),
                           _fmt(float(np.median(errs))), _fmt(errs.std())])
    _write_csv(args.out_errors, ["size", "count", "mean", "median", "std"], error_rows)
    _write_csv(args.out_timing, ["size", "encode_seconds", "decode_seconds", "decoded_size"],
               timing_rows)
    print(f"evaluated {len(trees)} trees")
    return 0


def _fit_projection_from_args(model, args) -> analysis.ProjectionModel:
    solution = _read_tree(args.solution)
    origin_tree = _read_tree(args.origin) if args.origin else Tree("Module", ((),))
    trees = _load_corpus_trees(args.corpus)
    codes = _encode_corpus(model, trees)
    x0 = autoencoder.encode(model, origin_tree)
    x_star = autoencoder.encode(model, solution)
    return analysis.fit_projection(codes, x0, x_star), trees, codes


def _cmd_project(args) -> int:
    model = autoencoder.load(args.model)
    pm, trees, codes = _fit_projection_from_args(model, args)
    rows = []
    for i, code in enumerate(codes):
        y = analysis.project(pm, code)
        rows.append([i, _fmt(y[0]), _fmt(y[1])])
    _write_csv(args.out, ["id", "progress", "variance"], rows)
    print(f"projected {len(rows)} codes")
    return 0


def _cmd_dynsys_fit(args) -> int:
    model = autoencoder.load(args.model)
    traces = _load_trace_trees(args.traces)
    x_star = autoencoder.encode(model, _read_tree(args.solution))
    coded = [analysis.Trace(tr.student, tr.task, _encode_corpus(model, tr.trees()))
             for tr in traces if len(tr.steps) >= 2]
    ds = analysis.fit_dynsys(coded, x_star.reshape(1, -1), reg=args.lam)
    payload = {"attractors": ds.attractors.tolist(), "weights": ds.weights.tolist()}
    _atomic_write(args.out, json.dumps(payload))
    print(f"fitted dynamics on {sum(len(tr.steps) - 1 for tr in traces)} transitions")
    return 0


def _load_dynsys(path: str) -> analysis.DynSys:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return analysis.DynSys(np.asarray(payload["attractors"], dtype=float),
                           np.asarray(payload["weights"], dtype=float))


def _cmd_dynsys_simulate(args) -> int:
    ds = _load_dynsys(args.dynsys)
    start = np.array([float(x) for x in args.start.split(",")])
    points = analysis.simulate(ds, start, tol=args.tol, max_iters=args.max_iters)
    rows = [[t] + [_fmt(x) for x in point] for t, point in enumerate(points)]
    header = ["step"] + [f"x{j}" for j in range(points.shape[1])]
    _write_csv(args.out, header, rows)
    print(f"simulated {points.shape[0] - 1} steps")
    return 0


def _cmd_dynsys_check(args) -> int:
    ds = _load_dynsys(args.dynsys)
    for report in analysis.stability_check(ds):
        print(f"attractor={report['attractor']} op_norm={report['op_norm']:.6f} "
              f"sufficient={str(report['sufficient']).lower()}")
    return 0


def _cmd_cluster(args) -> int:
    model = autoencoder.load(args.model)
    trees = _load_corpus_trees(args.corpus)
    codes = _encode_corpus(model, trees)
    gmm = analysis.fit_gmm(codes, args.k, seed=args.seed)
    assignment = analysis.gmm_assign(gmm, codes)
    logdens = analysis.gmm_logdensity(gmm, codes)
    outliers = set(_safe_outliers(logdens))
    rows = [[i, int(assignment[i]), _fmt(logdens[i]), int(i in outliers)]
            for i in range(len(trees))]
    _write_csv(args.out, ["id", "cluster", "logdensity", "outlier"], rows)
    print(f"clustered {len(trees)} trees into {args.k} components")
    return 0


def _cmd_outliers(args) -> int:
    model = autoencoder.load(args.model)
    trees = _load_corpus_trees(args.corpus)
    codes = _encode_corpus(model, trees)
    gmm = analysis.fit_gmm(codes, args.k, seed=args.seed)
    logdens = analysis.gmm_logdensity(gmm, codes)
    for i in _safe_outliers(logdens):
        print(i)
    return 0


def _safe_outliers(logdens) -> list[int]:
    """The outlier rule needs negative log-densities; when none are
    negative no sample can be called unusually unlikely, so flag none."""
    if min(logdens) >= 0.0:
        return []
    return analysis.detect_outliers(logdens)


def _cmd_predict_eval(args) -> int:
    model = autoencoder.load(args.model)
    traces = _load_trace_trees(args.traces)
    solution = _read_tree(args.solution)
    splits = corpus.kfold_by_student(traces, args.folds, args.seed,
                                     train_students=args.students)
    # pool squared errors across folds, grouped by task
    pooled: dict[tuple[str, str], list[float]] = {}
    for train, test in splits:
        by_task: dict[str, list[list[Tree]]] = {}
        for tr in test:
            by_task.setdefault(tr.task, []).append(tr.trees())
        train_trees = [tr.trees() for tr in train]
        for task in sorted(by_task):
            errors = analysis.prediction_errors(model, train_trees, by_task[task],
                                                solution, lam=args.lam)
            for method, errs in errors.items():
                pooled.setdefault((method, task), []).extend(errs)
    rows = [[method, task, _fmt(float(np.sqrt(np.mean(np.square(errs)))))]
            for (method, task), errs in sorted(pooled.items())]
    _write_csv(args.out, ["method", "task", "rmse"], rows)
    print(f"evaluated {args.folds} folds")
    return 0


def _cmd_synth_corpus(args) -> int:
    c = corpus.synth_corpus(minipy(), args.seed, args.count,
                            max_depth=args.max_depth, max_list=args.max_list)
    g = minipy()
    text = "".join(serialize_tree(g, t) + "\n" for t in c.trees)
    _atomic_write(args.out, text)
    print(f"wrote {len(c.trees)} trees")
    return 0


def _cmd_synth_traces(args) -> int:
    traces = corpus.synth_traces(minipy(), args.seed, args.students, args.steps,
                                 max_depth=args.max_depth, max_list=args.max_list)
    g = minipy()
    lines = []
    for tr in traces:
        for ts, tree in tr.steps:
            lines.append(json.dumps({"student": tr.student, "task": tr.task,
                                     "ts": ts, "tree": serialize_tree(g, tree)}))
    _atomic_write(args.out, "".join(line + "\n" for line in lines))
    print(f"wrote {len(traces)} traces")
    return 0


def _cmd_grid(args) -> int:
    model = autoencoder.load(args.model)
    pm, _, _ = _fit_projection_from_args(model, args)
    rows = []
    g = model.grammar
    for i in range(args.rows):
        variance = args.var_min + (args.var_max - args.var_min) * i / max(args.rows - 1, 1)
        for j in range(args.cols):
            progress = args.prog_min + (args.prog_max - args.prog_min) * j / max(args.cols - 1, 1)
            z = analysis.embed(pm, np.array([progress, variance]))
            tree = autoencoder.decode(model, z)
            rows.append([_fmt(progress), _fmt(variance), serialize_tree(g, tree)])
    _write_csv(args.out, ["progress", "variance", "tree"], rows)
    print(f"decoded a {args.rows}x{args.cols} grid")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        print(f"usage error: {message}", file=sys.stderr)
        sys.exit(1)


def _default_seed() -> int:
    return int(os.environ.get("TREEVEC_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treevec", description=__doc__)
    parser.add_argument("--config", help="TOML or JSON file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("parse", _cmd_parse, help="parse minipy source to a serialized tree")
    p.add_argument("file")

    p = add("ted", _cmd_ted, help="tree edit distance between two tree/source files")
    p.add_argument("file_a")
    p.add_argument("file_b")

    add("grammar", _cmd_grammar, help="print the built-in grammar and its digest")

    p = add("train", _cmd_train, help="train an autoencoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--beta", type=float, default=1e-3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--progress-every", type=int, default=0)

    p = add("encode", _cmd_encode, help="encode a tree/source file to a latent code")
    p.add_argument("--model", required=True)
    p.add_argument("file")

    p = add("decode", _cmd_decode, help="decode a comma-separated latent code")
    p.add_argument("--model", required=True)
    p.add_argument("--vec", required=True)

    p = add("eval-autoencode", _cmd_eval_autoencode,
            help="per-size autoencoding error table and timing table")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-errors", required=True)
    p.add_argument("--out-timing", required=True)

    def projection_flags(p):
        p.add_argument("--model", required=True)
        p.add_argument("--corpus", required=True)
        p.add_argument("--solution", required=True)
        p.add_argument("--origin", help="origin tree/source file (default: empty program)")

    p = add("project", _cmd_project, help="2-D progress/variance projection CSV")
    projection_flags(p)
    p.add_argument("--out", required=True)

    dynsys = sub.add_parser("dynsys", help="linear dynamical system commands")
    dsub = dynsys.add_subparsers(dest="subcommand", required=True)
    p = dsub.add_parser("fit")
    p.set_defaults(fn=_cmd_dynsys_fit)
    p.add_argument("--model", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--out", required=True)
    p = dsub.add_parser("simulate")
    p.set_defaults(fn=_cmd_dynsys_simulate)
    p.add_argument("--dynsys", required=True)
    p.add_argument("--start", required=True, help="comma-separated start code")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--out", required=True)
    p = dsub.add_parser("check")
    p.set_defaults(fn=_cmd_dynsys_check)
    p.add_argument("--dynsys", required=True)

    p = add("cluster", _cmd_cluster, help="GMM cluster assignments CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)

    p = add("outliers", _cmd_outliers, help="indices of low-density outlier trees")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=_default_seed())

    p = add("predict-eval", _cmd_predict_eval, help="next-step prediction benchmark CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--students", type=int, default=30,
                   help="training-side student subsample per fold")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)

    synth = sub.add_parser("synth", help="synthetic data generation")
    ssub = synth.add_subparsers(dest="subcommand", required=True)
    p = ssub.add_parser("corpus")
    p.set_defaults(fn=_cmd_synth_corpus)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--max-list", type=int, default=4)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)
    p = ssub.add_parser("traces")
    p.set_defaults(fn=_cmd_synth_traces)
    p.add_argument("--students", type=int, default=40)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--max-list", type=int, default=4)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)

    p = add("grid", _cmd_grid, help="decode a lattice of 2-D projection points")
    projection_flags(p)
    p.add_argument("--rows", type=int, default=11)
    p.add_argument("--cols", type=int, default=11)
    p.add_argument("--prog-min", type=float, default=0.0)
    p.add_argument("--prog-max", type=float, default=1.0)
    p.add_argument("--var-min", type=float, default=-0.5)
    p.add_argument("--var-max", type=float, default=1.0)
    p.add_argument("--out", required=True)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pull --config out of argv and splice its values in as defaults.

    Config keys use the long flag spelling without dashes (underscores ok);
    explicit command-line flags win because they come later in argv.
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return argv  # parser will report the usage error
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            config = tomllib.load(fh)
    else:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    injected = []
    for key, value in config.items():
        flag = "--" + str(key).replace("_", "-")
        injected.extend([flag, str(value)])
    # place injected flags right after the subcommand words so explicit
    # flags that follow them take precedence
    split = 0
    while split < len(rest) and not rest[split].startswith("-"):
        split += 1
        if split >= 2:
            break
    return rest[:split] + injected + rest[split:]


def cli_main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        argv = _apply_config(parser, list(argv))
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()

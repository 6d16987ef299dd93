"""Command-line interface: ``metakan {fit,count,cluster,gradcheck,analyze,sweep}``.

Exit codes: 0 success, 1 gradcheck failure, 2 configuration or input error,
3 training divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import config as cfgmod
from . import serialize
from .bench import (
    compare_sweep,
    fit_model,
    format_table,
    get_target,
    reports_jsonl,
    summary_csv,
)
from .network import (
    KanNetwork,
    MetaKanNetwork,
    NetworkShape,
    cluster_layers,
    coeff_cosine_matrix,
    count_params,
    enumerate_params,
    make_kind,
    materialize,
    memory_efficient,
    prompt_distance_matrix,
)
from .train import mse_loss, trace_to_csv

EXIT_OK, EXIT_GRAD, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


def _out_dir(args, default: str) -> Path:
    return Path(args.out if getattr(args, "out", None) else default)


def _load_config(args) -> cfgmod.CliConfig:
    if not getattr(args, "config", None):
        raise CliError("--config is required", EXIT_CONFIG)
    try:
        cfg = cfgmod.load(args.config)
    except cfgmod.ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "timing", False):
        cfg.timing = True
    return cfg


def _matrix_csv(M: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in M:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


# ----------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    cfg = _load_config(args)
    fn = get_target(cfg.target, cfg.target_dim)
    try:
        report, net, trace = fit_model(fn, cfg.model_config(), cfg.train_config(),
                                       cfg.n_train, cfg.n_test, timing=cfg.timing)
    except ValueError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    out = Path(cfg.out_dir)
    _write(out / "config.json", json.dumps(cfg.to_dict(), indent=2) + "\n")
    _write(out / "trace.csv", trace_to_csv(trace))
    _write(out / "report.json", report.to_json() + "\n")
    if report.diverged:
        print(f"training diverged: {report.error}", file=sys.stderr)
        return EXIT_DIVERGED
    _write(out / "model.json", serialize.dumps(net))
    print(f"{report.model} {report.shape} params={report.params_formula} (exact {report.params_exact}) "
          f"train_mse={report.train_mse:.3e} test_mse={report.test_mse:.3e}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def _parse_shape(text: str) -> NetworkShape:
    try:
        return NetworkShape.parse(text)
    except ValueError as exc:
        raise CliError(f"invalid shape {text!r}: {exc}", EXIT_CONFIG) from None


def cmd_count(args) -> int:
    shape = _parse_shape(args.shape)
    c = args.c if args.c is not None else args.G + args.k
    rows = [("MLP", count_params("MLP", shape))]
    for base in ("KAN", "FastKAN", "WavKAN"):
        rows.append((base, count_params(base, shape, args.G, args.k, c)))
    if args.d_hidden is not None:
        for base in ("KAN", "FastKAN", "WavKAN"):
            rows.append(("Meta" + base, count_params("Meta" + base, shape, args.G, args.k, c,
                                                     args.d_hidden, args.C, args.prompt_dim)))
    width = max(len(r[0]) for r in rows)
    print(f"shape {shape}  G={args.G} k={args.k} c={c}"
          + (f" d_hidden={args.d_hidden} C={args.C} prompt_dim={args.prompt_dim}"
             if args.d_hidden is not None else ""))
    print(f"{'model'.ljust(width)}  {'formula':>10}  {'exact':>10}")
    for name, pc in rows:
        print(f"{name.ljust(width)}  {pc.formula:>10}  {pc.exact:>10}")
    if args.d_hidden is not None:
        for base in ("KAN", "FastKAN", "WavKAN"):
            ok, margin = memory_efficient(shape, args.G, args.k, args.d_hidden, args.C,
                                          args.prompt_dim, model=base, c=c)
            verdict = "efficient" if ok else "not efficient"
            print(f"Meta{base} vs {base}: {verdict} (margin {margin})")
    return EXIT_OK


def cmd_cluster(args) -> int:
    try:
        channels = [float(s) for s in args.channels.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"invalid channel list {args.channels!r}", EXIT_CONFIG) from None
    try:
        plan = cluster_layers(channels, args.C)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    print(" ".join(f"({a},{b})" for a, b in plan.intervals))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    shape = _parse_shape(args.shape)
    try:
        kind = make_kind(args.basis, args.G, args.k, args.c)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    seed = args.seed if args.seed is not None else 0
    if args.model == "kan":
        net = KanNetwork.init(shape, kind, seed=seed)
    else:
        net = MetaKanNetwork.init(shape, kind, d_hidden=args.d_hidden, C=args.C,
                                  prompt_dim=args.prompt_dim, seed=seed)
    rng = np.random.default_rng(seed + 1)
    X = rng.uniform(-1.0, 1.0, size=(args.points, shape.widths[0]))
    Y = rng.uniform(-1.0, 1.0, size=(args.points, shape.widths[-1]))
    faulty = ("silu", "bspline", "rbf", "softplus", "matmul") if args.break_adjoint else ()
    with ag.faulty_adjoint(*faulty):
        report = ag.gradcheck(lambda: mse_loss(net.forward(X), Y), net.parameters(),
                              fd_step=args.fd_step, rel_tol=args.rel_tol)
    print(f"{args.model} {args.basis} {shape}: {enumerate_params(net)} parameters")
    for group, err in sorted(report.by_group().items()):
        print(f"  {group:<13} max rel err {err:.3e}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_GRAD


def cmd_analyze(args) -> int:
    path = Path(args.model)
    try:
        net = serialize.load(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    except serialize.ModelFileError as exc:
        raise CliError(f"malformed model file {path}: {exc}", EXIT_CONFIG) from None
    out = _out_dir(args, str(path.with_name(path.stem + "_analysis")))
    if isinstance(net, MetaKanNetwork):
        for l, z in enumerate(net.prompts):
            _write(out / f"layer{l}_prompt_distance.csv", _matrix_csv(prompt_distance_matrix(z)))
        kan = materialize(net)
    else:
        print("notice: plain KAN has no prompts; skipping distance analysis", file=sys.stderr)
        kan = net
    for l, w in enumerate(kan.weights):
        _write(out / f"layer{l}_coeff_cosine.csv", _matrix_csv(coeff_cosine_matrix(w)))
    print(f"analysis written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not cfg.sweep or len(cfg.sweep) < 2:
        raise CliError("config error: 'sweep' must list at least two model overrides", EXIT_CONFIG)
    fn = get_target(cfg.target, cfg.target_dim)
    configs = [cfg.model_config(**o) for o in cfg.sweep]
    try:
        reports, rows = compare_sweep(fn, configs, cfg.train_config(), cfg.n_train, cfg.n_test,
                                      timing=cfg.timing)
    except ValueError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    out = Path(cfg.out_dir)
    _write(out / "config.json", json.dumps(cfg.to_dict(), indent=2) + "\n")
    _write(out / "reports.jsonl", reports_jsonl(reports))
    _write(out / "summary.csv", summary_csv(rows))
    print(format_table(rows))
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _model_flags(p: argparse.ArgumentParser, with_meta_default: bool):
    p.add_argument("--G", type=int, default=5, help="grid intervals (default 5)")
    p.add_argument("--k", type=int, default=3, help="spline order (default 3)")
    p.add_argument("--c", type=int, default=None, help="RBF centers (default G+k)")
    p.add_argument("--d-hidden", dest="d_hidden", type=int, default=16 if with_meta_default else None,
                   help="meta-learner hidden width")
    p.add_argument("--C", type=int, default=1, help="meta-learner clusters (default 1)")
    p.add_argument("--prompt-dim", dest="prompt_dim", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    glob = argparse.ArgumentParser(add_help=False)
    glob.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the seed")
    glob.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    glob.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")

    parser = argparse.ArgumentParser(prog="metakan", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--config", default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[glob], help="train one model from a config file")
    p.add_argument("--timing", action="store_true", help="record wall-clock times in artifacts")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("count", parents=[glob], help="parameter counts per model kind")
    p.add_argument("--shape", required=True, help="comma-separated widths, e.g. 2,2,1,1")
    _model_flags(p, with_meta_default=False)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("cluster", parents=[glob], help="contiguous layer clustering")
    p.add_argument("channels", help="comma-separated channel sizes")
    p.add_argument("--C", type=int, required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("gradcheck", parents=[glob], help="finite-difference gradient check")
    p.add_argument("--model", choices=("kan", "metakan"), default="metakan")
    p.add_argument("--basis", choices=("bspline", "rbf", "wavelet"), default="bspline")
    p.add_argument("--shape", default="2,3,1")
    _model_flags(p, with_meta_default=True)
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--fd-step", dest="fd_step", type=float, default=1e-5)
    p.add_argument("--rel-tol", dest="rel_tol", type=float, default=1e-4)
    p.add_argument("--break-adjoint", dest="break_adjoint", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("analyze", parents=[glob], help="prompt-distance and coefficient-cosine CSVs")
    p.add_argument("model", help="model JSON written by `fit`")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[glob], help="train several model configs on one target")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

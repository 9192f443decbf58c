"""Command-line entry point.

Every artifact carries the fully resolved configuration (inline for JSON
outputs, as a ``<path>.config.json`` sidecar otherwise); ``replay`` re-runs
that configuration.  Exit status: 0 on success, 1 on a library error
(reported as a single JSON line on stderr), 2 on a bad command line.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, cam, fewshot
from . import io as _io
from ._accel import backend
from .errors import ConfigError, SubspaceError
from .factorize import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_EPS, DEFAULT_ITERS, Method, fit, project_test

SYNTHETIC = "synthetic"


# --- argument types ---------------------------------------------------------

def _int_at_least(lo):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {value}")
        return value
    return parse


def _float_in(lo=None, hi=None, lo_open=False, hi_open=False):
    def parse(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if not np.isfinite(value):
            raise argparse.ArgumentTypeError("must be finite")
        if lo is not None and (value < lo or (lo_open and value == lo)):
            raise argparse.ArgumentTypeError(f"must be {'>' if lo_open else '>='} {lo}, got {value}")
        if hi is not None and (value > hi or (hi_open and value == hi)):
            raise argparse.ArgumentTypeError(f"must be {'<' if hi_open else '<='} {hi}, got {value}")
        return value
    return parse


def _method(text):
    try:
        return Method.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# --- parser -----------------------------------------------------------------

def _add_hyper(p):
    p.add_argument("--method", type=_method, default="nmf", help="svd, nmf, dnmf or scnmfs")
    p.add_argument("--k", type=_int_at_least(1), default=30, help="subspace dimension")
    p.add_argument("--alpha", type=_float_in(lo=0.0), default=DEFAULT_ALPHA,
                   help="DNMF label-term weight")
    p.add_argument("--beta", type=_float_in(0.0, 1.0, lo_open=True, hi_open=True),
                   default=DEFAULT_BETA, help="SCNMFS Frobenius penalty, in (0, 1)")
    p.add_argument("--iters", type=_int_at_least(0), default=DEFAULT_ITERS)
    p.add_argument("--tol", type=_float_in(lo=0.0), default=0.0,
                   help="relative objective change for early stopping (0 disables)")
    p.add_argument("--eps", type=_float_in(lo=0.0, lo_open=True), default=DEFAULT_EPS)
    p.add_argument("--seed", type=int, default=0)


def _add_input(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--features", help="feature file (label,f1,...,fM per line)")
    g.add_argument("--matrix", help="matrix file, one column per sample")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subspace-fsl",
        description="Non-negative subspace factorizations and few-shot evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("factorize", help="fit a subspace and write the model as JSON")
    _add_hyper(p)
    _add_input(p)
    p.add_argument("--out", help="model JSON path (default: stdout)")

    p = sub.add_parser("project", help="project new samples onto a fitted subspace")
    p.add_argument("--model", required=True)
    _add_input(p)
    p.add_argument("--iters", type=_int_at_least(0), default=None)
    p.add_argument("--tol", type=_float_in(lo=0.0), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="matrix file for the N_t x k codes (default: stdout)")

    p = sub.add_parser("evaluate", help="repeated-split or episodic few-shot accuracy")
    _add_hyper(p)
    p.add_argument("--data", default=SYNTHETIC,
                   help=f"feature file, or '{SYNTHETIC}' for the bundled dataset")
    p.add_argument("--test", help="separate test feature file")
    p.add_argument("--K", type=_int_at_least(1), default=5, help="neighbours in the KNN vote")
    p.add_argument("--repeats", type=_int_at_least(1), default=10)
    p.add_argument("--train-size", type=_int_at_least(1), default=None)
    p.add_argument("--test-size", type=_int_at_least(1), default=None)
    p.add_argument("--standardize", action="store_true",
                   help="z-score features with training statistics (SVD only)")
    p.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    p.add_argument("--shots", type=_int_at_least(1), default=None,
                   help="episodic mode: support samples per class")
    p.add_argument("--ways", type=_int_at_least(2), default=None,
                   help="episodic mode: classes per episode (default: all)")
    p.add_argument("--query", type=_int_at_least(1), default=None,
                   help="episodic mode: query samples per class (default: shots)")
    p.add_argument("--workers", type=_int_at_least(1), default=1)
    p.add_argument("--format", choices=("json", "tsv"), default="json")
    p.add_argument("--out")

    p = sub.add_parser("compare", help="CCA similarity and sparsity of two fitted models")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--ridge", type=_float_in(lo=0.0), default=None)
    p.add_argument("--format", choices=("json", "tsv"), default="json")
    p.add_argument("--out")

    p = sub.add_parser("cam", help="class activation map through the subspace")
    p.add_argument("--model", required=True)
    p.add_argument("--train-features", required=True,
                   help="feature file the model was fitted on (labels train the linear head)")
    p.add_argument("--fmap", required=True, help="feature-map file")
    p.add_argument("--feature-vec", help="matrix file (c x 1); default: pooled feature maps")
    p.add_argument("--out-h", type=_int_at_least(1), required=True)
    p.add_argument("--out-w", type=_int_at_least(1), required=True)
    p.add_argument("--epochs", type=_int_at_least(1), default=500)
    p.add_argument("--lr", type=_float_in(lo=0.0, lo_open=True), default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix: <out>.csv and <out>.json")
    p.add_argument("--pgm", action="store_true", help="also write <out>.pgm")

    p = sub.add_parser("replay", help="re-run the configuration embedded in an artifact")
    p.add_argument("artifact")
    p.add_argument("--out", help="override the output path")
    return parser


# --- helpers ----------------------------------------------------------------

def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["backend"] = backend()
    return cfg


def _emit_text(text, path):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(doc, path):
    _emit_text(json.dumps(doc, indent=None) + "\n", path)


def _sidecar(path, cfg):
    if path:
        Path(str(path) + ".config.json").write_text(json.dumps(cfg) + "\n", encoding="utf-8")


def _load_dataset(path):
    if path == SYNTHETIC:
        with resources.as_file(resources.files("subspace_fsl") / "data" / "synthetic.csv") as p:
            return fewshot.load_features(p)
    return fewshot.load_features(path)


def _read_input(args):
    if args.features:
        data = fewshot.load_features(args.features)
        return data.features, data.labels
    return _io.read_matrix(args.matrix), None


# --- commands ---------------------------------------------------------------

def cmd_factorize(args):
    X, labels = _read_input(args)
    if Method(args.method).supervised and labels is None:
        raise ConfigError(f"--method {args.method} needs --features (labels)")
    model = fit(args.method, X, args.k, labels=labels, alpha=args.alpha, beta=args.beta,
                iters=args.iters, tol=args.tol, seed=args.seed, eps=args.eps)
    doc = model.to_dict()
    doc["config"] = _config(args)
    _emit_json(doc, args.out)


def cmd_project(args):
    model = _io.load_model(args.model)
    X, _ = _read_input(args)
    V = project_test(X, model, iters=args.iters, tol=args.tol, seed=args.seed)
    if args.out:
        _io.write_matrix(args.out, V)
        _sidecar(args.out, _config(args))
    else:
        sys.stdout.write(f"# rows={V.shape[0]} cols={V.shape[1]}\n")
        np.savetxt(sys.stdout, V, fmt=_io.FLOAT_FMT, delimiter=",")


def cmd_evaluate(args):
    data = _load_dataset(args.data)
    hyper = dict(method=args.method, k=args.k, alpha=args.alpha, beta=args.beta,
                 iters=args.iters, tol=args.tol, eps=args.eps, K=args.K, metric=args.metric,
                 workers=args.workers)
    if args.shots is not None:
        spec = fewshot.EpisodeSpec(ways=args.ways or data.n_classes, shots=args.shots,
                                   query_per_class=args.query or args.shots,
                                   repeats=args.repeats, seed=args.seed)
        report = fewshot.evaluate_episodes(data, spec, **hyper)
    else:
        test = _load_dataset(args.test) if args.test else None
        report = fewshot.evaluate(data, test, repeats=args.repeats, seed=args.seed,
                                  train_size=args.train_size, test_size=args.test_size,
                                  standardize_features=args.standardize, **hyper)
    cfg = _config(args)
    if args.format == "tsv":
        _emit_text(report.to_tsv() + "\n", args.out)
        _sidecar(args.out, cfg)
    else:
        doc = report.to_dict()
        doc["config"] = cfg
        _emit_json(doc, args.out)


def cmd_compare(args):
    a = _io.load_model(args.model_a)
    b = _io.load_model(args.model_b)
    doc = analysis.compare_models(a, b, ridge=args.ridge)
    cfg = _config(args)
    if args.format == "tsv":
        row = [doc["cca_U"]["mean_correlation"], doc["cca_V"]["mean_correlation"]]
        for name in ("sparsity_a", "sparsity_b"):
            for rep in doc[name]:
                row += [rep["hoyer"], rep["zero_fraction"]]
        _emit_text("\t".join(repr(float(v)) for v in row) + "\n", args.out)
        _sidecar(args.out, cfg)
    else:
        doc["config"] = cfg
        _emit_json(doc, args.out)


def cmd_cam(args):
    model = _io.load_model(args.model)
    train = fewshot.load_features(args.train_features)
    if train.n_samples != model.n_samples:
        raise ConfigError(
            f"--train-features has {train.n_samples} samples, the model was fitted on {model.n_samples}")
    head = fewshot.train_linear_head(model.V, train.labels, epochs=args.epochs, lr=args.lr,
                                     seed=args.seed)
    fmap = cam.FeatureMapStack(_io.read_feature_map(args.fmap), source_id=str(args.fmap))
    vec = None
    if args.feature_vec:
        vec = _io.read_matrix(args.feature_vec).ravel()
    amap = cam.cam_generate(fmap, vec, model, head, args.out_h, args.out_w, seed=args.seed)
    _io.write_matrix(args.out + ".csv", amap.values)
    side = amap.sidecar()
    side["config"] = _config(args)
    Path(args.out + ".json").write_text(json.dumps(side) + "\n", encoding="utf-8")
    if args.pgm:
        _io.write_pgm(args.out + ".pgm", amap.values)


def cmd_replay(args):
    doc = json.loads(Path(args.artifact).read_text(encoding="utf-8"))
    cfg = doc.get("config", doc)
    if "command" not in cfg:
        raise ConfigError(f"{args.artifact} carries no embedded configuration")
    cfg = {k: v for k, v in cfg.items() if k != "backend"}
    if args.out is not None:
        cfg["out"] = args.out
    COMMANDS[cfg["command"]](argparse.Namespace(**cfg))


COMMANDS = {
    "factorize": cmd_factorize,
    "project": cmd_project,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "cam": cmd_cam,
    "replay": cmd_replay,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (SubspaceError, ValueError, OSError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        msg = " ".join(str(exc).split())
        sys.stderr.write(json.dumps({"error": code, "message": msg}) + "\n")
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: synth, dr, denoise, detect, classify, eval.

Exit codes: 0 success, 1 usage error (bad flags, missing inputs a method
needs, parameters out of range), 2 data error (unreadable or inconsistent
files), 3 numeric degeneracy.

Every subcommand accepts ``--config path`` naming a ``key = value`` file;
keys are option names (``train-per-class`` or ``train_per_class``). Flags
given on the command line override the file, which overrides defaults.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..detection import MetricMatrix, detect, sml_fit
from ..errors import DataError, DomainError, NumericalError, ShapeError
from ..multi_feature import FeatureBundle, mfc_fit, msne_embed
from ..patch_align import (LabeledDataset, build_alignment, solve_linear_embedding,
                           solve_nonnegative_embedding)
from ..stm import build_feature_tensor, gabor_features, make_gabor_bank, stm_predict_batch, stm_train
from ..tdla import organize_spectral_spatial, tdla_features, tdla_fit
from ..tensor import r1td_denoise
from .classify import evaluate, knn_classify
from .cube import HsiCube, LabelRaster, check_companion, first_n_split
from .envi import read_envi, read_labels, write_envi, write_labels
from .synth import synth_detection, synth_hsi

log = logging.getLogger("rsmanifold")

DR_METHODS = ("pca", "lda", "le", "lle", "dla", "ndml", "mfc", "msne", "tdla")
SUPERVISED = ("lda", "dla", "ndml", "tdla")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


# --------------------------------------------------------------------------
# CSV helpers


def write_csv(path, header: Sequence[str], rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _fmt(v) -> str:
    return repr(float(v))


def write_table(path, index: np.ndarray, values: np.ndarray, prefix: str = "f") -> None:
    """``pixel, f1..fd`` table, one row per pixel index."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    header = ["pixel"] + [f"{prefix}{j + 1}" for j in range(values.shape[1])]
    write_csv(path, header, ([str(int(i))] + [_fmt(v) for v in row]
                             for i, row in zip(index, values)))


def read_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_table`: (pixel indices, N x d values)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2 or not rows[0] or rows[0][0] != "pixel":
        raise DataError(f"{path}: expected a 'pixel,...' header and at least one row")
    try:
        index = np.array([int(r[0]) for r in rows[1:]])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed table ({exc})") from exc
    if values.ndim != 2 or values.shape[1] != len(rows[0]) - 1:
        raise DataError(f"{path}: ragged rows")
    return index, values


def read_spectrum(path) -> np.ndarray:
    """Single-column CSV, one band value per line.

    Blank lines are ignored, as is a non-numeric header on the first line.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            cells = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        if any(len(r) != 1 for r in cells):
            raise ValueError("more than one column")
        if cells:
            try:
                float(cells[0][0])
            except ValueError:
                cells = cells[1:]
        return np.array([float(r[0]) for r in cells])
    except ValueError as exc:
        raise DataError(f"{path}: not a single-column numeric CSV ({exc})") from exc


def _read_truth(path) -> tuple[np.ndarray, np.ndarray]:
    """Truth as (pixel indices, labels) from a label raster header or a CSV table."""
    if str(path).lower().endswith(".hdr"):
        flat = read_labels(path).flat()
        return np.arange(flat.size), flat
    index, values = read_table(path)
    return index, values[:, 0].astype(np.int64)


# --------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with option defaults")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsmanifold",
                     description="Manifold learning and tensor methods for hyperspectral cubes.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a seeded synthetic cube and label raster")
    _common(p)
    p.add_argument("--out", required=True, help="output prefix (writes PREFIX.hdr/.img and "
                                                "PREFIX_labels.hdr/.img)")
    p.add_argument("--scene", choices=("classes", "detection"), default="classes")
    p.add_argument("--rows", type=int, default=32)
    p.add_argument("--cols", type=int, default=32)
    p.add_argument("--bands", type=int, default=30)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--noise", type=float, default=None,
                   help="noise sigma (default 0.05 for classes, 0.01 for detection)")
    p.add_argument("--mixing-width", type=float, default=1.0)
    p.add_argument("--regions-per-class", type=int, default=1)
    p.add_argument("--interleave", choices=("bsq", "bil", "bip"), default="bsq")

    p = sub.add_parser("dr", help="dimensionality reduction to a feature CSV")
    _common(p)
    p.add_argument("--cube", required=True, help="ENVI header of the input cube")
    p.add_argument("--labels", help="ENVI header of the label raster")
    p.add_argument("--method", choices=DR_METHODS, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--out", required=True, help="feature CSV")
    p.add_argument("--train-per-class", type=int, default=10,
                   help="fit on the first n labelled pixels per class (0 = all labelled)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--k1", type=int, default=5)
    p.add_argument("--k2", type=int, default=5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--sigma", default="auto")
    p.add_argument("--reg", type=float, default=1e-3)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--inner-iters", type=int, default=100)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--builder", default="le", help="per-feature builder for mfc")

    p = sub.add_parser("denoise", help="rank-1 tensor decomposition denoising")
    _common(p)
    p.add_argument("--cube", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True, help="output prefix for the denoised ENVI cube")

    p = sub.add_parser("detect", help="target detection with a learned metric")
    _common(p)
    p.add_argument("--cube", required=True)
    p.add_argument("--target", help="single-column CSV target spectrum "
                                    "(default: mean of the training target pixels)")
    p.add_argument("--labels")
    p.add_argument("--target-class", type=int, default=2)
    p.add_argument("--metric", choices=("sml", "identity"), default="sml")
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--lambda-sim", type=float, default=1.0)
    p.add_argument("--lambda-smooth", type=float, default=1.0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--out", required=True, help="score map CSV (rows x cols)")

    p = sub.add_parser("classify", help="classify pixels from features or raw spectra")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--features", help="feature CSV from dr (default: raw spectra of --cube)")
    p.add_argument("--cube")
    p.add_argument("--method", choices=("knn", "stm"), default="knn")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--train-per-class", type=int, default=10)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--classes", help="two class ids for stm, e.g. 1,2")
    p.add_argument("--out", required=True, help="prediction CSV (pixel,label)")

    p = sub.add_parser("eval", help="accuracy report for a prediction CSV")
    _common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True, help="label raster header or pixel,label CSV")
    p.add_argument("--out", help="report CSV")
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _config_defaults(path: Path, command: str, subparser: argparse.ArgumentParser) -> dict:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help") or action.nargs == 0:
            raise UsageError(f"{path}:{lineno}: unknown option {key!r} for {command}")
        try:
            converted = action.type(value) if action.type else value
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
        if action.choices is not None and converted not in action.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {sorted(action.choices)}")
        defaults[dest] = converted
    return defaults


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    """Parse `argv`, letting a ``--config`` file supply option defaults."""
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), None)
    if command is not None:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            sub = _subparser(parser, command)
            defaults = _config_defaults(Path(known.config), command, sub)
            sub.set_defaults(**defaults)
            for action in sub._actions:
                if action.dest in defaults:
                    action.required = False
    args, extra = parser.parse_known_args(argv)
    if extra:
        sub = _subparser(parser, args.command)
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}\n{sub.format_usage().strip()}")
    return args


# --------------------------------------------------------------------------
# subcommands


def _load(args, need_labels: bool = False) -> tuple[HsiCube, Optional[LabelRaster]]:
    cube = read_envi(args.cube)
    raster = None
    if getattr(args, "labels", None):
        raster = read_labels(args.labels)
        check_companion(cube, raster)
    elif need_labels:
        raise UsageError(f"--method {args.method} needs --labels")
    return cube, raster


def _fit_indices(raster: Optional[LabelRaster], n: int, total: int) -> np.ndarray:
    if raster is None:
        return np.arange(total)
    flat = raster.flat()
    if n > 0:
        train, _ = first_n_split(flat, n)
    else:
        train = np.flatnonzero(flat > 0)
    if train.size == 0:
        raise DataError("label raster has no labelled pixels")
    return train


def cmd_synth(args) -> None:
    out = Path(args.out)
    if args.scene == "classes":
        noise = 0.05 if args.noise is None else args.noise
        cube, raster = synth_hsi(args.seed, args.rows, args.cols, args.bands, args.classes,
                                 noise, args.mixing_width, args.regions_per_class)
    else:
        noise = 0.01 if args.noise is None else args.noise
        cube, raster, target = synth_detection(args.seed, args.rows, args.cols, args.bands,
                                               noise_sigma=noise)
        write_csv(str(out) + "_target.csv", ["value"], ([_fmt(v)] for v in target))
    write_envi(cube, str(out) + ".hdr", interleave=args.interleave)
    write_labels(raster, str(out) + "_labels.hdr")
    print(f"wrote {out}.hdr ({cube.rows}x{cube.cols}x{cube.bands}) and {out}_labels.hdr")


def cmd_dr(args) -> None:
    method = args.method
    cube, raster = _load(args, need_labels=method in SUPERVISED)
    x = cube.pixels()
    fit = _fit_indices(raster, args.train_per_class, x.shape[0])
    labels = None if raster is None else raster.flat()[fit]

    if method == "tdla":
        w, half = args.window, args.window // 2
        rows, cols = np.divmod(np.arange(x.shape[0]), cube.cols)
        interior = np.flatnonzero((rows >= half) & (rows < cube.rows - half)
                                  & (cols >= half) & (cols < cube.cols - half))
        # draw the training split among pixels whose window fits
        fit = interior[_fit_indices(LabelRaster(raster.flat()[interior][None, :]),
                                    args.train_per_class, interior.size)]
        train = organize_spectral_spatial(cube, w, [divmod(i, cube.cols) for i in fit],
                                          raster.flat()[fit])
        proj = tdla_fit(train, (w, w, args.dim), k1=args.k1, k2=args.k2, beta=args.beta,
                        outer_iters=args.iters)
        everything = organize_spectral_spatial(cube, w, [divmod(i, cube.cols) for i in interior])
        write_table(args.out, interior, tdla_features(everything, proj))
        return

    if method in ("mfc", "msne"):
        texture = gabor_features(cube, make_gabor_bank())
        if method == "mfc":
            params = _builder_params(args, args.builder)
            bundle = FeatureBundle([x[fit], texture[fit]], labels)
            res = mfc_fit(bundle, args.dim, r=args.r, iters=args.iters, builder=args.builder,
                          **params)
            print("feature weights " + " ".join(_fmt(a) for a in res.alpha))
            write_table(args.out, np.arange(x.shape[0]), res.projection.transform(np.hstack([x, texture])))
        else:
            bundle = FeatureBundle([x[fit], texture[fit]])
            res = msne_embed(bundle, args.dim, perplexity=args.perplexity, r=args.r,
                             iters=args.iters, inner_iters=args.inner_iters, seed=args.seed)
            print("feature weights " + " ".join(_fmt(a) for a in res.alpha))
            write_table(args.out, fit, res.embedding)
        return

    data = LabeledDataset(x[fit], labels if method in SUPERVISED else None)
    if method == "ndml":
        align = build_alignment("dla", data, **_builder_params(args, "dla"))
        proj = solve_nonnegative_embedding(data, align, args.dim)
    else:
        align = build_alignment(method, data, **_builder_params(args, method))
        proj = solve_linear_embedding(data, align, args.dim)
    write_table(args.out, np.arange(x.shape[0]), proj.transform(x))


def _builder_params(args, method: str) -> dict:
    sigma = args.sigma if args.sigma == "auto" else float(args.sigma)
    return {
        "le": {"k": args.k, "sigma": sigma},
        "lle": {"k": args.k, "reg": args.reg},
        "dla": {"k1": args.k1, "k2": args.k2, "beta": args.beta},
    }.get(method, {})


def cmd_denoise(args) -> None:
    cube = read_envi(args.cube)
    clean = np.maximum(r1td_denoise(cube.data, args.k), 0.0)
    write_envi(HsiCube(clean, cube.wavelengths), str(args.out) + ".hdr")
    print(f"wrote {args.out}.hdr from {args.k} rank-1 terms")


def cmd_detect(args) -> None:
    cube = read_envi(args.cube)
    x = cube.pixels()
    raster = None
    if args.labels:
        raster = read_labels(args.labels)
        check_companion(cube, raster)
    if raster is None and (args.metric == "sml" or not args.target):
        raise UsageError("detect needs --labels to learn a metric or build the target template "
                         "(use --metric identity with --target otherwise)")
    truth = test = None
    if raster is not None:
        flat = raster.flat()
        if args.target_class not in raster.classes:
            raise DataError(f"target class {args.target_class} does not occur in the labels")
        train, test = first_n_split(flat, args.train_per_class)
        is_target = flat == args.target_class
        pos, neg = x[train[is_target[train]]], x[train[~is_target[train]]]
        truth = is_target
    if args.target:
        template = read_spectrum(args.target)
    else:
        template = pos.mean(axis=0)
    if template.size != cube.bands:
        raise DataError(f"target spectrum has {template.size} values for {cube.bands} bands")
    if args.metric == "sml":
        metric = sml_fit(pos, neg, args.lambda_sim, args.lambda_smooth, k=args.k, steps=args.steps)
    else:
        metric = MetricMatrix.identity(cube.bands)
    scores = detect(x, template, metric).scores
    write_csv(args.out, [f"c{j}" for j in range(cube.cols)],
              ([_fmt(v) for v in row] for row in scores.reshape(cube.rows, cube.cols)))
    if truth is not None and test.size and 0 < truth[test].sum() < test.size:
        auc = detect(x[test], template, metric, truth[test]).auc
        print(f"AUC {auc:.6f}")


def cmd_classify(args) -> None:
    raster = read_labels(args.labels)
    flat = raster.flat()
    if args.method == "stm":
        _classify_stm(args, raster)
        return
    if args.features:
        index, feats = read_table(args.features)
    elif args.cube:
        cube = read_envi(args.cube)
        check_companion(cube, raster)
        feats, index = cube.pixels(), np.arange(flat.size)
    else:
        raise UsageError("classify needs --features or --cube")
    if index.size and (index.min() < 0 or index.max() >= flat.size):
        raise DataError("feature table refers to pixels outside the label raster")
    sub = flat[index]
    train, test = first_n_split(sub, args.train_per_class)
    if train.size == 0 or test.size == 0:
        raise DataError("not enough labelled pixels for a train/test split")
    pred = knn_classify(feats[train], sub[train], feats[test], k=args.k)
    write_csv(args.out, ["pixel", "label"], ([str(int(i)), str(int(p))]
                                             for i, p in zip(index[test], pred)))
    print(f"classified {test.size} pixels")


def _classify_stm(args, raster: LabelRaster) -> None:
    if not args.cube:
        raise UsageError("stm needs --cube (spectra and texture are built from it)")
    cube = read_envi(args.cube)
    check_companion(cube, raster)
    flat = raster.flat()
    if args.classes:
        try:
            pair = [int(v) for v in args.classes.split(",")]
        except ValueError:
            raise UsageError("--classes takes two comma-separated ids") from None
    else:
        pair = raster.classes.tolist()
    if len(pair) != 2:
        raise UsageError(f"stm is a two-class method; pass --classes a,b (found {pair})")
    half = args.window // 2
    rows, cols = np.divmod(np.arange(flat.size), cube.cols)
    usable = ((rows >= half) & (rows < cube.rows - half) & (cols >= half)
              & (cols < cube.cols - half) & np.isin(flat, pair))
    index = np.flatnonzero(usable)
    sub = flat[index]
    train, test = first_n_split(sub, args.train_per_class)
    if train.size == 0 or test.size == 0:
        raise DataError("not enough labelled pixels for a train/test split")
    texture = gabor_features(cube, make_gabor_bank())
    tensors = [build_feature_tensor(cube, divmod(int(i), cube.cols), args.window, texture)
               for i in index]
    y = np.where(sub == pair[0], 1, -1)
    model = stm_train([tensors[j] for j in train], y[train], c=args.c)
    labels, _ = stm_predict_batch([tensors[j] for j in test], model)
    pred = np.where(labels == 1, pair[0], pair[1])
    write_csv(args.out, ["pixel", "label"], ([str(int(i)), str(int(p))]
                                             for i, p in zip(index[test], pred)))
    print(f"classified {test.size} pixels")


def cmd_eval(args) -> None:
    index, values = read_table(args.pred)
    pred = values[:, 0].astype(np.int64)
    t_index, t_labels = _read_truth(args.truth)
    lookup = dict(zip(t_index.tolist(), t_labels.tolist()))
    missing = [i for i in index.tolist() if i not in lookup]
    if missing:
        raise DataError(f"{len(missing)} predicted pixels have no truth entry")
    truth = np.array([lookup[i] for i in index.tolist()])
    report = evaluate(pred, truth)
    if args.out:
        rows = report.to_rows()
        write_csv(args.out, rows[0], rows[1:])
    print(f"OA {report.overall_accuracy:.6f} kappa {report.kappa:.6f}")


COMMANDS = {"synth": cmd_synth, "dr": cmd_dr, "denoise": cmd_denoise, "detect": cmd_detect,
            "classify": cmd_classify, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numeric degeneracy: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

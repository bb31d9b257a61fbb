"""Command-line entry point.

Pure router: parses flags, dispatches to the library modules, and maps error
families onto exit codes (I/O=2, validation=3, violated guard=4, usage=64).
All randomness flows from explicit --seed flags; every artifact carries the
resolved configuration it was produced with.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import embedstore, head as head_mod, metrics, protocols, quality
from .errors import EmptyInputError, GuardError, ValidationError

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_GUARD = 4
EXIT_USAGE = 64

log = logging.getLogger("ffdkit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ffdkit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("select-frames", help="rank frames by LoG sharpness")
    p.add_argument("--input", required=True, help="directory of PNG/PGM frames")
    p.add_argument("--sigma", type=float, default=quality.DEFAULT_SIGMA)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--out", required=True, help="output manifest JSON")
    p.set_defaults(func=cmd_select_frames)

    p = sub.add_parser("corpus", help="corpus management")
    corpus_sub = p.add_subparsers(dest="corpus_command", parser_class=_Parser)
    ps = corpus_sub.add_parser("synth", help="generate a synthetic Gaussian corpus")
    ps.add_argument("--n", type=int, required=True, help="records per condition")
    ps.add_argument("--dim", type=int, required=True)
    ps.add_argument("--separation", type=float, required=True)
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--out", required=True, help="corpus base path")
    ps.add_argument("--name", default=None)
    ps.set_defaults(func=cmd_corpus_synth)
    pv = corpus_sub.add_parser("validate", help="validate a corpus file pair")
    pv.add_argument("path")
    pv.set_defaults(func=cmd_corpus_validate)

    p = sub.add_parser("train", help="train a classification head on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--layers", type=int, default=3, help="hidden layers (0-3)")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a corpus split with a trained head")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=embedstore.SPLITS, default="test")
    p.add_argument("--report", required=True, help="output directory")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="run an experiment protocol")
    p.add_argument("--mode", choices=protocols.MODES, default=None)
    p.add_argument("--corpus", default=None)
    p.add_argument("--config", default=None, help="JSON experiment config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--grid-search", action="store_true", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-render DET CSVs in a directory to SVG")
    p.add_argument("--in", dest="in_dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def cmd_select_frames(args) -> int:
    kernel = quality.make_log_kernel(args.sigma, args.radius)
    frame_dir = Path(args.input)
    paths = sorted(
        p for p in frame_dir.iterdir() if p.suffix.lower() in (".png", ".pgm")
    ) if frame_dir.is_dir() else []
    if not paths:
        raise EmptyInputError(f"no PNG/PGM frames under {args.input}")
    frames = [quality.load_gray_image(p) for p in paths]
    best, best_score = quality.select_best_frame(frames, kernel)
    manifest = {
        "provenance": {
            "tool": "ffdkit-0.1.0",
            "command": "select-frames",
            "sigma": kernel.sigma,
            "radius": kernel.radius,
            "input": str(frame_dir),
        },
        "frames": [
            {"path": str(p), "sharpness": quality.sharpness(img, kernel)}
            for p, img in zip(paths, frames)
        ],
        "best_index": best,
        "best_path": str(paths[best]),
        "best_sharpness": best_score,
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(manifest, indent=2) + "\n")
    log.info("selected %s (sharpness %.6g) of %d frames", paths[best].name, best_score, len(paths))
    return EXIT_OK


def cmd_corpus_synth(args) -> int:
    records = embedstore.synth_corpus(args.n, args.dim, args.separation, args.seed)
    tag = (
        f"synthetic-gaussian(n={args.n},dim={args.dim},"
        f"separation={args.separation},seed={args.seed})"
    )
    manifest = embedstore.write_corpus(
        records, args.out, name=args.name, backbone_tag=tag
    )
    log.info("wrote %d records (dim %d) to %s", manifest.total(), manifest.dim, args.out)
    return EXIT_OK


def cmd_corpus_validate(args) -> int:
    warnings = embedstore.validate_corpus(args.path)
    for line in warnings:
        log.warning("%s", line)
    manifest = embedstore.read_manifest(args.path)
    log.info(
        "corpus %s valid: %d records, dim %d, backbone %s",
        args.path, manifest.total(), manifest.dim, manifest.backbone_tag,
    )
    return EXIT_OK


def cmd_train(args) -> int:
    _, records = embedstore.read_corpus(args.corpus)
    X_train, y_train = embedstore.binary_view(embedstore.select(records, split="train"))
    X_val, y_val = embedstore.binary_view(embedstore.select(records, split="val"))
    cfg = head_mod.TrainConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed
    )
    hidden = head_mod.hidden_dims_for_depth(args.layers)
    h0 = head_mod.init_head(X_train.shape[1], hidden_dims=hidden, seed=args.seed)
    result = head_mod.train(h0, X_train, y_train, X_val, y_val, cfg)
    meta = {
        "tool": "ffdkit-0.1.0",
        "corpus": args.corpus,
        "seed": args.seed,
        "layers": args.layers,
        "config": {"epochs": cfg.epochs, "lr": cfg.lr, "batch_size": cfg.batch_size},
        "best_epoch": result.best_epoch,
        "best_val_eer": result.best_val_eer,
        "final_val_eer": result.final_val_eer,
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    head_mod.save_head(result.head, args.out, meta=meta)
    log.info(
        "trained %s head for %d epochs; best val EER %s at epoch %s -> %s",
        hidden, cfg.epochs, result.best_val_eer, result.best_epoch, args.out,
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, meta = head_mod.load_head(args.model)
    _, records = embedstore.read_corpus(args.corpus)
    X, y = embedstore.binary_view(embedstore.select(records, split=args.split))
    scores = head_mod.predict(model, X)
    provenance = {
        "tool": "ffdkit-0.1.0",
        "command": "evaluate",
        "model": str(args.model),
        "model_meta": meta,
        "corpus": args.corpus,
        "split": args.split,
        "threshold": args.threshold,
    }
    report = metrics.emit_report(
        metrics.ScoreSet(scores=scores, labels=y),
        args.report,
        name=f"evaluate-{args.split}",
        threshold=args.threshold,
        provenance=provenance,
        svg=not args.no_svg,
    )
    log.info("EER %.4f at threshold %s", report.eer, report.eer_threshold)
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = {
        "mode": args.mode,
        "corpus": args.corpus,
        "out_dir": args.out,
        "seed": args.seed,
        "depth": args.layers,
        "grid_search": args.grid_search,
    }
    if args.config:
        cfg = protocols.load_experiment_config(
            args.config, train_overrides={"epochs": args.epochs}, **overrides
        )
    else:
        missing = [name for name, v in (("--mode", args.mode), ("--corpus", args.corpus), ("--out", args.out)) if v is None]
        if missing:
            raise ValidationError(f"missing {', '.join(missing)} (or pass --config)")
        train_cfg = head_mod.TrainConfig(
            epochs=args.epochs if args.epochs is not None else 50,
        )
        cfg = protocols.ExperimentConfig(
            mode=args.mode,
            corpus=args.corpus,
            out_dir=args.out,
            seed=args.seed if args.seed is not None else 7,
            depth=args.layers if args.layers is not None else 3,
            grid_search=bool(args.grid_search),
            train=train_cfg,
        )
    log.info("resolved experiment config: %s", json.dumps(cfg.provenance()["config"]))
    outcome = protocols.execute(cfg)
    print(protocols.summary_text(outcome.summary_rows))
    return EXIT_OK


def cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    csvs = sorted(in_dir.glob("*.det.csv"))
    if not csvs:
        raise EmptyInputError(f"no *.det.csv files under {in_dir}")
    for csv_path in csvs:
        curve = metrics.read_det_csv(csv_path)
        name = csv_path.name[: -len(".det.csv")]
        metrics.write_det_svg(curve, csv_path.with_suffix(".svg"), title=name)
        log.info("rendered %s", csv_path.with_suffix(".svg"))
    return EXIT_OK


def dispatch(argv) -> int:
    """Parse argv, run the command, and map errors to exit-code families."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except GuardError as exc:
        log.error("guard violated: %s", exc)
        return EXIT_GUARD
    except (ValidationError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

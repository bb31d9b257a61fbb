"""CLI for batch feature extraction into the corpus file format."""

from __future__ import annotations

import argparse
import logging
import sys

from .backbones import BackboneSpec, WeightFetchError
from .extract import MetadataError, extract

log = logging.getLogger("ffd_extractor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffd-extract", description=__doc__)
    parser.add_argument("--metadata", required=True, help="CSV: path,subject_id,eye,condition,split")
    parser.add_argument("--images-root", default=None, help="base dir for relative image paths")
    parser.add_argument("--out", required=True, help="corpus base path")
    parser.add_argument("--family", choices=("dino-v2", "open-clip"), required=True)
    parser.add_argument("--variant", required=True,
                        help="dino-v2: vits14|vitb14|vitl14; open-clip: vit-b-16|vit-b-32|vit-l-14")
    parser.add_argument("--weights", choices=("pretrained", "untrained"), default="pretrained")
    parser.add_argument("--seed", type=int, default=0, help="weight seed for --weights untrained")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--name", default=None, help="corpus name in the manifest")
    return parser


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        spec = BackboneSpec(
            family=args.family, variant=args.variant, weights=args.weights, seed=args.seed
        )
    except ValueError as exc:
        log.error("%s", exc)
        return 3
    try:
        result = extract(
            args.metadata,
            spec,
            args.out,
            batch_size=args.batch_size,
            device=args.device,
            images_root=args.images_root,
            corpus_name=args.name,
        )
    except MetadataError as exc:
        log.error("%s", exc)
        return 3
    except WeightFetchError as exc:
        log.error("%s", exc)
        return 5
    log.info(
        "embedded %d images (dim %d) with %s -> %s",
        result.n_embedded, result.dim, spec.corpus_tag(), result.out_base,
    )
    if result.skipped:
        log.error("%d image(s) skipped; corpus is partial", len(result.skipped))
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""deep-extract command line.

Example:
    deep-extract --model vgg16 --layer fc7 --manifest ids.csv \
                 --images ./corel --out corel_vgg16_fc7.cbfv
"""

from __future__ import annotations

import argparse
import sys

from .extract import LAYERS, MODELS, ExtractError, ExtractSpec, extract_deep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deep-extract", description=__doc__.split("\n\n")[0])
    parser.add_argument("--model", choices=MODELS, required=True)
    parser.add_argument("--layer", choices=LAYERS, required=True)
    parser.add_argument("--manifest", required=True, help="id,label CSV; ids are image filenames")
    parser.add_argument("--images", required=True, help="directory holding the images")
    parser.add_argument("--out", required=True, help="output feature file (binary)")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--random-weights", action="store_true",
                        help="skip pretrained weights; output is only useful for "
                             "format and pipeline smoke tests")
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        summary = extract_deep(
            ExtractSpec(model=ns.model, layer=ns.layer, manifest=ns.manifest,
                        images=ns.images, out=ns.out, batch_size=ns.batch_size,
                        pretrained=not ns.random_weights)
        )
    except (ExtractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    skipped = f", skipped {len(summary['skipped'])}" if summary["skipped"] else ""
    print(f"{summary['model']}/{summary['layer']}: wrote {summary['written']} x "
          f"{summary['dim']} -> {summary['out']}{skipped}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

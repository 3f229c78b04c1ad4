"""bert-export command line: corpus JSONL in, EMB1 + manifest out."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional, Tuple

from .exporter import CONTEXT_MODES, DEFAULT_MODEL, ExportConfig, export

# Mirrors the training pipeline's geometry presets.
GEOMETRY_PRESETS = {
    "DE_1": (1, 1),
    "DE_150": (15, 10),
    "DE_600": (30, 20),
    "DE_1000_A": (100, 10),
    "DE_1000_B": (10, 100),
}


def parse_geometry(text: str) -> Tuple[int, int]:
    if text in GEOMETRY_PRESETS:
        return GEOMETRY_PRESETS[text]
    if "x" in text.lower():
        s, w = text.lower().split("x", 1)
        return int(s), int(w)
    raise argparse.ArgumentTypeError(
        f"geometry must be SxW or one of {', '.join(GEOMETRY_PRESETS)}"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bert-export",
        description="Export per-token transformer embeddings as an EMB1 file",
    )
    parser.add_argument("--corpus", required=True, help="JSONL corpus path")
    parser.add_argument("--out", required=True, help="EMB1 output path")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="pretrained encoder id or local path")
    parser.add_argument("--geometry", type=parse_geometry, default="DE_600",
                        help="SxW or a DE_* preset (default DE_600)")
    parser.add_argument("--context-mode", choices=CONTEXT_MODES,
                        default="per_sentence")
    parser.add_argument("--batch-rows", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    geometry = args.geometry
    if isinstance(geometry, str):
        geometry = parse_geometry(geometry)
    config = ExportConfig(
        corpus_path=args.corpus,
        output_path=args.out,
        geometry=geometry,
        model_id=args.model,
        context_mode=args.context_mode,
        batch_rows=args.batch_rows,
        device=args.device,
    )
    try:
        result = export(config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.records} records (dim {result.dim}) to {result.output_path}")
    print(f"manifest: {result.manifest_path}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} documents: {', '.join(result.skipped)}",
              file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

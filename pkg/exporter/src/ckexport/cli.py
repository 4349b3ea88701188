"""Command-line entry points: export-annotations and export-embeddings."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, annotate, embed, formats
from .job import ExportError, ExportJob


def _common(parser):
    parser.add_argument("--input", required=True, help="JSONL of tweets/claims")
    parser.add_argument("--language", default="en")
    parser.add_argument("--layers", default="9,10,11,12",
                        help="comma-separated 1-based hidden layer indices")
    parser.add_argument("--out", required=True)
    parser.add_argument("--stopword-list", default="")


def _job(args) -> ExportJob:
    return ExportJob(
        input_path=args.input,
        language=args.language,
        layers=[int(x) for x in args.layers.split(",") if x.strip()],
        stopword_list=args.stopword_list,
        output_path=Path(args.out),
    )


def _metadata(job: ExportJob, kind: str, extra=None) -> dict:
    meta = {
        "exporter_version": __version__,
        "kind": kind,
        "language": job.language,
        "annotation_backend": job.annotation_backend,
        "embedding_backend": job.embedding_backend,
        "layers": list(job.layers),
        "stopword_list": job.stopword_list,
        "input": str(job.input_path),
    }
    meta.update(extra or {})
    return meta


def main_annotations(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-annotations",
        description="Emit annotation JSON Lines for a tweet file")
    _common(parser)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    try:
        job = _job(args)
        rows, skipped = annotate.export_annotations(job)
        formats.write_jsonl(job.output_path, rows)
        formats.write_metadata(
            job.output_path.with_suffix(job.output_path.suffix + ".meta.json"),
            _metadata(job, "annotations", {"units": len(rows),
                                           "skipped": skipped}))
        print(f"wrote {len(rows)} annotations to {job.output_path} "
              f"({skipped} skipped)")
        return 0
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main_embeddings(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-embeddings",
        description="Emit a CKEM tensor file for a tweet or claim file")
    _common(parser)
    parser.add_argument("--unit", choices=("tokens", "sentence"),
                        default="tokens",
                        help="token-layer states or one vector per unit")
    parser.add_argument("--field", default="text",
                        help="input field to encode in sentence mode")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    try:
        job = _job(args)
        if args.unit == "tokens":
            ids, arrays, counts = embed.export_token_layers(job)
            formats.write_token_layers_tensor(job.output_path, ids, arrays)
            extra = {"units": len(ids), "token_counts": counts,
                     "cls_position": 0}
        else:
            ids, matrix = embed.export_sentences(job, args.field)
            formats.write_sentence_tensor(job.output_path, ids, matrix)
            extra = {"units": len(ids), "field": args.field}
        formats.write_metadata(
            job.output_path.with_suffix(job.output_path.suffix + ".meta.json"),
            _metadata(job, f"embeddings/{args.unit}", extra))
        print(f"wrote {len(ids)} units to {job.output_path}")
        return 0
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main_annotations())

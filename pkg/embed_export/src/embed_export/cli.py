"""embed-export command line: one `export` subcommand."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .export import DEFAULT_MAX_TOKENS, export_corpus


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    ap.add_argument("--version", action="version", version=f"embed-export {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="write an SDTE store for a canonical JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--encoder",
        required=True,
        help="hash:<dim>, static:<table path>, or hf:<model name>",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        stats = export_corpus(args.corpus, args.encoder, args.out, max_tokens=args.max_tokens)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    print(json.dumps(stats))
    return 0


if __name__ == "__main__":
    sys.exit(main())

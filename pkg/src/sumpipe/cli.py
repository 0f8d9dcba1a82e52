"""``sumpipe`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

from .exceptions import ConfigError, ProviderError, StageError
from .pipeline import STAGES, Run, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_PARTIAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sumpipe", description="Hybrid long-document summarization pipeline.")
    parser.add_argument("command", choices=[*STAGES, "run"])
    parser.add_argument("--config", required=True, help="path to the JSON pipeline config")
    parser.add_argument("--resume", action="store_true", help="skip documents whose stage output is up to date")
    parser.add_argument("--docs", help="comma-separated document ids to process")
    parser.add_argument("--mock-providers", action="store_true", help="use the offline deterministic providers")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    docs = [d.strip() for d in args.docs.split(",") if d.strip()] if args.docs else None
    try:
        cfg = load_config(args.config)
        run = Run(cfg, mock=args.mock_providers, docs=docs, resume=args.resume)
        if args.command == "run":
            results = run.run_all()
        else:
            results = [getattr(run, args.command)()]
    except (ConfigError, StageError) as exc:
        print(f"sumpipe: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"sumpipe: provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER

    code = EXIT_OK
    for result in results:
        print(f"{result.stage}: {len(result.ok)} ok, {len(result.skipped)} skipped, {len(result.failed)} failed")
        for doc_id, error in sorted(result.failed.items()):
            print(f"  {doc_id}: {error}", file=sys.stderr)
        code = max(code, result.exit_code)
    print(f"run directory: {run.root}")
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``embedrate run <config>`` or one stage at a time.

Every stage kind is also a subcommand whose flags mirror the config keys
(``--learning-rate`` for ``learning_rate``). A single-stage invocation is run
as a one-stage pipeline rooted at the current directory.

Exit codes: 0 on success, 1 on a validation error, 2 on a stage error.
"""

from __future__ import annotations

import argparse
import sys

from .pipeline import STAGES, PipelineConfig, Stage, StageError, ValidationError, load_config, run_pipeline


def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embedrate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every stage of a pipeline config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the config's global seed")
    for kind, schema in STAGES.items():
        p = sub.add_parser(kind, help=schema.help)
        for key in schema.required:
            p.add_argument(_flag(key), dest=key, required=True)
        for key, default in schema.optional.items():
            p.add_argument(_flag(key), dest=key, default=None,
                           help=f"default: {default!r}" if default else None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--manifest", default="", help="write a run manifest to this path")
        if kind == "synth":
            p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                           help="generator parameter, e.g. n=500 (repeatable)")
    return parser


def _single_stage(args) -> PipelineConfig:
    schema = STAGES[args.command]
    params = {}
    for key in (*schema.required, *schema.optional):
        value = getattr(args, key)
        if value is not None:
            params[key] = str(value)
    for item in getattr(args, "param", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip()] = value.strip()
    return PipelineConfig(seed=args.seed, stages=[Stage(args.command, args.command, params)],
                          manifest=args.manifest)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            manifest = run_pipeline(load_config(args.config), seed=args.seed)
        else:
            manifest = run_pipeline(_single_stage(args))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for st in manifest.stages:
        print(f"{st['name']}: ok ({st['seconds']:.2f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

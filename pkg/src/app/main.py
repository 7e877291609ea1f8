import argparse
import asyncio
from typing import Sequence

from .pipeline.commands import (
    detect,
    eval as evaluate,
    map as mapping,
    reconstruct,
    segment,
    synth,
    volumes,
)
from .pipeline.commands.common import CommandContext
from .pipeline.utils.config_loader import describe_keys, load_pipeline_config
from .pipeline.utils.error_handler import (
    EXIT_INTERNAL,
    EXIT_IO,
    ParameterError,
    PipelineError,
)
from .settings.config import config
from .settings.logging import logger, setup_logging

COMMANDS = {
    "reconstruct": reconstruct,
    "map": mapping,
    "segment": segment,
    "volumes": volumes,
    "detect": detect,
    "synth": synth,
    "eval": evaluate,
}


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", default=None, help="key=value configuration file"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    parser.add_argument(
        "--jobs",
        type=int,
        default=config.JOBS,
        help="concurrent frame or patch workers",
    )
    parser.add_argument(
        "--log-level",
        default=None,
        choices=("TRACE", "DEBUG", "INFO", "WARNING", "ERROR"),
    )


def build_parser() -> argparse.ArgumentParser:
    epilog = "configuration keys and defaults:\n" + describe_keys()
    parser = argparse.ArgumentParser(
        prog="vinescan",
        description="Vineyard row phenotyping from stereo and colour images",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS.values():
        module.add_parser(subparsers)
    for sub in subparsers.choices.values():
        sub.epilog = epilog
        sub.formatter_class = argparse.RawDescriptionHelpFormatter
        add_common_arguments(sub)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.jobs < 1:
            raise ParameterError("--jobs must be at least 1", jobs=args.jobs)
        context = CommandContext(
            config=load_pipeline_config(args.config, args.overrides),
            jobs=args.jobs,
        )
        with logger.contextualize(command=args.command):
            logger.info(f"Running with {args.jobs} job(s)")
            return asyncio.run(COMMANDS[args.command].run(args, context))
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_IO
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())

import sys
from typing import List, Optional

from pydantic import ValidationError

from src.cli.commands import COMMANDS
from src.cli.dependencies import apply_config_defaults, build_run_config, load_config_file
from src.cli.router import build_parser
from src.core.exceptions import GeBridgeError
from src.core.logger import get_logger, set_level
from src.storage.output import write_output

logger = get_logger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command line

    Args:
        argv: Arguments without the program name (sys.argv[1:] by default)

    Returns:
        int: 0 success, 1 internal error, 2 domain or usage error,
        3 acceptance failure under validate-table --strict
    """
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            apply_config_defaults(subparsers[args.command], load_config_file(args.config))
            args = parser.parse_args(argv)
        if args.log_level:
            set_level(args.log_level)

        config = build_run_config(args)
        result = COMMANDS[config.command](config)
        write_output(result.render(config.output_format), config.output)
        return result.exit_code
    except SystemExit as e:
        # argparse reports usage errors with exit status 2
        return e.code if isinstance(e.code, int) else 2
    except GeBridgeError as e:
        logger.error(e.detail)
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        return 2
    except Exception:
        logger.exception("Unexpected error")
        return 1


def main_entry() -> None:
    """Console-script entry point"""
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

"""
Main application entry point.
"""
import sys

from app_factory import create_app
from utils.exceptions import SimDiffError


def main(argv=None) -> int:
    cli = create_app()
    try:
        cli.main(args=argv, prog_name='simdiff', standalone_mode=True)
    except SystemExit as e:
        return int(e.code or 0)
    except SimDiffError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    finally:
        cli.run_logger.close()
    return 0


if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted.")
        sys.exit(130)

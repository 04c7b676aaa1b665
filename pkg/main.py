#!/usr/bin/env python3
"""
rsa-lab: contraction rates of recursive stochastic algorithms
Main application entry point
"""

import sys
import os
import logging

# Add project root to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from harness.command_line import build_parser, dispatch
from harness.reports import EXIT_INVALID


def setup_logging(verbose=False, log_file="rsa_lab.log"):
    """Setup logging configuration"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )


def check_dependencies():
    """Check if all required dependencies are available"""
    required_modules = [
        'numpy', 'scipy', 'ot'
    ]

    missing_modules = []
    for module in required_modules:
        try:
            __import__(module)
        except ImportError:
            missing_modules.append(module)

    if missing_modules:
        error_msg = f"Missing required modules: {', '.join(missing_modules)}\n"
        error_msg += "Please install them using:\n"
        error_msg += "pip install numpy scipy pot"
        print(error_msg, file=sys.stderr)
        return False

    return True


def main(argv=None):
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.log_file)
    logger = logging.getLogger(__name__)

    try:
        # Check dependencies
        if not check_dependencies():
            return EXIT_INVALID

        logger.info(f"Starting rsa-lab {args.command}")
        return dispatch(args)

    except Exception as e:
        logger.error(f"Application error: {str(e)}", exc_info=True)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

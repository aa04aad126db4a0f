import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from src.composite_opt.api.cli import cmd_baseline, cmd_check, cmd_qscale, cmd_run
from src.composite_opt.api.config_file import load_experiment_config
from src.composite_opt.api.schemas import QScaleRequest
from src.composite_opt.config import settings
from src.composite_opt.core.errors import CompositeOptError

logger = logging.getLogger(__name__)

EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="composite-opt",
        description="Composite finite-sum training with simultaneous output-space steps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "Train with the configured algorithm and write metrics"),
        ("check", "Estimate assumption constants and interpolation feasibility at w0"),
        ("baseline", "Run the configured GD/SGD baseline"),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("--config", required=True, help="Path to a flat key = value config file")

    qscale = sub.add_parser("qscale", help="Q-norm scaling of the two-point linear network")
    qscale.add_argument("--eps", required=True, help="Comma-separated descending eps values, e.g. 0.1,0.05,0.025")
    qscale.add_argument("--seed", required=True, type=int)

    parser.add_argument("--log-level", default=None, help="Overrides COMPOSITE_OPT_LOG_LEVEL")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        if args.command == "qscale":
            request = QScaleRequest(eps=[item.strip() for item in args.eps.split(",") if item.strip()], seed=args.seed)
            return cmd_qscale(request)
        config = load_experiment_config(args.config)
        handler = {"run": cmd_run, "check": cmd_check, "baseline": cmd_baseline}[args.command]
        return handler(config)
    except (CompositeOptError, ValidationError) as e:
        logger.error(f"[CLI] {args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

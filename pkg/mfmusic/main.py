import argparse
import logging
from typing import Any, Dict, List, Optional, Union

from colorama import Fore, Style, init
from pydantic import BaseModel, ValidationError

from mfmusic.config import Config
from mfmusic.exceptions import ConfigValidationError, ConvergenceFailure, MfMusicError, MissingModelOrder
from mfmusic.services.forward_service import RescaleVariant
from mfmusic.services.pipeline_service import ReconstructOptions, SimulateOptions, get_pipeline_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NO_MODEL_ORDER = 4


class CommandResult(BaseModel):
    status: str
    message: str
    exit_code: int = EXIT_OK
    outputs: Dict[str, str] = {}
    peaks: Optional[List[List[float]]] = None


def _simulate_options(arguments: Dict[str, Any]) -> SimulateOptions:
    return SimulateOptions(model=arguments.get("model"), quad_order=arguments.get("quad_order"),
                           noise=arguments.get("noise"), noise_mode=arguments.get("noise_mode"),
                           seed=arguments.get("seed"))


def _reconstruct_options(arguments: Dict[str, Any]) -> ReconstructOptions:
    values = {
        "functional": arguments.get("functional"),
        "mtilde": arguments.get("mtilde"),
        "M": arguments.get("M"),
        "variant": arguments.get("variant"),
        "grid_points": arguments.get("grid"),
        "out_format": arguments.get("out_format"),
        "threshold": arguments.get("threshold"),
        "min_separation": arguments.get("min_separation"),
        "confirm_with_i2": arguments.get("confirm_i2"),
    }
    return ReconstructOptions(**{k: v for k, v in values.items() if v is not None})


def execute_command(command: str, arguments: Dict[str, Any]) -> CommandResult:
    """Run one CLI command and translate its outcome into an exit code"""
    pipeline = get_pipeline_service()
    try:
        if command == "simulate":
            result = pipeline.cmd_simulate(arguments["config"], arguments["out"], _simulate_options(arguments))
        elif command == "reconstruct":
            result = pipeline.cmd_reconstruct(arguments["tensor"], arguments["config"], arguments["out"],
                                              _reconstruct_options(arguments))
        elif command == "pipeline":
            result = pipeline.cmd_pipeline(arguments["config"], arguments["out"], _simulate_options(arguments),
                                           _reconstruct_options(arguments))
        elif command == "sv-dump":
            variant = RescaleVariant(arguments.get("variant") or RescaleVariant.EXTENDED)
            result = pipeline.cmd_sv_dump(arguments["tensor"], arguments["config"], arguments["out"], variant)
        else:
            return CommandResult(status="error", message=f"Unknown command: {command}", exit_code=EXIT_INVALID)
    except ConfigValidationError as e:
        return CommandResult(status="error", message="\n".join(e.violations), exit_code=EXIT_INVALID)
    except MissingModelOrder as e:
        return CommandResult(status="error", message=str(e), exit_code=EXIT_NO_MODEL_ORDER)
    except ConvergenceFailure as e:
        return CommandResult(status="error", message=str(e), exit_code=EXIT_FAILURE)
    except MfMusicError as e:
        return CommandResult(status="error", message=f"{type(e).__name__}: {e}", exit_code=EXIT_INVALID)
    except (ValidationError, ValueError) as e:
        return CommandResult(status="error", message=str(e), exit_code=EXIT_INVALID)
    except OSError as e:
        return CommandResult(status="error", message=f"I/O failure: {e}", exit_code=EXIT_IO)
    return CommandResult(**result)


def _mtilde(value: str) -> Union[int, str]:
    if value in ("auto", "gap"):
        return value
    try:
        m_tilde = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected auto, gap or a positive integer")
    if m_tilde < 1:
        raise argparse.ArgumentTypeError("retained dimension must be positive")
    return m_tilde


def _grid(value: str) -> tuple:
    try:
        points = tuple(int(n) for n in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected nx[,ny[,nz]]")
    if not 1 <= len(points) <= 3 or min(points) < 1:
        raise argparse.ArgumentTypeError("expected one to three positive point counts")
    return points


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfmusic",
                                     description="Multifrequency MUSIC localization of small scatterers")
    commands = parser.add_subparsers(dest="command", required=True)

    def simulate_flags(p):
        p.add_argument("--model", choices=["leading", "born"])
        p.add_argument("--quad-order", type=int)
        p.add_argument("--noise", type=float)
        p.add_argument("--noise-mode", choices=["global", "entrywise"])
        p.add_argument("--seed", type=int)

    def reconstruct_flags(p):
        p.add_argument("--functional", choices=["i1", "i2"])
        p.add_argument("--mtilde", type=_mtilde, help="auto, gap or a fixed retained dimension")
        p.add_argument("--M", type=int, help="number of scatterers (needed by i2 unless --mtilde=auto)")
        p.add_argument("--variant", choices=["extended", "realonly"])
        p.add_argument("--grid", type=_grid, help="points per axis: nx or nx,ny[,nz]")
        p.add_argument("--out-format", choices=["csv", "vtk", "both"])
        p.add_argument("--threshold", type=float)
        p.add_argument("--min-separation", type=float)
        p.add_argument("--confirm-i2", action="store_true", default=None,
                       help="rerun the model-order estimate with I2")

    simulate = commands.add_parser("simulate", help="synthesize a far field tensor")
    simulate.add_argument("config")
    simulate_flags(simulate)

    reconstruct = commands.add_parser("reconstruct", help="image a far field tensor")
    reconstruct.add_argument("tensor")
    reconstruct.add_argument("config")
    reconstruct_flags(reconstruct)

    pipeline = commands.add_parser("pipeline", help="simulate and reconstruct in one run")
    pipeline.add_argument("config")
    simulate_flags(pipeline)
    reconstruct_flags(pipeline)

    sv_dump = commands.add_parser("sv-dump", help="write the singular spectra of every direction")
    sv_dump.add_argument("tensor")
    sv_dump.add_argument("config")
    sv_dump.add_argument("--variant", choices=["extended", "realonly"])

    for p in (simulate, reconstruct, pipeline, sv_dump):
        p.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    init(autoreset=True)
    logging.basicConfig(level=Config.LOG_LEVEL)
    args = build_parser().parse_args(argv)
    arguments = vars(args)
    logger.info(f"Running {args.command}")

    result = execute_command(args.command, arguments)
    if result.exit_code == EXIT_OK:
        print(f"{Fore.GREEN}{result.message}{Style.RESET_ALL}")
        for name, path in result.outputs.items():
            print(f"  {name}: {path}")
        for position in result.peaks or []:
            print("  peak at (" + ", ".join(f"{c:.4g}" for c in position) + ")")
    else:
        logger.error(result.message)
        print(f"{Fore.RED}{result.message}{Style.RESET_ALL}")
    return result.exit_code


if __name__ == "__main__":
    raise SystemExit(main())

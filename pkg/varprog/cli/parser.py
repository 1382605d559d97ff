"""Command-line parsing into a fully resolved :class:`RunSpec`.

Precedence, lowest first: built-in defaults, environment (``Settings``), ``--config`` file,
command-line flags.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from varprog import __version__
from varprog.core.config import Settings
from varprog.schemas.config import Algorithm, BaselineMode, ModelName, OuterLoop, RunSpec

logger = logging.getLogger(__name__)

FILE_MODELS = (ModelName.qmr, ModelName.lda)
FLAG_KEYS = {"wallclock"}
TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


def _choice_list(enum_cls):
    names = [member.value for member in enum_cls]

    def parse(text: str) -> list:
        items = [item.strip() for item in text.split(",") if item.strip()]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma-separated list")
        try:
            return [enum_cls(item) for item in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(
                f"invalid choice in {text!r} (choose from {', '.join(names)})"
            ) from exc

    return parse


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be integers, got {text!r}") from exc
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("seeds must be a nonempty list of nonnegative integers")
    return seeds


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


def create_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varprog",
        description="Optimize partial mean-field variational programs with score-function "
        "gradients. Use 'varprog generate {qmr,lda} --out FILE' to write a synthetic model file.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", metavar="FILE", help="key=value lines using the flag names")

    model = parser.add_argument_group("model")
    model.add_argument("--model", type=ModelName, choices=list(ModelName), metavar="NAME",
                       help="one of: " + ", ".join(m.value for m in ModelName))
    model.add_argument("--model-file", metavar="FILE", help="QMR or LDA model file")
    model.add_argument("--data-seed", type=_nonnegative_int, default=0,
                       help="seed for the synthetic instance when no model file is given")

    optim = parser.add_argument_group("optimization")
    optim.add_argument("--algo", dest="algorithms", type=_choice_list(Algorithm),
                       default=[Algorithm.sgd, Algorithm.enac, Algorithm.sogd],
                       help="comma-separated: " + ", ".join(a.value for a in Algorithm))
    optim.add_argument("--outer", type=OuterLoop, choices=list(OuterLoop),
                       default=OuterLoop.steepest, metavar="{steepest,cg}")
    optim.add_argument("--stepsize", type=float, default=0.05)
    optim.add_argument("--rollouts", type=_positive_int, default=10)
    optim.add_argument("--iters", dest="iterations", type=_nonnegative_int, default=500)
    optim.add_argument("--seed", "--seeds", dest="seeds", type=_seed_list, default=[0],
                       help="comma-separated list of seeds")
    optim.add_argument("--ridge", type=float, default=1e-3)
    optim.add_argument("--elbo-samples", dest="elbo_eval_samples", type=_positive_int,
                       default=100)
    optim.add_argument("--restart-period", type=_positive_int, default=20)
    optim.add_argument("--baseline-mode", type=BaselineMode, choices=list(BaselineMode),
                       default=BaselineMode.component, metavar="{component,scalar}")
    optim.add_argument("--resume", metavar="SNAPSHOT", help="start from a saved store")

    output = parser.add_argument_group("output")
    output.add_argument("--out", dest="output_dir", default=settings.output_dir)
    output.add_argument("--marginals", type=_nonnegative_int, default=0,
                        help="posterior samples for the marginals file (0 disables it)")
    output.add_argument("--wallclock", dest="record_wallclock",
                        action=argparse.BooleanOptionalAction,
                        default=settings.record_wallclock,
                        help="record elapsed seconds instead of 0 in the wallclock column")
    output.add_argument("--jobs", type=_positive_int, default=settings.jobs)
    output.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        default=settings.log_level)
    return parser


def read_config_file(path: str | Path) -> list[str]:
    """Translate ``key=value`` lines into the equivalent flag list."""
    argv: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise argparse.ArgumentTypeError(f"{path}:{lineno}: expected key=value")
        flag = "--" + key.replace("_", "-")
        if key in FLAG_KEYS:
            if value.lower() in TRUE_WORDS:
                argv.append(flag)
            elif value.lower() in FALSE_WORDS:
                argv.append("--no-" + key.replace("_", "-"))
            else:
                raise argparse.ArgumentTypeError(f"{path}:{lineno}: {key} must be true or false")
        else:
            argv.extend([flag, value])
    return argv


def parse_run_spec(argv: Sequence[str], settings: Settings) -> tuple[RunSpec, str]:
    """Resolve flags into a RunSpec and the requested log level; usage errors exit with 2."""
    parser = create_parser(settings)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            config_argv = read_config_file(known.config)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
        if "--config" in config_argv:
            parser.error("config files cannot include other config files")
        baseline = vars(parser.parse_args([]))
        from_file = vars(parser.parse_args(config_argv))
        parser.set_defaults(**{k: v for k, v in from_file.items() if v != baseline[k]})
        logger.debug("loaded %d settings from %s", len(config_argv), known.config)

    args = parser.parse_args(argv)
    if args.model is None:
        parser.error("--model is required")
    if args.model_file is not None and args.model not in FILE_MODELS:
        parser.error(f"--model-file only applies to {', '.join(m.value for m in FILE_MODELS)}")
    fields = vars(args)
    log_level = fields.pop("log_level")
    fields.pop("config")
    try:
        spec = RunSpec(**fields)
    except ValidationError as exc:
        parser.error(str(exc))
    return spec, log_level


def create_generate_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varprog generate", description="Write a synthetic model file."
    )
    parser.add_argument("kind", choices=[m.value for m in FILE_MODELS])
    parser.add_argument("--out", required=True, metavar="FILE")
    parser.add_argument("--seed", type=_nonnegative_int, default=0)
    parser.add_argument("--diseases", type=_positive_int, default=None)
    parser.add_argument("--findings", type=_positive_int, default=None)
    parser.add_argument("--topics", type=_positive_int, default=None)
    parser.add_argument("--vocab", type=_positive_int, default=None)
    parser.add_argument("--documents", type=_positive_int, default=None)
    parser.add_argument("--words", type=_positive_int, default=None,
                        help="words per document")
    return parser


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from exc
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1], got {value}")
    return value


def create_compare_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varprog compare",
        description="Check estimator and outer-loop orderings across finished runs.",
    )
    parser.add_argument("directories", nargs="+", metavar="DIR",
                        help="output directories of varprog runs, each with a manifest.json")
    parser.add_argument("--at", type=_positive_int, default=500,
                        help="iteration whose SGD ELBO ENAC has to reach")
    parser.add_argument("--fraction", type=_fraction, default=0.6,
                        help="share of --at within which ENAC has to reach it")
    parser.add_argument("--report", metavar="FILE",
                        help="JSON report path (default: comparison.json in the first DIR)")
    return parser

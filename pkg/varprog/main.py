import logging
import sys
from pathlib import Path
from typing import Sequence

from varprog.cli import compare as comparison
from varprog.cli.parser import create_compare_parser, create_generate_parser, parse_run_spec
from varprog.cli.runner import run_all
from varprog.core.config import get_settings
from varprog.core.exceptions import VarProgError
from varprog.core.logging import configure_logging
from varprog.services import models
from varprog.services.model_files import write_lda, write_qmr

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2


def generate(argv: Sequence[str]) -> int:
    args = create_generate_parser().parse_args(argv)
    if args.kind == "qmr":
        sizes = {"n_diseases": args.diseases, "n_findings": args.findings}
        model = models.generate_qmr(
            **{k: v for k, v in sizes.items() if v is not None}, seed=args.seed
        )
        write_qmr(model, args.out)
    else:
        sizes = {
            "n_topics": args.topics,
            "vocab_size": args.vocab,
            "n_documents": args.documents,
            "words_per_document": args.words,
        }
        lda = models.generate_lda(
            **{k: v for k, v in sizes.items() if v is not None}, seed=args.seed
        )
        write_lda(lda, args.out)
    return EXIT_OK


def compare(argv: Sequence[str]) -> int:
    args = create_compare_parser().parse_args(argv)
    histories = comparison.load_histories(args.directories)
    report = comparison.compare(histories, at=args.at, fraction=args.fraction)
    print(comparison.format_report(report))
    path = args.report or Path(args.directories[0]) / comparison.REPORT_NAME
    comparison.write_report(report, path)
    if not report.passed:
        logger.warning("at least one ordering check failed")
    return EXIT_OK


COMMANDS = {"generate": generate, "compare": compare}


def main(argv: Sequence[str] | None = None) -> int:
    settings = get_settings()
    configure_logging(settings.log_level)
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv[:1] and argv[0] in COMMANDS:
            return COMMANDS[argv[0]](argv[1:])
        spec, log_level = parse_run_spec(argv, settings)
        configure_logging(log_level)
        manifest = run_all(spec)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 after --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (VarProgError, OSError) as exc:
        print(f"varprog: error: {exc}", file=sys.stderr)
        return EXIT_IO

    halted = [run.name for run in manifest.runs if run.halted]
    if halted:
        logger.warning("runs halted on a numerical error: %s", ", ".join(halted))
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

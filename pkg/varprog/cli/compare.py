"""Cross-run comparison of optimization histories.

Reads the manifests written by ``varprog`` runs and checks the orderings expected between
estimators and outer loops at an equal trace budget:

- ENAC reaches the ELBO that plain SGD has at iteration ``at`` in at most ``fraction * at``
  iterations (median over seeds), and its across-seed ELBO variance at ``at`` is lower.
- ENAC with conjugate directions reaches the final ELBO of ENAC with steepest ascent
  within the same number of iterations (median over seeds).

SOGD final ELBOs are listed per seed without a verdict.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from varprog.cli.history import read_history
from varprog.cli.runner import MANIFEST_NAME
from varprog.core.exceptions import ModelFileError
from varprog.schemas.config import Algorithm, OuterLoop
from varprog.schemas.records import IterationRecord

logger = logging.getLogger(__name__)

REPORT_NAME = "comparison.json"

RunKey = tuple[Algorithm, OuterLoop, int]


class OrderingCheck(BaseModel):
    name: str
    passed: bool | None
    seeds: list[int]
    detail: dict[str, float | None]


class ComparisonReport(BaseModel):
    at: int
    fraction: float
    checks: list[OrderingCheck]
    sogd_final_elbo: dict[str, dict[int, float]]

    @property
    def passed(self) -> bool:
        return all(check.passed is not False for check in self.checks)


def load_histories(directories: Sequence[str | Path]) -> dict[RunKey, list[IterationRecord]]:
    """Histories keyed by (algorithm, outer loop, seed) from each directory's manifest."""
    histories: dict[RunKey, list[IterationRecord]] = {}
    for directory in map(Path, directories):
        path = directory / MANIFEST_NAME
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
            outer = OuterLoop(manifest["run_spec"]["outer"])
            runs = [
                (Algorithm(run["algorithm"]), int(run["seed"]), run["name"], run["history"])
                for run in manifest["runs"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFileError(f"{path}: not a run manifest: {exc!r}") from exc
        for algorithm, seed, name, history in runs:
            key = (algorithm, outer, seed)
            if key in histories:
                logger.warning("duplicate run %s in %s; keeping the first", name, directory)
                continue
            histories[key] = read_history(directory / history)
    logger.info("loaded %d histories from %d directories", len(histories), len(directories))
    return histories


def elbo_at(history: Sequence[IterationRecord], iteration: int) -> float:
    for record in history:
        if record.iteration == iteration:
            return record.elbo_mean
    return math.nan


def first_reaching(history: Sequence[IterationRecord], level: float) -> float:
    """First iteration whose ELBO is at least ``level``; ``inf`` if it never gets there."""
    for record in history:
        if record.elbo_mean >= level:
            return float(record.iteration)
    return math.inf


def _seeds(histories, *pairs: tuple[Algorithm, OuterLoop]) -> list[int]:
    common = None
    for algorithm, outer in pairs:
        seeds = {s for (a, o, s) in histories if a is algorithm and o is outer}
        common = seeds if common is None else common & seeds
    return sorted(common or ())


def enac_versus_sgd(
    histories: dict[RunKey, list[IterationRecord]],
    at: int,
    fraction: float,
    outer: OuterLoop = OuterLoop.steepest,
) -> OrderingCheck:
    seeds = _seeds(histories, (Algorithm.sgd, outer), (Algorithm.enac, outer))
    if not seeds:
        return OrderingCheck(name="enac-vs-sgd", passed=None, seeds=[], detail={})
    sgd_levels = [elbo_at(histories[Algorithm.sgd, outer, s], at) for s in seeds]
    enac_levels = [elbo_at(histories[Algorithm.enac, outer, s], at) for s in seeds]
    hits = [
        first_reaching(histories[Algorithm.enac, outer, s], level)
        for s, level in zip(seeds, sgd_levels)
    ]
    median_hit = float(np.median(hits))
    sgd_var = float(np.var(sgd_levels, ddof=1)) if len(seeds) > 1 else math.nan
    enac_var = float(np.var(enac_levels, ddof=1)) if len(seeds) > 1 else math.nan
    passed = median_hit <= fraction * at
    if len(seeds) > 1:
        passed = passed and enac_var < sgd_var
    return OrderingCheck(
        name="enac-vs-sgd",
        passed=bool(passed),
        seeds=seeds,
        detail={
            "median_iterations_to_sgd_level": median_hit,
            "iteration_limit": fraction * at,
            "sgd_elbo_variance": sgd_var,
            "enac_elbo_variance": enac_var,
        },
    )


def cg_versus_steepest(
    histories: dict[RunKey, list[IterationRecord]], algorithm: Algorithm = Algorithm.enac
) -> OrderingCheck:
    seeds = _seeds(histories, (algorithm, OuterLoop.steepest), (algorithm, OuterLoop.cg))
    if not seeds:
        return OrderingCheck(name="cg-vs-steepest", passed=None, seeds=[], detail={})
    hits, budgets = [], []
    for seed in seeds:
        steepest = histories[algorithm, OuterLoop.steepest, seed]
        cg = histories[algorithm, OuterLoop.cg, seed]
        hits.append(first_reaching(cg, steepest[-1].elbo_mean))
        budgets.append(steepest[-1].iteration)
    median_hit = float(np.median(hits))
    median_budget = float(np.median(budgets))
    return OrderingCheck(
        name="cg-vs-steepest",
        passed=median_hit <= median_budget,
        seeds=seeds,
        detail={"median_cg_iterations": median_hit, "median_steepest_iterations": median_budget},
    )


def sogd_finals(histories: dict[RunKey, list[IterationRecord]]) -> dict[str, dict[int, float]]:
    finals: dict[str, dict[int, float]] = {}
    for (algorithm, outer, seed), history in sorted(histories.items()):
        if algorithm is Algorithm.sogd:
            finals.setdefault(outer.value, {})[seed] = history[-1].elbo_mean
    return finals


def compare(
    histories: dict[RunKey, list[IterationRecord]], at: int = 500, fraction: float = 0.6
) -> ComparisonReport:
    return ComparisonReport(
        at=at,
        fraction=fraction,
        checks=[enac_versus_sgd(histories, at, fraction), cg_versus_steepest(histories)],
        sogd_final_elbo=sogd_finals(histories),
    )


def format_report(report: ComparisonReport) -> str:
    verdicts = {True: "PASS", False: "FAIL", None: "SKIP (runs missing)"}
    lines = []
    for check in report.checks:
        lines.append(f"{check.name}: {verdicts[check.passed]} over seeds {check.seeds}")
        for key, value in check.detail.items():
            if value is not None:
                lines.append(f"  {key} = {value:.6g}")
    for outer, finals in report.sogd_final_elbo.items():
        lines.append(f"sogd/{outer} final elbo:")
        lines.extend(f"  seed {seed}: {elbo:.6g}" for seed, elbo in finals.items())
    return "\n".join(lines)


def write_report(report: ComparisonReport, path: str | Path) -> None:
    Path(path).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("wrote comparison report to %s", path)

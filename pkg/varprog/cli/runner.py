"""Run orchestration: one optimization per (algorithm, seed), plus the run manifest."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from varprog import __version__
from varprog.cli.history import write_history, write_marginals
from varprog.core.exceptions import ModelFileError, StructuralError
from varprog.schemas.config import Algorithm, ModelName, RunSpec
from varprog.services import models
from varprog.services.meanfield import (
    ParamStore,
    load_snapshot,
    posterior_marginals,
    save_snapshot,
)
from varprog.services.model_files import read_lda, read_qmr
from varprog.services.optimize import run_optimization
from varprog.services.trace import Program

logger = logging.getLogger(__name__)

MARGINALS_STREAM = 2
FIG1_OBSERVATION = {"observation": 0.5, "obs_std": 0.5}
GAUSSIAN_PAIR = {"prior_mean": 0.0, "prior_std": 1.0, "lik_std": 1.0, "y": 1.0}
MANIFEST_NAME = "manifest.json"


class RunOutcome(BaseModel):
    name: str
    algorithm: Algorithm
    seed: int
    history: str
    snapshot: str
    marginals: str | None = None
    iterations_completed: int
    final_elbo: float
    halted: bool


class RunManifest(BaseModel):
    version: str
    run_spec: RunSpec
    model: dict[str, Any]
    runs: list[RunOutcome]


def load_model(spec: RunSpec) -> tuple[Program, dict[str, Any]]:
    """Build the program named by ``spec`` and describe its parameters for the manifest."""
    if spec.model is ModelName.qmr:
        if spec.model_file:
            qmr = read_qmr(spec.model_file)
        else:
            qmr = models.generate_qmr(seed=spec.data_seed)
        return models.qmr_program(qmr), {"name": spec.model.value, **qmr.model_dump()}
    if spec.model is ModelName.lda:
        lda = read_lda(spec.model_file) if spec.model_file else models.generate_lda(
            seed=spec.data_seed
        )
        return models.lda_program(lda), {"name": spec.model.value, **lda.model_dump()}
    if spec.model is ModelName.fig1:
        return models.fig1_program(**FIG1_OBSERVATION), {"name": "fig1", **FIG1_OBSERVATION}
    if spec.model is ModelName.two_coin:
        return models.two_coin_program(), {"name": "two-coin"}
    return models.gaussian_pair_program(**GAUSSIAN_PAIR), {
        "name": "gaussian-pair",
        **GAUSSIAN_PAIR,
    }


def execute_run(spec: RunSpec, algorithm: Algorithm, seed: int) -> RunOutcome:
    """Optimize once and write the history CSV, the store snapshot and optional marginals."""
    program, _ = load_model(spec)
    store = load_snapshot(spec.resume) if spec.resume else ParamStore()
    name = spec.run_name(algorithm, seed)
    logger.info("starting %s", name)
    history = run_optimization(program, store, spec.optimizer_config(algorithm, seed))

    out = Path(spec.output_dir)
    history_path = out / f"{name}.csv"
    snapshot_path = out / f"{name}.store"
    write_history(history, history_path)
    save_snapshot(store, snapshot_path)
    marginals_path = None
    if spec.marginals:
        marginals_path = out / f"{name}.marginals.csv"
        rng = np.random.default_rng([seed, MARGINALS_STREAM])
        write_marginals(posterior_marginals(program, store, spec.marginals, rng), marginals_path)

    return RunOutcome(
        name=name,
        algorithm=algorithm,
        seed=seed,
        history=history_path.name,
        snapshot=snapshot_path.name,
        marginals=marginals_path.name if marginals_path else None,
        iterations_completed=history[-1].iteration,
        final_elbo=history[-1].elbo_mean,
        halted=history[-1].halted,
    )


def run_all(spec: RunSpec) -> RunManifest:
    # fail on unreadable model or snapshot files before any run starts
    _, description = load_model(spec)
    if spec.resume:
        try:
            load_snapshot(spec.resume)
        except StructuralError as exc:
            raise ModelFileError(str(exc)) from exc
    Path(spec.output_dir).mkdir(parents=True, exist_ok=True)

    jobs = [(algorithm, seed) for algorithm in spec.algorithms for seed in spec.seeds]
    if spec.jobs > 1 and len(jobs) > 1:
        logger.info("running %d jobs on %d workers", len(jobs), spec.jobs)
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(execute_run, spec, a, s) for a, s in jobs]
            outcomes = [future.result() for future in futures]
    else:
        outcomes = [execute_run(spec, a, s) for a, s in jobs]

    manifest = RunManifest(
        version=__version__, run_spec=spec, model=description, runs=outcomes
    )
    path = Path(spec.output_dir) / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("wrote manifest for %d runs to %s", len(outcomes), path)
    return manifest

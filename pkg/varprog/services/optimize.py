"""Outer optimization loops over the gradient estimators.

Every algorithm consumes exactly ``rollouts`` guided traces per iteration, its direction is
scaled to unit norm and applied with the same fixed stepsize, so runs at equal
configuration differ only in the quality of their directions.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Callable, Sequence

import numpy as np

from varprog.core.exceptions import NumericalError
from varprog.schemas.config import Algorithm, BaselineMode, OptimizerConfig, OuterLoop
from varprog.schemas.records import IterationRecord
from varprog.services import gradient
from varprog.services.meanfield import ParamStore, elbo_estimate
from varprog.services.trace import Program, Trace, run_guided

logger = logging.getLogger(__name__)

ROLLOUT_STREAM = 0
EVAL_STREAM = 1

DirectionProvider = Callable[[Sequence[Trace], ParamStore, OptimizerConfig], np.ndarray]


def _baseline(traces: Sequence[Trace], store: ParamStore, config: OptimizerConfig) -> np.ndarray:
    b = gradient.optimal_baseline(traces, store)
    if config.baseline_mode is BaselineMode.scalar and b.size:
        return np.full_like(b, b.mean())
    return b


def _sgd(traces, store, config):
    return gradient.score_gradient(traces, store, 0.0).direction


def _sgd_baseline(traces, store, config):
    return gradient.score_gradient(traces, store, _baseline(traces, store, config)).direction


def _enac(traces, store, config):
    return gradient.enac_direction(traces, store, config.ridge).direction


def _sogd(traces, store, config):
    scalar = config.baseline_mode is BaselineMode.scalar
    return gradient.sogd_direction(traces, store, config.ridge, scalar_baseline=scalar)


PROVIDERS: dict[Algorithm, DirectionProvider] = {
    Algorithm.sgd: _sgd,
    Algorithm.sgd_baseline: _sgd_baseline,
    Algorithm.enac: _enac,
    Algorithm.sogd: _sogd,
}


def rollout_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, ROLLOUT_STREAM, iteration, index])


def eval_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([seed, EVAL_STREAM, iteration])


def cg_update(
    g_new: np.ndarray,
    g_old: np.ndarray | None,
    d_old: np.ndarray | None,
    restart: bool = False,
) -> np.ndarray:
    """Polak-Ribiere-plus conjugate direction for an ascent problem."""
    if restart or g_old is None or d_old is None:
        return g_new.copy()
    denom = float(g_old @ g_old)
    beta = max(0.0, float(g_new @ (g_new - g_old)) / denom) if denom > 0.0 else 0.0
    return g_new + beta * d_old


def _pad(vector: np.ndarray | None, dimension: int) -> np.ndarray | None:
    # addresses registered since the last iteration extend the flat vector at the end
    if vector is None or vector.shape[0] == dimension:
        return vector
    return np.concatenate([vector, np.zeros(dimension - vector.shape[0])])


def run_optimization(
    program: Program,
    store: ParamStore,
    config: OptimizerConfig,
    clock: Callable[[], float] = time.perf_counter,
) -> list[IterationRecord]:
    provider = PROVIDERS[config.algorithm]
    started = clock()

    def record(iteration: int, samples: int, norm: float, halted: bool = False) -> IterationRecord:
        # evaluation runs on a copy so it can neither register addresses nor touch the
        # rollout streams of the optimization
        elbo = elbo_estimate(
            program, store.copy(), config.elbo_eval_samples, eval_rng(config.seed, iteration)
        )
        return IterationRecord(
            iteration=iteration,
            cumulative_samples=samples,
            elbo_mean=elbo.mean,
            elbo_stderr=elbo.stderr,
            direction_norm=norm,
            wallclock_s=clock() - started if config.record_wallclock else 0.0,
            halted=halted,
        )

    history = [record(0, 0, 0.0)]
    g_old: np.ndarray | None = None
    d_old: np.ndarray | None = None
    samples = 0
    for iteration in range(1, config.iterations + 1):
        traces = [
            run_guided(program, store, rollout_rng(config.seed, iteration, j))
            for j in range(config.rollouts)
        ]
        samples += config.rollouts
        try:
            raw = provider(traces, store, config)
            if not np.all(np.isfinite(raw)):
                raise NumericalError("direction has non-finite entries")
            if config.outer is OuterLoop.cg:
                restart = (iteration - 1) % config.restart_period == 0
                dim = raw.shape[0]
                d = cg_update(raw, _pad(g_old, dim), _pad(d_old, dim), restart)
                if not np.all(np.isfinite(d)):
                    raise NumericalError("conjugate direction has non-finite entries")
                g_old, d_old = raw, d
                step = gradient.normalize(d)
            else:
                step = gradient.normalize(raw)
        except NumericalError as exc:
            logger.warning(
                "%s: halting at iteration %d: %s", config.algorithm.value, iteration, exc
            )
            history.append(record(iteration, samples, math.nan, halted=True))
            break

        store.apply_step(step, config.stepsize)

        history.append(record(iteration, samples, float(np.linalg.norm(raw))))
        logger.debug(
            "%s iter %d: elbo %.6g +- %.3g, |g| %.3g",
            config.algorithm.value,
            iteration,
            history[-1].elbo_mean,
            history[-1].elbo_stderr,
            history[-1].direction_norm,
        )

    logger.info(
        "%s/%s seed %d: %d iterations, final elbo %.6g",
        config.algorithm.value,
        config.outer.value,
        config.seed,
        len(history) - 1,
        history[-1].elbo_mean,
    )
    return history

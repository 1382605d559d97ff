"""Score-function gradient estimators over a batch of guided traces.

All directions are ascent directions on the lower bound L(theta): each trace contributes
``score * (log p(x, y) - log q(x) + K)``, the negation of the usual descent form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg

from varprog.core.exceptions import DimensionError, EstimatorError, NumericalError
from varprog.services.meanfield import ParamStore
from varprog.services.trace import Trace, gain

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


@dataclass
class GradientEstimate:
    direction: np.ndarray
    baseline: np.ndarray
    n_traces: int
    gains: np.ndarray


@dataclass
class EnacResult:
    direction: np.ndarray
    intercept: float
    degenerate: bool = False


@dataclass
class FisherMatrix:
    """Empirical second moment of the scores plus a ridge: (1/N) S^T S + ridge * I.

    Kept in factored form; ``matrix`` materialises it, ``solve`` picks the cheaper of a
    dense Cholesky solve and the Woodbury identity.
    """

    scores: np.ndarray
    ridge: float

    @property
    def dimension(self) -> int:
        return self.scores.shape[1]

    @cached_property
    def matrix(self) -> np.ndarray:
        n, d = self.scores.shape
        m = self.scores.T @ self.scores / n
        return 0.5 * (m + m.T) + self.ridge * np.eye(d)

    def solve(self, g: np.ndarray) -> np.ndarray:
        n, d = self.scores.shape
        if d == 0:
            return np.zeros(0)
        try:
            if d <= n or self.ridge <= 0.0:
                return linalg.cho_solve(linalg.cho_factor(self.matrix), g)
            s = self.scores
            inner = s @ s.T + n * self.ridge * np.eye(n)
            return (g - s.T @ linalg.cho_solve(linalg.cho_factor(inner), s @ g)) / self.ridge
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"Fisher solve failed: {exc}") from exc


def per_trace_score(trace: Trace, store: ParamStore) -> np.ndarray:
    """Flat score vector; addresses the trace did not visit contribute zeros."""
    scores = np.zeros(store.dimension)
    for entry in trace.entries:
        scores[store.segment(entry.address)] = entry.score
    return scores


def score_matrix(traces: Sequence[Trace], store: ParamStore) -> np.ndarray:
    scores = np.zeros((len(traces), store.dimension))
    for j, trace in enumerate(traces):
        for entry in trace.entries:
            scores[j, store.segment(entry.address)] = entry.score
    return scores


def trace_gains(traces: Sequence[Trace]) -> np.ndarray:
    return np.array([gain(t, 0.0) for t in traces], dtype=float)


def _batch(traces: Sequence[Trace], store: ParamStore) -> tuple[np.ndarray, np.ndarray]:
    if not traces:
        raise EstimatorError("gradient estimate needs at least one trace")
    return score_matrix(traces, store), trace_gains(traces)


def _optimal_baseline(scores: np.ndarray, gains: np.ndarray) -> np.ndarray:
    sq = scores * scores
    den = sq.sum(axis=0)
    num = (sq * gains[:, None]).sum(axis=0)
    return -np.divide(num, den, out=np.zeros_like(den), where=den > 0.0)


def _weighted_mean(scores: np.ndarray, gains: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    return (scores * (gains[:, None] + baseline[None, :])).mean(axis=0)


def _as_baseline(baseline: float | Sequence[float], dimension: int) -> np.ndarray:
    b = np.asarray(baseline, dtype=float)
    if b.ndim == 0:
        return np.full(dimension, float(b))
    if b.shape != (dimension,):
        raise DimensionError(f"baseline has shape {b.shape}, expected ({dimension},)")
    return b


def score_gradient(
    traces: Sequence[Trace], store: ParamStore, baseline: float | Sequence[float] = 0.0
) -> GradientEstimate:
    scores, gains = _batch(traces, store)
    b = _as_baseline(baseline, store.dimension)
    return GradientEstimate(_weighted_mean(scores, gains, b), b, len(traces), gains)


def optimal_baseline(traces: Sequence[Trace], store: ParamStore) -> np.ndarray:
    """Per-component variance-minimising constant: b_i = -sum(psi_i^2 f) / sum(psi_i^2)."""
    return _optimal_baseline(*_batch(traces, store))


def fisher_estimate(traces: Sequence[Trace], store: ParamStore, ridge: float) -> FisherMatrix:
    scores, _ = _batch(traces, store)
    if ridge <= 0.0 and scores.shape[0] < scores.shape[1]:
        raise EstimatorError("ridge must be positive when there are fewer traces than parameters")
    return FisherMatrix(scores, ridge)


def enac_direction(traces: Sequence[Trace], store: ParamStore, ridge: float) -> EnacResult:
    """Regress gains on scores plus an intercept; the slope is the natural gradient.

    Solves the ridge problem in its primal form when there are at least as many traces as
    parameters and in its dual (Gram) form otherwise. ``ridge == 0`` yields the
    minimum-norm least-squares slope.
    """
    scores, gains = _batch(traces, store)
    n, d = scores.shape
    if n < 2:
        raise EstimatorError("ENAC needs at least two traces")
    if not np.any(scores):
        logger.warning("ENAC design matrix is all zeros; returning a zero direction")
        return EnacResult(np.zeros(d), float(gains.mean()), degenerate=True)

    mean_score = scores.mean(axis=0)
    mean_gain = float(gains.mean())
    x = scores - mean_score
    y = gains - mean_gain
    try:
        if ridge <= 0.0:
            w = linalg.lstsq(x, y)[0]
        elif d <= n:
            w = linalg.solve(x.T @ x / n + ridge * np.eye(d), x.T @ y / n, assume_a="pos")
        else:
            w = x.T @ linalg.solve(x @ x.T / n + ridge * np.eye(n), y / n, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"ENAC regression failed: {exc}") from exc
    return EnacResult(w, mean_gain - float(mean_score @ w))


def sogd_direction(
    traces: Sequence[Trace], store: ParamStore, ridge: float, scalar_baseline: bool = False
) -> np.ndarray:
    """Fisher-preconditioned score gradient F^-1 g, with g using the optimal baseline."""
    scores, gains = _batch(traces, store)
    b = _optimal_baseline(scores, gains)
    if scalar_baseline:
        b = np.full_like(b, b.mean() if b.size else 0.0)
    g = _weighted_mean(scores, gains, b)
    return FisherMatrix(scores, ridge).solve(g)


def normalize(direction: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(direction))
    if norm > NORM_EPS:
        return direction / norm
    return np.zeros_like(direction)

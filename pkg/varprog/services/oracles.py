"""Exact answers for small models, used to check the Monte-Carlo estimators."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from varprog.core.config import get_settings
from varprog.core.exceptions import OracleBoundError, ParameterError
from varprog.schemas.models import LdaModel
from varprog.services import erp
from varprog.services.gradient import score_matrix
from varprog.services.meanfield import ParamStore
from varprog.services.trace import Program, ProgramContext, Trace, execute

logger = logging.getLogger(__name__)


@dataclass
class EnumerationResult:
    traces: list[Trace]
    log_evidence: float
    posterior: np.ndarray
    guide: np.ndarray
    elbo: float
    gradient: np.ndarray
    fisher: np.ndarray

    def posterior_marginal(self, address, value=1) -> float:
        mask = np.array([_visits(t, address, value) for t in self.traces])
        return float(self.posterior[mask].sum())


def _visits(trace: Trace, address, value) -> bool:
    return any(e.address == address and e.value == value for e in trace.entries)


class _ReplayContext(ProgramContext):
    """Forces the first draws to a given prefix of outcome indices, then takes outcome 0."""

    def __init__(self, prefix: tuple[int, ...], store: ParamStore) -> None:
        super().__init__()
        self._prefix = prefix
        self._store = store
        self.choices: list[int] = []
        self.domains: list[int] = []

    def _choose(self, address, family, natural):
        if not family.is_discrete:
            raise OracleBoundError(f"cannot enumerate the {family.kind.value} ERP at {address}")
        i = len(self.choices)
        value = self._prefix[i] if i < len(self._prefix) else 0
        self.choices.append(value)
        self.domains.append(len(family.outcomes()))
        theta = self._store.lookup_or_init(address, family, natural)
        return (
            value,
            erp.target_log_pdf(family, natural, value),
            erp.log_pdf(family, theta, value),
            erp.grad_log_pdf(family, theta, value),
        )


def enumerate_traces(
    program: Program, store: ParamStore, max_traces: int | None = None
) -> list[Trace]:
    """Every execution of a program whose ERPs are all finite-discrete, depth first."""
    limit = max_traces or get_settings().oracle_max_traces
    traces: list[Trace] = []
    pending: list[tuple[int, ...]] = [()]
    while pending:
        prefix = pending.pop()
        ctx = _ReplayContext(prefix, store)
        traces.append(execute(program, ctx))
        if len(traces) > limit:
            raise OracleBoundError(f"program has more than {limit} traces")
        for i in range(len(prefix), len(ctx.choices)):
            for alternative in range(ctx.domains[i] - 1, 0, -1):
                pending.append(tuple(ctx.choices[:i]) + (alternative,))
    return traces


def enumerate_posterior(
    program: Program, store: ParamStore | None = None, max_traces: int | None = None
) -> EnumerationResult:
    """Exact log p(y), posterior over traces, and the exact ELBO, gradient and Fisher at ``store``.

    Addresses not yet in ``store`` are initialised from the program, as a guided run would.
    """
    store = store if store is not None else ParamStore()
    traces = enumerate_traces(program, store, max_traces)
    log_joint = np.array([t.log_prior + t.log_lik for t in traces])
    log_q = np.array([t.log_guide for t in traces])
    log_evidence = float(special.logsumexp(log_joint))
    if math.isfinite(log_evidence):
        posterior = np.exp(log_joint - log_evidence)
    else:
        posterior = np.zeros(len(traces))

    q = np.exp(log_q)
    scores = score_matrix(traces, store)
    with np.errstate(invalid="ignore"):
        f = log_joint - log_q
        weighted = np.where(q > 0.0, q * f, 0.0)
    elbo = float(weighted.sum())
    gradient = scores.T @ weighted
    fisher = (scores * q[:, None]).T @ scores
    logger.debug("enumerated %d traces, log p(y) = %.6g", len(traces), log_evidence)
    return EnumerationResult(traces, log_evidence, posterior, q, elbo, gradient, fisher)


def gaussian_pair_oracle(
    prior_mean: float, prior_std: float, lik_std: float, y: float
) -> tuple[float, float]:
    """Posterior mean and std of x for x ~ N(prior_mean, prior_std), y ~ N(x, lik_std)."""
    if prior_std <= 0.0 or lik_std <= 0.0:
        raise ParameterError("standard deviations must be positive")
    precision = prior_std**-2 + lik_std**-2
    mean = (prior_mean * prior_std**-2 + y * lik_std**-2) / precision
    return mean, precision**-0.5


def lda_collapsed_log_evidence(model: LdaModel, max_patterns: int | None = None) -> float:
    """log p(words) by summing the collapsed Dirichlet-multinomial over all assignments."""
    limit = max_patterns or get_settings().oracle_max_traces
    k, v = model.n_topics, model.vocab_size
    alpha, beta = model.doc_prior, model.topic_prior
    words = [(d, w) for d, doc in enumerate(model.documents) for w in doc]
    if k ** len(words) > limit:
        raise OracleBoundError(f"{k}^{len(words)} assignment patterns exceed {limit}")

    def log_polya(counts: np.ndarray, conc: float) -> float:
        total = counts.sum(axis=-1)
        dims = counts.shape[-1]
        return float(
            np.sum(
                special.gammaln(dims * conc)
                - special.gammaln(dims * conc + total)
                + (special.gammaln(conc + counts) - special.gammaln(conc)).sum(axis=-1)
            )
        )

    terms = []
    for pattern in itertools.product(range(k), repeat=len(words)):
        doc_topic = np.zeros((model.n_documents, k))
        topic_word = np.zeros((k, v))
        for (d, w), z in zip(words, pattern):
            doc_topic[d, z] += 1
            topic_word[z, w] += 1
        terms.append(log_polya(doc_topic, alpha) + log_polya(topic_word, beta))
    return float(special.logsumexp(terms))

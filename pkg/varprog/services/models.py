"""Benchmark and test programs.

Each ``*_program`` function closes over an immutable model definition and returns a
re-entrant program suitable for :func:`~varprog.services.trace.run_target` and
:func:`~varprog.services.trace.run_guided`.
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from varprog.schemas.models import LdaModel, QmrModel
from varprog.services.erp import ErpFamily
from varprog.services.trace import Program, ProgramContext, run_target

logger = logging.getLogger(__name__)

BERNOULLI = ErpFamily.bernoulli()
NORMAL = ErpFamily.normal()

QMR_DESK = {"n_diseases": 20, "n_findings": 30, "links_per_finding": 3}
LDA_DESK = {"n_topics": 5, "vocab_size": 50, "n_documents": 10, "words_per_document": 40}


def qmr_program(model: QmrModel) -> Program:
    """Diseases at ("disease", d); findings are noisy-or observations of the active ones.

    p(f = 1 | x) = 1 - (1 - leak_f) * prod_{d: x_d = 1} (1 - q[f][d])
    """
    prior = [float(p) for p in model.prior]
    with np.errstate(divide="ignore"):
        log_miss = np.log1p(-np.asarray(model.weights, dtype=float))
        log_no_leak = np.log1p(-np.asarray(model.leak, dtype=float))
    observations = model.observations
    keep_negative = model.include_negative_findings

    def program(ctx: ProgramContext) -> list[int]:
        active = [ctx.flip("disease", p) for p in prior]
        on = [d for d, x in enumerate(active) if x]
        log_off = log_no_leak + log_miss[:, on].sum(axis=1)
        p_on = -np.expm1(log_off)
        for f, p in enumerate(p_on):
            if observations is None:
                ctx.sample_erp("finding", BERNOULLI, (p,))
            elif observations[f] or keep_negative:
                ctx.observe(BERNOULLI, (p,), observations[f])
        return active

    return program


def _lda_body(
    ctx: ProgramContext, model: LdaModel, lengths: list[int], documents: list[list[int]] | None
) -> None:
    vocab = ErpFamily.categorical(model.vocab_size)
    beta = [model.topic_prior] * model.vocab_size
    alpha = [model.doc_prior] * model.n_topics
    topics = [ctx.dirichlet("topic", beta) for _ in range(model.n_topics)]
    for d, length in enumerate(lengths):
        mixture = ctx.dirichlet("doc_topics", alpha)
        for i in range(length):
            z = ctx.categorical("assignment", mixture)
            if documents is None:
                ctx.sample_erp("word", vocab, topics[z])
            else:
                ctx.observe(vocab, topics[z], documents[d][i])


def lda_program(model: LdaModel) -> Program:
    """K topic-word Dirichlets, one topic mixture per document, one assignment per word."""
    documents = [list(doc) for doc in model.documents]
    lengths = [len(doc) for doc in documents]

    def program(ctx: ProgramContext) -> None:
        _lda_body(ctx, model, lengths, documents)

    return program


def complex_deterministic_func(m: float) -> float:
    return math.tanh(m) * m * m


def fig1_program(
    observation: float | None = None,
    obs_std: float = 0.5,
    func: Callable[[float], float] = complex_deterministic_func,
) -> Program:
    """The branching program: which ERP is drawn second depends on the first draw."""

    def program(ctx: ProgramContext) -> float:
        m = ctx.normal("line1")
        if m > 1:
            mu = func(m)
            x = ctx.normal("line4", mu)
        else:
            x = ctx.uniform("line6")
        if observation is not None:
            ctx.observe(NORMAL, (x, obs_std), observation)
        return x

    return program


def one_coin_program(p_true: float = 0.8, p_false: float = 0.2) -> Program:
    """x ~ Bernoulli(0.5), observed y = 1 with p(y | x=1) = p_true, p(y | x=0) = p_false."""

    def program(ctx: ProgramContext) -> int:
        x = ctx.flip("coin")
        ctx.observe(BERNOULLI, (p_true if x else p_false,), 1)
        return x

    return program


def two_coin_program() -> Program:
    """Two chained coins; the observation favours the coins agreeing."""

    def program(ctx: ProgramContext) -> tuple[int, int]:
        c1 = ctx.flip("coin1", 0.5)
        c2 = ctx.flip("coin2", 0.8 if c1 else 0.3)
        ctx.observe(BERNOULLI, (0.9 if c1 == c2 else 0.2,), 1)
        return c1, c2

    return program


def gaussian_pair_program(
    prior_mean: float = 0.0, prior_std: float = 1.0, lik_std: float = 1.0, y: float = 1.0
) -> Program:
    def program(ctx: ProgramContext) -> float:
        x = ctx.normal("x", prior_mean, prior_std)
        ctx.observe(NORMAL, (x, lik_std), y)
        return x

    return program


def generate_qmr(
    n_diseases: int = QMR_DESK["n_diseases"],
    n_findings: int = QMR_DESK["n_findings"],
    links_per_finding: int = QMR_DESK["links_per_finding"],
    seed: int = 0,
) -> QmrModel:
    """Random network; findings are drawn by running the network's own program forward."""
    rng = np.random.default_rng(seed)
    weights = np.zeros((n_findings, n_diseases))
    links = min(links_per_finding, n_diseases)
    for f in range(n_findings):
        causes = rng.choice(n_diseases, size=links, replace=False)
        weights[f, causes] = rng.uniform(0.3, 0.9, size=links)
    skeleton = QmrModel(
        prior=rng.uniform(0.05, 0.2, size=n_diseases).tolist(),
        leak=rng.uniform(0.01, 0.05, size=n_findings).tolist(),
        weights=weights.tolist(),
    )
    trace = run_target(qmr_program(skeleton), rng)
    findings = [int(e.value) for e in trace.entries if e.address.site_id == "finding"]
    logger.info(
        "generated QMR network: %d diseases, %d findings, %d positive",
        n_diseases,
        n_findings,
        sum(findings),
    )
    return skeleton.model_copy(update={"observations": findings})


def generate_lda(
    n_topics: int = LDA_DESK["n_topics"],
    vocab_size: int = LDA_DESK["vocab_size"],
    n_documents: int = LDA_DESK["n_documents"],
    words_per_document: int = LDA_DESK["words_per_document"],
    topic_prior: float = 0.5,
    doc_prior: float = 1.0,
    seed: int = 0,
) -> LdaModel:
    rng = np.random.default_rng(seed)
    lengths = [words_per_document] * n_documents
    shape = LdaModel(
        n_topics=n_topics,
        vocab_size=vocab_size,
        documents=[[] for _ in lengths],
        topic_prior=topic_prior,
        doc_prior=doc_prior,
    )
    trace = run_target(lambda ctx: _lda_body(ctx, shape, lengths, None), rng)
    words = iter(int(e.value) for e in trace.entries if e.address.site_id == "word")
    documents = [[next(words) for _ in range(n)] for n in lengths]
    return shape.model_copy(update={"documents": documents})

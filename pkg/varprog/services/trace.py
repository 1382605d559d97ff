"""Program execution and trace recording.

A program is any callable taking a :class:`ProgramContext`. It draws latent values with
``ctx.sample_erp`` (or the shorthand methods such as ``ctx.normal``) and adds likelihood
terms with ``ctx.observe`` and ``ctx.factor``. The context decides where the values come
from: the program's own distributions (:func:`run_target`) or the variational parameters
kept in a store (:func:`run_guided`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, NamedTuple, Sequence

import numpy as np

from varprog.core.exceptions import ProgramError, VarProgError
from varprog.services import erp
from varprog.services.erp import ErpFamily, ErpValue

if TYPE_CHECKING:
    from varprog.services.meanfield import ParamStore


class Address(NamedTuple):
    site_id: str
    occurrence: int

    def __str__(self) -> str:
        return f"{self.site_id}#{self.occurrence}"


@dataclass
class TraceEntry:
    address: Address
    family: ErpFamily
    value: ErpValue
    target_params: np.ndarray
    log_p_target: float
    log_q: float
    score: np.ndarray

    @property
    def reward(self) -> float:
        return self.log_p_target - self.log_q


@dataclass
class Trace:
    entries: list[TraceEntry] = field(default_factory=list)
    log_lik: float = 0.0
    result: Any = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def log_prior(self) -> float:
        return sum(e.log_p_target for e in self.entries)

    @property
    def log_guide(self) -> float:
        return sum(e.log_q for e in self.entries)

    @property
    def total_reward(self) -> float:
        return sum(e.reward for e in self.entries)

    @property
    def addresses(self) -> list[Address]:
        return [e.address for e in self.entries]

    def value_at(self, address: Address) -> ErpValue:
        for entry in self.entries:
            if entry.address == address:
                return entry.value
        raise KeyError(str(address))


Program = Callable[["ProgramContext"], Any]


class ProgramContext:
    """What model code sees. Subclasses choose how each ERP value is produced."""

    def __init__(self) -> None:
        self.trace = Trace()
        self._counters: dict[str, int] = {}

    def _next_address(self, site_id: str) -> Address:
        occurrence = self._counters.get(site_id, 0)
        self._counters[site_id] = occurrence + 1
        return Address(site_id, occurrence)

    def _choose(
        self, address: Address, family: ErpFamily, natural: np.ndarray
    ) -> tuple[ErpValue, float, float, np.ndarray]:
        """Return ``(value, log_p_target, log_q, score)`` for one ERP encounter."""
        raise NotImplementedError

    @property
    def last_address(self) -> Address | None:
        return self.trace.entries[-1].address if self.trace.entries else None

    def sample_erp(
        self, site_id: str, family: ErpFamily, natural_params: Sequence[float]
    ) -> ErpValue:
        address = self._next_address(site_id)
        natural = erp.as_natural(family, natural_params)
        value, log_p, log_q, score = self._choose(address, family, natural)
        self.trace.entries.append(TraceEntry(address, family, value, natural, log_p, log_q, score))
        return value

    def observe(
        self, family: ErpFamily, natural_params: Sequence[float], observed_value: ErpValue
    ) -> None:
        self.trace.log_lik += erp.target_log_pdf(family, natural_params, observed_value)

    def factor(self, log_weight: float) -> None:
        self.trace.log_lik += float(log_weight)

    def normal(self, site_id: str, mean: float = 0.0, std: float = 1.0) -> float:
        return self.sample_erp(site_id, ErpFamily.normal(), (mean, std))

    def flip(self, site_id: str, p: float = 0.5) -> int:
        return self.sample_erp(site_id, ErpFamily.bernoulli(), (p,))

    def categorical(self, site_id: str, probs: Sequence[float]) -> int:
        return self.sample_erp(site_id, ErpFamily.categorical(len(probs)), probs)

    def beta(self, site_id: str, a: float = 1.0, b: float = 1.0) -> float:
        return self.sample_erp(site_id, ErpFamily.beta(), (a, b))

    def gamma(self, site_id: str, shape: float = 1.0, rate: float = 1.0) -> float:
        return self.sample_erp(site_id, ErpFamily.gamma(), (shape, rate))

    def dirichlet(self, site_id: str, concentration: Sequence[float]) -> np.ndarray:
        return self.sample_erp(site_id, ErpFamily.dirichlet(len(concentration)), concentration)

    def uniform(self, site_id: str, low: float = 0.0, high: float = 1.0) -> float:
        return self.sample_erp(site_id, ErpFamily.uniform(low, high), (low, high))


class TargetContext(ProgramContext):
    """Runs the program forward under its own distributions. Scores are zero vectors."""

    def __init__(self, rng: np.random.Generator) -> None:
        super().__init__()
        self._rng = rng

    def _choose(self, address, family, natural):
        value = erp.target_sample(family, natural, self._rng)
        log_p = erp.target_log_pdf(family, natural, value)
        return value, log_p, log_p, np.zeros(family.arity)


class GuidedContext(ProgramContext):
    """Runs the variational program: values come from the store's parameters at each address."""

    def __init__(self, store: ParamStore, rng: np.random.Generator) -> None:
        super().__init__()
        self._store = store
        self._rng = rng

    def _choose(self, address, family, natural):
        theta = self._store.lookup_or_init(address, family, natural)
        value, log_q, score = erp.draw(family, theta, self._rng)
        log_p = erp.target_log_pdf(family, natural, value)
        return value, log_p, log_q, score


def execute(program: Program, ctx: ProgramContext) -> Trace:
    try:
        ctx.trace.result = program(ctx)
    except VarProgError:
        raise
    except Exception as exc:
        where = ctx.last_address or "program start"
        raise ProgramError(f"program raised {type(exc).__name__} after {where}: {exc}") from exc
    return ctx.trace


def run_target(program: Program, rng: np.random.Generator) -> Trace:
    return execute(program, TargetContext(rng))


def run_guided(program: Program, store: ParamStore, rng: np.random.Generator) -> Trace:
    """Run the partial mean-field variational program derived from ``program``.

    Control flow is the program's own; every ERP draws from the store's parameters at its
    address and the program's natural parameters only enter through the reward.
    """
    return execute(program, GuidedContext(store, rng))


def gain(trace: Trace, baseline: float = 0.0) -> float:
    return trace.total_reward + trace.log_lik + baseline

"""Partial mean-field variational programs.

The variational program is never written down: it is the target program run through a
:class:`~varprog.services.trace.GuidedContext`, which replaces the natural parameters of each
ERP with the parameters this store keeps for the ERP's address.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from varprog.core.exceptions import DimensionError, ParameterError, StructuralError
from varprog.schemas.records import ElboEstimate
from varprog.services import erp
from varprog.services.erp import ErpFamily, ParamVector
from varprog.services.trace import Address, Program, Trace, gain, run_guided

logger = logging.getLogger(__name__)


class ParamStore:
    """Address -> (family, unconstrained parameters), flattened in registration order."""

    def __init__(self) -> None:
        self._table: dict[Address, tuple[ErpFamily, ParamVector]] = {}
        self._order: list[Address] = []
        self._offsets: dict[Address, int] = {}
        self._dimension = 0

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, address: object) -> bool:
        return address in self._table

    def __iter__(self) -> Iterator[Address]:
        return iter(self._order)

    @property
    def registration_order(self) -> list[Address]:
        return list(self._order)

    @property
    def dimension(self) -> int:
        return self._dimension

    def family(self, address: Address) -> ErpFamily:
        return self._entry(address)[0]

    def params(self, address: Address) -> ParamVector:
        return self._entry(address)[1].copy()

    def segment(self, address: Address) -> slice:
        start = self._offsets.get(address)
        if start is None:
            raise StructuralError(f"address {address} is not registered")
        return slice(start, start + self._table[address][0].arity)

    def _entry(self, address: Address) -> tuple[ErpFamily, ParamVector]:
        try:
            return self._table[address]
        except KeyError as exc:
            raise StructuralError(f"address {address} is not registered") from exc

    def register(self, address: Address, family: ErpFamily, params: Sequence[float]) -> None:
        if address in self._table:
            raise StructuralError(f"address {address} is already registered")
        self._table[address] = (family, erp.as_params(family, params).copy())
        self._order.append(address)
        self._offsets[address] = self._dimension
        self._dimension += family.arity

    def set_params(self, address: Address, params: Sequence[float]) -> None:
        family, _ = self._entry(address)
        self._table[address] = (family, erp.as_params(family, params).copy())

    def lookup_or_init(
        self, address: Address, family: ErpFamily, target_natural_params: Sequence[float]
    ) -> ParamVector:
        """Stored parameters for ``address``; first encounter initialises from the target.

        Natural parameters passed on later encounters are ignored: that is the severing of
        parameter dependence between ERPs.
        """
        entry = self._table.get(address)
        if entry is not None:
            if entry[0] != family:
                raise StructuralError(
                    f"address {address} holds a {entry[0].token()} ERP, got {family.token()}"
                )
            return entry[1]
        self.register(address, family, erp.init_from_target(family, target_natural_params))
        return self._table[address][1]

    def flatten(self) -> np.ndarray:
        if not self._order:
            return np.zeros(0)
        return np.concatenate([self._table[a][1] for a in self._order])

    def unflatten(self, vector: Sequence[float]) -> None:
        """Replace every segment at once; on a bad segment the store is left unchanged."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self._dimension,):
            raise DimensionError(f"expected {self._dimension} values, got {vector.shape}")
        table = {
            address: (family, erp.as_params(family, vector[self.segment(address)]).copy())
            for address, (family, _) in self._table.items()
        }
        self._table = table

    def apply_step(self, direction: Sequence[float], stepsize: float) -> "ParamStore":
        """theta <- theta + stepsize * direction, segment-wise in registration order."""
        direction = np.asarray(direction, dtype=float)
        if direction.shape != (self._dimension,):
            raise DimensionError(
                f"direction has shape {direction.shape}, store dimension is {self._dimension}"
            )
        try:
            self.unflatten(self.flatten() + stepsize * direction)
        except ParameterError as exc:
            raise DimensionError(f"step produced invalid parameters: {exc}") from exc
        return self

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for address in self._order:
            family, params = self._table[address]
            clone.register(address, family, params)
        return clone


def elbo_estimate(
    program: Program, store: ParamStore, n: int, rng: np.random.Generator
) -> ElboEstimate:
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    gains = np.array([gain(run_guided(program, store, rng), 0.0) for _ in range(n)])
    mean = float(gains.mean())
    if n == 1:
        return ElboEstimate(mean=mean, stderr=0.0, n_samples=1, single_sample=True)
    if np.all(gains == gains[0]):
        return ElboEstimate(mean=mean, stderr=0.0, n_samples=n)
    stderr = float(gains.std(ddof=1) / math.sqrt(n))
    return ElboEstimate(mean=mean, stderr=stderr, n_samples=n)


def sample_posterior(
    program: Program, store: ParamStore, n: int, rng: np.random.Generator
) -> list[Trace]:
    """Approximate posterior samples: independent runs of the fitted variational program."""
    return [run_guided(program, store, rng) for _ in range(n)]


def posterior_marginals(
    program: Program, store: ParamStore, n: int, rng: np.random.Generator
) -> dict[Address, tuple[np.ndarray, int]]:
    """Per-address Monte-Carlo mean of sampled values and the number of traces visiting it."""
    sums: dict[Address, np.ndarray] = {}
    counts: dict[Address, int] = {}
    for trace in sample_posterior(program, store, n, rng):
        for entry in trace.entries:
            value = np.asarray(entry.value, dtype=float)
            if entry.address in sums:
                sums[entry.address] = sums[entry.address] + value
                counts[entry.address] += 1
            else:
                sums[entry.address] = value.copy()
                counts[entry.address] = 1
    return {a: (sums[a] / counts[a], counts[a]) for a in sums}


def save_snapshot(store: ParamStore, path: str | Path) -> None:
    """One line per address: ``site_id, occurrence, family, params...``."""
    lines = []
    for address in store:
        if "," in address.site_id:
            raise StructuralError(f"site id {address.site_id!r} cannot be written to a snapshot")
        fields = [address.site_id, str(address.occurrence), store.family(address).token()]
        fields.extend(format(float(p), ".17g") for p in store.params(address))
        lines.append(", ".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    logger.info("wrote %d addresses to %s", len(store), path)


def load_snapshot(path: str | Path) -> ParamStore:
    store = ParamStore()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            site_id, occurrence, token, *params = fields
            store.register(
                Address(site_id, int(occurrence)),
                ErpFamily.from_token(token),
                [float(p) for p in params],
            )
        except (ValueError, ParameterError, StructuralError) as exc:
            raise StructuralError(f"{path}:{lineno}: malformed snapshot line: {exc}") from exc
    return store

"""CSV writers for optimization histories and posterior marginals."""

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from varprog.schemas.records import IterationRecord
from varprog.services.trace import Address

logger = logging.getLogger(__name__)

HISTORY_HEADER = [
    "iteration",
    "cumulative_samples",
    "elbo_mean",
    "elbo_stderr",
    "direction_norm",
    "wallclock_s",
]


def write_history(records: Sequence[IterationRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("cannot write an empty history")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        writer.writerows(record.csv_row() for record in records)
    logger.info("wrote %d history rows to %s", len(records), path)


def read_history(path: str | Path) -> list[IterationRecord]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [IterationRecord.model_validate(row) for row in csv.DictReader(handle)]


def write_marginals(marginals: dict[Address, tuple[np.ndarray, int]], path: str | Path) -> None:
    """One row per address: site id, occurrence, number of visiting samples, mean value."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["site_id", "occurrence", "visits", "mean"])
        for address in sorted(marginals):
            mean, visits = marginals[address]
            values = " ".join(format(float(v), ".17g") for v in np.atleast_1d(mean))
            writer.writerow([address.site_id, address.occurrence, visits, values])

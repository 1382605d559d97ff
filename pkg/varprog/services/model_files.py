"""Reading and writing QMR and LDA model files. The grammar is in docs/MODEL_FILES.md."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterator

from pydantic import ValidationError

from varprog.core.exceptions import ModelFileError
from varprog.schemas.models import LdaModel, QmrModel

logger = logging.getLogger(__name__)


def _lines(path: str | Path) -> Iterator[tuple[int, str, list[str]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            keyword, *args = line.split()
            yield lineno, keyword, args


def _fail(path: str | Path, lineno: int, message: str) -> ModelFileError:
    return ModelFileError(f"{path}:{lineno}: {message}")


def read_qmr(path: str | Path) -> QmrModel:
    counts: dict[str, int] = {}
    prior: list[float] = []
    leak: list[float] = []
    triplets: list[tuple[int, int, float]] = []
    observed: dict[int, int] = {}
    include_negative = True
    for lineno, keyword, args in _lines(path):
        try:
            if keyword in ("diseases", "findings"):
                (n,) = args
                counts[keyword] = int(n)
            elif keyword == "prior":
                prior = [float(a) for a in args]
            elif keyword == "leak":
                leak = [float(a) for a in args]
            elif keyword == "weight":
                f, d, q = args
                triplets.append((int(f), int(d), float(q)))
            elif keyword == "observe":
                f, value = args
                if int(f) in observed:
                    raise _fail(path, lineno, f"finding {f} observed twice")
                observed[int(f)] = int(value)
            elif keyword == "negative_findings":
                (mode,) = args
                if mode not in ("include", "drop"):
                    raise _fail(path, lineno, "negative_findings must be include or drop")
                include_negative = mode == "include"
            else:
                raise _fail(path, lineno, f"unknown keyword {keyword!r}")
        except ValueError as exc:
            raise _fail(path, lineno, f"malformed {keyword!r} line: {exc}") from exc

    n_diseases = counts.get("diseases", len(prior))
    n_findings = counts.get("findings", len(leak))
    weights = [[0.0] * n_diseases for _ in range(n_findings)]
    for f, d, q in triplets:
        if not (0 <= f < n_findings and 0 <= d < n_diseases):
            raise ModelFileError(f"{path}: weight ({f}, {d}) outside {n_findings}x{n_diseases}")
        weights[f][d] = q
    observations = None
    if observed:
        missing = sorted(set(range(n_findings)) - set(observed))
        if missing or len(observed) != n_findings:
            raise ModelFileError(f"{path}: findings without observations: {missing}")
        observations = [observed[f] for f in range(n_findings)]
    try:
        return QmrModel(
            prior=prior,
            leak=leak,
            weights=weights,
            observations=observations,
            include_negative_findings=include_negative,
        )
    except ValidationError as exc:
        raise ModelFileError(f"{path}: invalid QMR model: {exc}") from exc


def write_qmr(model: QmrModel, path: str | Path) -> None:
    lines = [
        f"diseases {model.n_diseases}",
        f"findings {model.n_findings}",
        "prior " + " ".join(format(p, ".17g") for p in model.prior),
        "leak " + " ".join(format(p, ".17g") for p in model.leak),
    ]
    for f, row in enumerate(model.weights):
        lines.extend(f"weight {f} {d} {q:.17g}" for d, q in enumerate(row) if q != 0.0)
    if model.observations is not None:
        lines.extend(f"observe {f} {v}" for f, v in enumerate(model.observations))
    if not model.include_negative_findings:
        lines.append("negative_findings drop")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote QMR model to %s", path)


def read_lda(path: str | Path) -> LdaModel:
    fields: dict[str, float] = {}
    documents: list[list[int]] = []
    for lineno, keyword, args in _lines(path):
        try:
            if keyword in ("topics", "vocab", "alpha", "beta"):
                (value,) = args
                fields[keyword] = float(value)
            elif keyword == "doc":
                documents.append([int(w) for w in args])
            else:
                raise _fail(path, lineno, f"unknown keyword {keyword!r}")
        except ValueError as exc:
            raise _fail(path, lineno, f"malformed {keyword!r} line: {exc}") from exc
    missing = {"topics", "vocab", "alpha", "beta"} - set(fields)
    if missing:
        raise ModelFileError(f"{path}: missing {', '.join(sorted(missing))}")
    try:
        return LdaModel(
            n_topics=int(fields["topics"]),
            vocab_size=int(fields["vocab"]),
            documents=documents,
            topic_prior=fields["beta"],
            doc_prior=fields["alpha"],
        )
    except ValidationError as exc:
        raise ModelFileError(f"{path}: invalid LDA model: {exc}") from exc


def write_lda(model: LdaModel, path: str | Path) -> None:
    lines = [
        f"topics {model.n_topics}",
        f"vocab {model.vocab_size}",
        f"alpha {model.doc_prior:.17g}",
        f"beta {model.topic_prior:.17g}",
    ]
    lines.extend("doc " + " ".join(str(w) for w in doc) for doc in model.documents)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote LDA model with %d documents to %s", model.n_documents, path)

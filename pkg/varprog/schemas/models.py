from typing import Annotated

from pydantic import BaseModel, Field, model_validator

Probability = Annotated[float, Field(ge=0.0, le=1.0)]
OpenProbability = Annotated[float, Field(gt=0.0, lt=1.0)]


class QmrModel(BaseModel):
    """Bipartite noisy-or network: diseases are latent, findings are observed."""

    prior: list[OpenProbability] = Field(..., min_length=1)
    leak: list[Probability] = Field(..., min_length=1)
    weights: list[list[Probability]] = Field(..., description="weights[f][d]: P(d activates f)")
    observations: list[int] | None = Field(
        None, description="0/1 per finding; None samples the findings instead"
    )
    include_negative_findings: bool = True

    @property
    def n_diseases(self) -> int:
        return len(self.prior)

    @property
    def n_findings(self) -> int:
        return len(self.leak)

    @model_validator(mode="after")
    def _check_shapes(self) -> "QmrModel":
        if len(self.weights) != self.n_findings:
            raise ValueError(f"weights must have {self.n_findings} rows, got {len(self.weights)}")
        for f, row in enumerate(self.weights):
            if len(row) != self.n_diseases:
                raise ValueError(f"weights row {f} must have {self.n_diseases} entries")
        if self.observations is not None:
            if len(self.observations) != self.n_findings:
                raise ValueError("observations must have one entry per finding")
            if any(v not in (0, 1) for v in self.observations):
                raise ValueError("observations must be 0 or 1")
        return self


class LdaModel(BaseModel):
    n_topics: int = Field(..., ge=1)
    vocab_size: int = Field(..., ge=1)
    documents: list[list[int]] = Field(..., min_length=1)
    topic_prior: float = Field(0.5, gt=0.0, description="symmetric Dirichlet over the vocabulary")
    doc_prior: float = Field(1.0, gt=0.0, description="symmetric Dirichlet over topics")

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    @property
    def n_words(self) -> int:
        return sum(len(doc) for doc in self.documents)

    @model_validator(mode="after")
    def _check_words(self) -> "LdaModel":
        for d, doc in enumerate(self.documents):
            if any(not 0 <= w < self.vocab_size for w in doc):
                raise ValueError(f"document {d} has a word index outside [0, {self.vocab_size})")
        return self

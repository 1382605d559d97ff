"""Elementary random procedures (ERPs).

Each family has two parameterisations. Target programs pass *natural* parameters
(Normal(mean, std), Bernoulli(p), Gamma(shape, rate), ...). Variational parameters are
*unconstrained* so gradient steps never need a projection:

    normal       (mean, log_std)
    bernoulli    (logit,)
    categorical  logits, one per outcome (not normalised)
    beta         (log a, log b)
    gamma        (log shape, log rate)
    dirichlet    log concentration, one per component
    uniform      (log a, log b) of a Beta rescaled to the family's fixed [low, high]
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy import special

from varprog.core.config import get_settings
from varprog.core.exceptions import OutOfSupportError, ParameterError

ErpValue = Union[float, int, np.ndarray]
ParamVector = np.ndarray

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SIMPLEX_TOL = 1e-12
_TINY = np.finfo(float).tiny
_ONE_MINUS_EPS = 1.0 - np.finfo(float).epsneg


class ErpKind(str, Enum):
    normal = "normal"
    bernoulli = "bernoulli"
    categorical = "categorical"
    beta = "beta"
    gamma = "gamma"
    dirichlet = "dirichlet"
    uniform = "uniform"


@dataclass(frozen=True)
class ErpFamily:
    """An ERP type. Two families are the same ERP iff they compare equal."""

    kind: ErpKind
    dim: int = 1
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ParameterError(f"{self.kind.value}: dimension must be >= 1, got {self.dim}")
        if self.kind is ErpKind.uniform and not (
            math.isfinite(self.low) and math.isfinite(self.high) and self.low < self.high
        ):
            raise ParameterError(f"uniform: invalid support [{self.low}, {self.high}]")

    @property
    def arity(self) -> int:
        if self.kind in (ErpKind.categorical, ErpKind.dirichlet):
            return self.dim
        if self.kind is ErpKind.bernoulli:
            return 1
        return 2

    @property
    def is_discrete(self) -> bool:
        return self.kind in (ErpKind.bernoulli, ErpKind.categorical)

    def outcomes(self) -> range:
        if self.kind is ErpKind.bernoulli:
            return range(2)
        if self.kind is ErpKind.categorical:
            return range(self.dim)
        raise ParameterError(f"{self.kind.value} has no finite outcome set")

    def token(self) -> str:
        if self.kind in (ErpKind.categorical, ErpKind.dirichlet):
            return f"{self.kind.value}:{self.dim}"
        if self.kind is ErpKind.uniform:
            return f"uniform:{self.low!r}:{self.high!r}"
        return self.kind.value

    @classmethod
    def from_token(cls, token: str) -> "ErpFamily":
        head, *rest = token.strip().split(":")
        try:
            kind = ErpKind(head)
            if kind in (ErpKind.categorical, ErpKind.dirichlet):
                (dim,) = rest
                return cls(kind, int(dim))
            if kind is ErpKind.uniform:
                low, high = rest
                return cls(kind, low=float(low), high=float(high))
            if rest:
                raise ValueError(token)
            return cls(kind)
        except ValueError as exc:
            raise ParameterError(f"unknown ERP family token {token!r}") from exc

    @classmethod
    def normal(cls) -> "ErpFamily":
        return cls(ErpKind.normal)

    @classmethod
    def bernoulli(cls) -> "ErpFamily":
        return cls(ErpKind.bernoulli)

    @classmethod
    def categorical(cls, n_outcomes: int) -> "ErpFamily":
        return cls(ErpKind.categorical, n_outcomes)

    @classmethod
    def beta(cls) -> "ErpFamily":
        return cls(ErpKind.beta)

    @classmethod
    def gamma(cls) -> "ErpFamily":
        return cls(ErpKind.gamma)

    @classmethod
    def dirichlet(cls, n_components: int) -> "ErpFamily":
        return cls(ErpKind.dirichlet, n_components)

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "ErpFamily":
        return cls(ErpKind.uniform, low=float(low), high=float(high))


class _Erp:
    """Per-kind implementation. Parameter vectors arrive validated."""

    def check_natural(self, family: ErpFamily, natural: np.ndarray) -> None:
        raise NotImplementedError

    def to_unconstrained(self, family: ErpFamily, natural: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def in_support(self, family: ErpFamily, value: ErpValue) -> bool:
        raise NotImplementedError

    def sample(self, family: ErpFamily, theta: np.ndarray, rng: np.random.Generator) -> ErpValue:
        raise NotImplementedError

    def log_pdf(self, family: ErpFamily, theta: np.ndarray, value: ErpValue) -> float:
        raise NotImplementedError

    def grad(self, family: ErpFamily, theta: np.ndarray, value: ErpValue) -> np.ndarray:
        raise NotImplementedError

    def sample_natural(
        self, family: ErpFamily, natural: np.ndarray, rng: np.random.Generator
    ) -> ErpValue:
        raise NotImplementedError

    def natural_log_pdf(self, family: ErpFamily, natural: np.ndarray, value: ErpValue) -> float:
        raise NotImplementedError

    def draw(
        self, family: ErpFamily, theta: np.ndarray, rng: np.random.Generator
    ) -> tuple[ErpValue, float, np.ndarray]:
        value = self.sample(family, theta, rng)
        return value, self.log_pdf(family, theta, value), self.grad(family, theta, value)


def _is_real(value: ErpValue) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and math.isfinite(value)


def _is_index(value: ErpValue, n: int) -> bool:
    if isinstance(value, (bool, np.bool_)):
        value = int(value)
    if isinstance(value, (float, np.floating)):
        if not float(value).is_integer():
            return False
        value = int(value)
    return isinstance(value, (int, np.integer)) and 0 <= value < n


def _clip_open_unit(x: float) -> float:
    return float(min(max(x, _TINY), _ONE_MINUS_EPS))


class _Normal(_Erp):
    def check_natural(self, family, natural):
        if not natural[1] > 0.0:
            raise ParameterError(f"normal: std must be positive, got {natural[1]}")

    def to_unconstrained(self, family, natural):
        return np.array([natural[0], math.log(natural[1])])

    def in_support(self, family, value):
        return _is_real(value)

    def sample(self, family, theta, rng):
        return float(theta[0] + math.exp(theta[1]) * rng.standard_normal())

    def log_pdf(self, family, theta, value):
        z = (value - theta[0]) / math.exp(theta[1])
        return -LOG_SQRT_2PI - float(theta[1]) - 0.5 * z * z

    def grad(self, family, theta, value):
        sigma = math.exp(theta[1])
        z = (value - theta[0]) / sigma
        return np.array([z / sigma, z * z - 1.0])

    def sample_natural(self, family, natural, rng):
        return float(rng.normal(natural[0], natural[1]))

    def natural_log_pdf(self, family, natural, value):
        z = (value - natural[0]) / natural[1]
        return -LOG_SQRT_2PI - math.log(natural[1]) - 0.5 * z * z


class _Bernoulli(_Erp):
    def check_natural(self, family, natural):
        if not 0.0 <= natural[0] <= 1.0:
            raise ParameterError(f"bernoulli: p must lie in [0, 1], got {natural[0]}")

    def to_unconstrained(self, family, natural):
        p = natural[0]
        if not 0.0 < p < 1.0:
            raise ParameterError(f"bernoulli: logit undefined for p={p}")
        return np.array([special.logit(p)])

    def in_support(self, family, value):
        return _is_index(value, 2)

    def sample(self, family, theta, rng):
        return int(rng.random() < special.expit(theta[0]))

    def log_pdf(self, family, theta, value):
        sign = -1.0 if int(value) == 1 else 1.0
        return -float(np.logaddexp(0.0, sign * theta[0]))

    def grad(self, family, theta, value):
        return np.array([int(value) - special.expit(theta[0])])

    def sample_natural(self, family, natural, rng):
        return int(rng.random() < natural[0])

    def natural_log_pdf(self, family, natural, value):
        p = float(natural[0])
        q = p if int(value) == 1 else 1.0 - p
        return math.log(q) if q > 0.0 else -math.inf


class _Categorical(_Erp):
    def check_natural(self, family, natural):
        if np.any(natural < 0.0) or abs(natural.sum() - 1.0) > 1e-8:
            raise ParameterError("categorical: probabilities must be nonnegative and sum to 1")

    def to_unconstrained(self, family, natural):
        if np.any(natural <= 0.0):
            raise ParameterError("categorical: logits undefined for zero-probability outcomes")
        return np.log(natural)

    def in_support(self, family, value):
        return _is_index(value, family.dim)

    def _pick(self, probs: np.ndarray, rng: np.random.Generator) -> int:
        cdf = np.cumsum(probs)
        index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(index, len(probs) - 1)

    def sample(self, family, theta, rng):
        return self._pick(special.softmax(theta), rng)

    def log_pdf(self, family, theta, value):
        return float(theta[int(value)] - special.logsumexp(theta))

    def grad(self, family, theta, value):
        g = -special.softmax(theta)
        g[int(value)] += 1.0
        return g

    def draw(self, family, theta, rng):
        log_probs = special.log_softmax(theta)
        probs = np.exp(log_probs)
        index = self._pick(probs, rng)
        score = -probs
        score[index] += 1.0
        return index, float(log_probs[index]), score

    def sample_natural(self, family, natural, rng):
        return self._pick(natural, rng)

    def natural_log_pdf(self, family, natural, value):
        p = float(natural[int(value)])
        return math.log(p) if p > 0.0 else -math.inf


def _beta_log_pdf(a: float, b: float, x: float) -> float:
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - float(special.betaln(a, b))


def _beta_grad(a: float, b: float, x: float) -> np.ndarray:
    dab = special.digamma(a + b)
    return np.array(
        [
            a * (math.log(x) - special.digamma(a) + dab),
            b * (math.log1p(-x) - special.digamma(b) + dab),
        ]
    )


class _Beta(_Erp):
    def check_natural(self, family, natural):
        if np.any(natural <= 0.0):
            raise ParameterError(f"beta: shape parameters must be positive, got {natural}")

    def to_unconstrained(self, family, natural):
        return np.log(natural)

    def in_support(self, family, value):
        return _is_real(value) and 0.0 < value < 1.0

    def sample(self, family, theta, rng):
        return _clip_open_unit(rng.beta(math.exp(theta[0]), math.exp(theta[1])))

    def log_pdf(self, family, theta, value):
        return _beta_log_pdf(math.exp(theta[0]), math.exp(theta[1]), value)

    def grad(self, family, theta, value):
        return _beta_grad(math.exp(theta[0]), math.exp(theta[1]), value)

    def sample_natural(self, family, natural, rng):
        return _clip_open_unit(rng.beta(natural[0], natural[1]))

    def natural_log_pdf(self, family, natural, value):
        return _beta_log_pdf(natural[0], natural[1], value)


class _Gamma(_Erp):
    """Gamma(shape, rate)."""

    def check_natural(self, family, natural):
        if np.any(natural <= 0.0):
            raise ParameterError(f"gamma: shape and rate must be positive, got {natural}")

    def to_unconstrained(self, family, natural):
        return np.log(natural)

    def in_support(self, family, value):
        return _is_real(value) and value > 0.0

    @staticmethod
    def _log_pdf(shape: float, rate: float, x: float) -> float:
        return (
            shape * math.log(rate)
            - float(special.gammaln(shape))
            + (shape - 1.0) * math.log(x)
            - rate * x
        )

    def sample(self, family, theta, rng):
        return max(float(rng.gamma(math.exp(theta[0]), 1.0 / math.exp(theta[1]))), _TINY)

    def log_pdf(self, family, theta, value):
        return self._log_pdf(math.exp(theta[0]), math.exp(theta[1]), value)

    def grad(self, family, theta, value):
        shape, rate = math.exp(theta[0]), math.exp(theta[1])
        return np.array(
            [
                shape * (math.log(rate) - special.digamma(shape) + math.log(value)),
                shape - rate * value,
            ]
        )

    def sample_natural(self, family, natural, rng):
        return max(float(rng.gamma(natural[0], 1.0 / natural[1])), _TINY)

    def natural_log_pdf(self, family, natural, value):
        return self._log_pdf(natural[0], natural[1], value)


class _Dirichlet(_Erp):
    def check_natural(self, family, natural):
        if np.any(natural <= 0.0):
            raise ParameterError("dirichlet: concentrations must be positive")

    def to_unconstrained(self, family, natural):
        return np.log(natural)

    def in_support(self, family, value):
        if isinstance(value, (list, tuple)):
            value = np.asarray(value, dtype=float)
        if not isinstance(value, np.ndarray) or value.shape != (family.dim,):
            return False
        return bool(np.all(value > 0.0)) and abs(float(value.sum()) - 1.0) <= SIMPLEX_TOL

    @staticmethod
    def _floor(x: np.ndarray) -> np.ndarray:
        x = np.maximum(x, get_settings().simplex_floor)
        return x / x.sum()

    @staticmethod
    def _log_pdf(alpha: np.ndarray, x: np.ndarray) -> float:
        return float(
            special.gammaln(alpha.sum())
            - special.gammaln(alpha).sum()
            + np.dot(alpha - 1.0, np.log(x))
        )

    def sample(self, family, theta, rng):
        return self._floor(rng.dirichlet(np.exp(theta)))

    def log_pdf(self, family, theta, value):
        return self._log_pdf(np.exp(theta), value)

    def grad(self, family, theta, value):
        alpha = np.exp(theta)
        return alpha * (special.digamma(alpha.sum()) - special.digamma(alpha) + np.log(value))

    def sample_natural(self, family, natural, rng):
        return self._floor(rng.dirichlet(natural))

    def natural_log_pdf(self, family, natural, value):
        return self._log_pdf(natural, value)


class _Uniform(_Erp):
    """Uniform target on a fixed [low, high]; variational side is a rescaled Beta."""

    def check_natural(self, family, natural):
        if natural[0] != family.low or natural[1] != family.high:
            raise ParameterError(
                f"uniform: bounds {tuple(natural)} differ from the family support "
                f"[{family.low}, {family.high}]"
            )

    def to_unconstrained(self, family, natural):
        return np.zeros(2)

    def in_support(self, family, value):
        return _is_real(value) and family.low < value < family.high

    def _unit(self, family: ErpFamily, value: float) -> float:
        return (value - family.low) / (family.high - family.low)

    def _inside(self, family: ErpFamily, value: float) -> float:
        # rounding can land on a bound when |low| dwarfs the width
        lowest = np.nextafter(family.low, family.high)
        highest = np.nextafter(family.high, family.low)
        return float(min(max(value, lowest), highest))

    def sample(self, family, theta, rng):
        z = _clip_open_unit(rng.beta(math.exp(theta[0]), math.exp(theta[1])))
        return self._inside(family, family.low + (family.high - family.low) * z)

    def log_pdf(self, family, theta, value):
        z = _clip_open_unit(self._unit(family, value))
        width = math.log(family.high - family.low)
        return _beta_log_pdf(math.exp(theta[0]), math.exp(theta[1]), z) - width

    def grad(self, family, theta, value):
        z = _clip_open_unit(self._unit(family, value))
        return _beta_grad(math.exp(theta[0]), math.exp(theta[1]), z)

    def sample_natural(self, family, natural, rng):
        return self._inside(family, float(rng.uniform(family.low, family.high)))

    def natural_log_pdf(self, family, natural, value):
        return -math.log(family.high - family.low)


_IMPLS: dict[ErpKind, _Erp] = {
    ErpKind.normal: _Normal(),
    ErpKind.bernoulli: _Bernoulli(),
    ErpKind.categorical: _Categorical(),
    ErpKind.beta: _Beta(),
    ErpKind.gamma: _Gamma(),
    ErpKind.dirichlet: _Dirichlet(),
    ErpKind.uniform: _Uniform(),
}


def as_params(family: ErpFamily, params: Sequence[float] | np.ndarray) -> ParamVector:
    """Coerce ``params`` to a float vector of the family's arity, rejecting non-finite entries."""
    vector = np.asarray(params, dtype=float).reshape(-1)
    if vector.shape[0] != family.arity:
        raise ParameterError(
            f"{family.kind.value}: expected {family.arity} parameters, got {vector.shape[0]}"
        )
    if not np.all(np.isfinite(vector)):
        raise ParameterError(f"{family.kind.value}: parameters must be finite, got {vector}")
    return vector


def as_natural(family: ErpFamily, natural: Sequence[float] | np.ndarray) -> np.ndarray:
    vector = as_params(family, natural)
    _IMPLS[family.kind].check_natural(family, vector)
    return vector


def in_support(family: ErpFamily, value: ErpValue) -> bool:
    return _IMPLS[family.kind].in_support(family, value)


def sample(family: ErpFamily, params: Sequence[float], rng: np.random.Generator) -> ErpValue:
    return _IMPLS[family.kind].sample(family, as_params(family, params), rng)


def log_pdf(family: ErpFamily, params: Sequence[float], value: ErpValue) -> float:
    """Log-density under unconstrained parameters; ``-inf`` outside the support."""
    theta = as_params(family, params)
    impl = _IMPLS[family.kind]
    if not impl.in_support(family, value):
        return -math.inf
    return impl.log_pdf(family, theta, value)


def grad_log_pdf(family: ErpFamily, params: Sequence[float], value: ErpValue) -> ParamVector:
    theta = as_params(family, params)
    impl = _IMPLS[family.kind]
    if not impl.in_support(family, value):
        raise OutOfSupportError(f"{family.kind.value}: value {value!r} is outside the support")
    return impl.grad(family, theta, value)


def draw(
    family: ErpFamily, params: Sequence[float], rng: np.random.Generator
) -> tuple[ErpValue, float, ParamVector]:
    """Sample a value and return it with its log-density and score in one pass."""
    return _IMPLS[family.kind].draw(family, as_params(family, params), rng)


def init_from_target(family: ErpFamily, target_params: Sequence[float]) -> ParamVector:
    """Unconstrained parameters that reproduce the target distribution exactly."""
    natural = as_natural(family, target_params)
    theta = _IMPLS[family.kind].to_unconstrained(family, natural)
    if not np.all(np.isfinite(theta)):
        raise ParameterError(f"{family.kind.value}: {natural} has no finite reparameterisation")
    return theta


def target_sample(
    family: ErpFamily, target_params: Sequence[float], rng: np.random.Generator
) -> ErpValue:
    return _IMPLS[family.kind].sample_natural(family, as_natural(family, target_params), rng)


def target_log_pdf(family: ErpFamily, target_params: Sequence[float], value: ErpValue) -> float:
    """Log-density under natural parameters; ``-inf`` outside the support."""
    natural = as_natural(family, target_params)
    impl = _IMPLS[family.kind]
    if not impl.in_support(family, value):
        return -math.inf
    return impl.natural_log_pdf(family, natural, value)

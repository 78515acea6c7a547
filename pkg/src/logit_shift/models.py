"""Data models for scores, Poisson-Binomial distributions and results."""

from __future__ import annotations

from typing import Annotated, Any, TypeVar

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    ValidationError,
    field_validator,
    model_validator,
)
from scipy.special import expit, logit
from scipy.stats import norm

from logit_shift.errors import DomainError

# Tolerance on the total mass of a stored distribution
NORMALIZATION_TOL = 1e-12

# Tolerance on the sum of posterior scores against the observed total
POSTERIOR_SUM_TOL = 1e-9


def _as_vector(value: Any) -> np.ndarray:
    """Copy ``value`` into a read-only one-dimensional float array."""
    arr = np.array(value, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a one-dimensional vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


FloatVector = Annotated[
    np.ndarray,
    BeforeValidator(_as_vector),
    PlainSerializer(lambda arr: arr.tolist(), return_type=list),
]

_FROZEN_ARRAYS = ConfigDict(frozen=True, arbitrary_types_allowed=True)

M = TypeVar("M", bound=BaseModel)


def validated(model: type[M], **data: Any) -> M:
    """Build ``model`` from untrusted data, raising DomainError on failure."""
    try:
        return model(**data)
    except ValidationError as exc:
        details = "; ".join(err["msg"] for err in exc.errors())
        raise DomainError(f"invalid {model.__name__}: {details}") from exc


def _check_open_unit(arr: np.ndarray, what: str) -> np.ndarray:
    bad = np.flatnonzero(~((arr > 0.0) & (arr < 1.0)))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"{what} must lie strictly in (0, 1); entry {i} is {arr[i]!r}"
            f" ({bad.size} offending)"
        )
    return arr


# ---------------------------------------------------------------------------
# Poisson-Binomial engine types
# ---------------------------------------------------------------------------


class BernoulliVector(BaseModel):
    """Success probabilities ``p`` of independent Bernoulli trials.

    ``q`` holds the failure probabilities and defaults to 1 - p.  Trials
    built with ``from_log_odds`` carry both sides exactly, so a trial whose
    success probability rounds to 1.0 keeps a positive failure probability.
    """

    model_config = _FROZEN_ARRAYS

    p: FloatVector
    q: FloatVector

    @model_validator(mode="before")
    @classmethod
    def _default_failures(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("q") is None and "p" in data:
            data = {**data, "q": 1.0 - np.asarray(data["p"], dtype=float)}
        return data

    @model_validator(mode="after")
    def _check_trials(self) -> BernoulliVector:
        if self.p.size == 0:
            raise ValueError("at least one trial is required")
        if self.q.shape != self.p.shape:
            raise ValueError(f"{self.q.size} failure probabilities for {self.p.size}")
        bad = np.flatnonzero(
            ~((self.p > 0.0) & (self.q > 0.0) & (self.p <= 1.0) & (self.q <= 1.0))
        )
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                "success probabilities must lie strictly in (0, 1); "
                f"entry {i} is {self.p[i]!r} ({bad.size} offending)"
            )
        if np.max(np.abs(self.p + self.q - 1.0)) > 4 * np.finfo(float).eps:
            raise ValueError("success and failure probabilities must sum to 1")
        return self

    @classmethod
    def from_log_odds(cls, log_odds: np.ndarray) -> BernoulliVector:
        lo = np.asarray(log_odds, dtype=float)
        return cls(p=expit(lo), q=expit(-lo))

    @property
    def n(self) -> int:
        return int(self.p.size)


class Pmf(BaseModel):
    """Exact distribution of a count over {0..n}, with its log-space twin.

    ``log_probs`` is -inf wherever ``probs`` is exactly zero.
    """

    model_config = _FROZEN_ARRAYS

    probs: FloatVector
    log_probs: FloatVector
    n: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_distribution(self) -> Pmf:
        if self.probs.size != self.n + 1 or self.log_probs.size != self.n + 1:
            raise ValueError(
                f"a distribution over 0..{self.n} needs {self.n + 1} entries"
            )
        if np.any(self.probs < 0.0) or not np.all(np.isfinite(self.probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        total = float(self.probs.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        return self

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> Pmf:
        arr = np.asarray(probs, dtype=float)
        with np.errstate(divide="ignore"):
            log_probs = np.log(arr)
        return cls(probs=arr, log_probs=log_probs, n=arr.size - 1)

    def support(self) -> np.ndarray:
        return np.arange(self.n + 1)

    def mean(self) -> float:
        return float(np.dot(self.support(), self.probs))

    def variance(self) -> float:
        d = self.support()
        mu = self.mean()
        return float(np.dot((d - mu) ** 2, self.probs))

    def is_log_concave(self, rtol: float = 1e-9) -> bool:
        """Check probs[d-1] * probs[d+1] <= probs[d]**2 at interior points.

        Compared in log space, and only where all three entries are normal
        floats; subnormal tails carry too few bits for the comparison.
        """
        if self.n < 2:
            return True
        tiny = np.finfo(float).tiny
        ok = self.probs >= tiny
        inner = ok[:-2] & ok[1:-1] & ok[2:]
        lp = self.log_probs
        lhs = lp[:-2] + lp[2:]
        rhs = 2.0 * lp[1:-1]
        return bool(np.all(lhs[inner] <= rhs[inner] + rtol))


class NormalApprox(BaseModel):
    """Moment-matched normal approximation to a Poisson-Binomial sum."""

    model_config = ConfigDict(frozen=True)

    mu: float
    sigma2: float = Field(gt=0.0)
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def _mean_inside_support(self) -> NormalApprox:
        if not 0.0 < self.mu < self.n:
            raise ValueError(f"mean {self.mu!r} outside (0, {self.n})")
        return self

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    def density(self, d: float | np.ndarray) -> float | np.ndarray:
        """Normal density psi(d)."""
        return norm.pdf(d, loc=self.mu, scale=self.sigma)

    def max_deviation(self, pmf: Pmf) -> float:
        """Largest gap between psi(d) and the exact probability of d."""
        return float(np.max(np.abs(self.density(pmf.support()) - pmf.probs)))

    def error_scale(self) -> float:
        return 1.0 / self.sigma2

    def ratio_gap(self) -> float:
        """psi(D)^2 / (psi(D-1) psi(D+1)) - 1, which is exp(1/sigma2) - 1."""
        return float(np.expm1(1.0 / self.sigma2))


# ---------------------------------------------------------------------------
# Recalibration types
# ---------------------------------------------------------------------------


class ScoreSet(BaseModel):
    """Prior scores p_i, with optional unit ids and group labels."""

    model_config = _FROZEN_ARRAYS

    scores: FloatVector
    ids: list[str] | None = None
    group: list[str] | None = None

    @field_validator("scores")
    @classmethod
    def _open_unit(cls, v: np.ndarray) -> np.ndarray:
        if v.size == 0:
            raise ValueError("at least one score is required")
        return _check_open_unit(v, "scores")

    @model_validator(mode="after")
    def _check_labels(self) -> ScoreSet:
        n = self.scores.size
        if self.ids is not None:
            if len(self.ids) != n:
                raise ValueError(f"{len(self.ids)} ids for {n} scores")
            if len(set(self.ids)) != n:
                raise ValueError("ids must be unique")
        if self.group is not None and len(self.group) != n:
            raise ValueError(f"{len(self.group)} group labels for {n} scores")
        return self

    @property
    def n(self) -> int:
        return int(self.scores.size)

    def total(self) -> float:
        return float(self.scores.sum())

    def groups(self) -> list[str]:
        """Group labels in order of first appearance."""
        if self.group is None:
            return []
        return list(dict.fromkeys(self.group))

    def indices(self, label: str) -> np.ndarray:
        if self.group is None:
            raise KeyError(label)
        idx = np.flatnonzero(np.asarray(self.group, dtype=object) == label)
        if idx.size == 0:
            raise KeyError(label)
        return idx

    def subset(self, label: str) -> ScoreSet:
        idx = self.indices(label)
        ids = [self.ids[i] for i in idx] if self.ids is not None else None
        return ScoreSet(scores=self.scores[idx], ids=ids, group=[label] * idx.size)


class ShiftResult(BaseModel):
    """Solved swing and the recalibrated scores it produces."""

    model_config = _FROZEN_ARRAYS

    alpha: float = Field(gt=0.0)
    recalibrated: FloatVector
    iterations: int = Field(ge=0)
    residual: float = Field(ge=0.0)
    target: float

    @property
    def log_alpha(self) -> float:
        return float(np.log(self.alpha))


class LogisticScore(BaseModel):
    """Scores written as a logistic model: intercept plus per-unit linear term."""

    model_config = _FROZEN_ARRAYS

    intercept: float
    linear_term: FloatVector

    @classmethod
    def from_scores(cls, scores: ScoreSet, intercept: float = 0.0) -> LogisticScore:
        return cls(intercept=intercept, linear_term=logit(scores.scores) - intercept)

    def probabilities(self) -> np.ndarray:
        return expit(self.intercept + self.linear_term)


class PosteriorResult(BaseModel):
    """Exact conditional scores given the observed total.

    ``tilt`` is the swing the computation was centred on and ``centred`` the
    PMF of the sum under it; the posterior itself does not depend on either.
    """

    model_config = _FROZEN_ARRAYS

    p_star: FloatVector
    xi: FloatVector
    phi: FloatVector
    target: int
    tilt: float = Field(default=1.0, gt=0.0)
    centred: Pmf | None = None

    @model_validator(mode="after")
    def _check_posterior(self) -> PosteriorResult:
        n = self.p_star.size
        if self.xi.size != n or self.phi.size != n:
            raise ValueError(f"p_star, xi and phi must all have {n} entries")
        if not np.all(np.isfinite(self.p_star)) or not np.all(np.isfinite(self.phi)):
            raise ValueError("posterior scores and ratios must be finite")
        if np.any(self.p_star < 0.0) or np.any(self.p_star > 1.0):
            raise ValueError("posterior scores must lie in [0, 1]")
        if np.any(self.phi <= 0.0):
            raise ValueError("leave-one-out ratios must be positive")
        total = float(self.p_star.sum())
        if abs(total - self.target) > POSTERIOR_SUM_TOL:
            raise ValueError(f"posterior scores sum to {total!r}, not {self.target}")
        return self


class BoundReport(BaseModel):
    """Outer and inner bounds around the swing, and the scale of their gap."""

    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    phi_min: float
    phi_max: float
    alpha: float
    sigma2: float
    gap: float
    normal_gap: float
    error_estimate: float

    def chain(self) -> tuple[float, float, float, float, float]:
        return (self.lower, self.phi_min, self.alpha, self.phi_max, self.upper)


class Agreement(BaseModel):
    """How closely an approximation tracks the exact posterior."""

    model_config = ConfigDict(frozen=True)

    rmse: float = Field(ge=0.0)
    one_minus_r2: float | None = None
    max_abs_error: float = Field(ge=0.0)

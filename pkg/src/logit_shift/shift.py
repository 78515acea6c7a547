"""The logit shift: one multiplicative swing in odds that hits the observed total.

Every score moves by the same amount on the log-odds scale,

    f(p, alpha) = 1 / (1 + alpha (1 - p) / p) = expit(logit(p) - log(alpha)),

and alpha is chosen so that the shifted scores sum to the target D.  The
sum h(alpha) is strictly decreasing, so bisection on log(alpha) finds it.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence

import numpy as np
from scipy.special import expit, logit, rel_entr

from logit_shift.errors import (
    ConvergenceError,
    DomainError,
    MissingTargetError,
    TargetError,
)
from logit_shift.models import LogisticScore, ScoreSet, ShiftResult, validated

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
MAX_DOUBLINGS = 200
MAX_BISECTIONS = 400


def as_scores(scores: ScoreSet | Sequence[float] | np.ndarray) -> ScoreSet:
    """Coerce raw probabilities into a validated ScoreSet."""
    if isinstance(scores, ScoreSet):
        return scores
    return validated(ScoreSet, scores=scores)


def swing(x: float | np.ndarray, s: float | np.ndarray) -> float | np.ndarray:
    """f(x, s) = 1 / (1 + ((1 - x) / x) s), elementwise."""
    return expit(logit(x) - np.log(s))


def h(alpha: float, scores: ScoreSet | Sequence[float] | np.ndarray) -> float:
    """Sum of the scores after a swing of ``alpha``."""
    if not alpha > 0.0:
        raise DomainError(f"swing must be positive, got {alpha!r}")
    return float(np.sum(swing(as_scores(scores).scores, alpha)))


def _check_target(target: float, n: int) -> float:
    d = float(target)
    if not math.isfinite(d) or d <= 0.0 or d >= n:
        raise TargetError(
            f"target {target!r} has no interior solution; need 0 < D < {n}"
        )
    return d


def solve_alpha(
    scores: ScoreSet | Sequence[float] | np.ndarray,
    target: float,
    tol: float = DEFAULT_TOLERANCE,
    max_doublings: int = MAX_DOUBLINGS,
) -> ShiftResult:
    """Find alpha with |h(alpha) - D| <= tol and the recalibrated scores.

    Real-valued targets are accepted.
    """
    s = as_scores(scores)
    d = _check_target(target, s.n)
    if not tol > 0.0:
        raise DomainError(f"tolerance must be positive, got {tol!r}")

    lp = logit(s.scores)

    def excess(log_alpha: float) -> float:
        return float(np.sum(expit(lp - log_alpha))) - d

    f_mid = excess(0.0)
    if abs(f_mid) <= tol:
        logger.debug("Target %.10g already met by the prior scores", d)
        return _result(lp, 0.0, abs(f_mid), 0, d)

    # Bracket on log(alpha): excess is positive at lo and negative at hi
    lo, hi = -1.0, 1.0
    f_lo, f_hi = excess(lo), excess(hi)
    steps = 0
    while not (f_lo >= 0.0 >= f_hi):
        if steps >= max_doublings:
            raise ConvergenceError(
                f"could not bracket target {d:.10g} in {max_doublings} doublings"
            )
        if f_lo < 0.0:
            lo *= 2.0
            f_lo = excess(lo)
        if f_hi > 0.0:
            hi *= 2.0
            f_hi = excess(hi)
        steps += 1

    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        f_mid = excess(mid)
        steps += 1
        if abs(f_mid) <= tol:
            logger.debug("Solved alpha=%.12g in %d steps", math.exp(mid), steps)
            return _result(lp, mid, abs(f_mid), steps, d)
        if mid in (lo, hi):
            break
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid

    raise ConvergenceError(
        f"bisection stalled at residual {abs(f_mid):.3g} > tolerance {tol:.3g}"
    )


def _result(
    lp: np.ndarray, log_alpha: float, residual: float, steps: int, d: float
) -> ShiftResult:
    return ShiftResult(
        alpha=math.exp(log_alpha),
        recalibrated=expit(lp - log_alpha),
        iterations=steps,
        residual=residual,
        target=d,
    )


def kl_objective(
    candidate: Sequence[float] | np.ndarray,
    scores: ScoreSet | Sequence[float] | np.ndarray,
) -> float:
    """Summed Bernoulli KL divergence of ``candidate`` from the prior scores."""
    p = as_scores(scores).scores
    x = np.asarray(candidate, dtype=float)
    if x.shape != p.shape:
        raise DomainError(f"candidate has shape {x.shape}, scores {p.shape}")
    if not np.all((x > 0.0) & (x < 1.0)):
        raise DomainError("candidate probabilities must lie strictly in (0, 1)")
    return float(np.sum(rel_entr(x, p) + rel_entr(1.0 - x, 1.0 - p)))


def intercept_shift(logistic: LogisticScore, alpha: float) -> LogisticScore:
    """Apply the swing to a logistic model: the intercept drops by log(alpha)."""
    if not alpha > 0.0:
        raise DomainError(f"swing must be positive, got {alpha!r}")
    return LogisticScore(
        intercept=logistic.intercept - math.log(alpha),
        linear_term=logistic.linear_term,
    )


def recalibrate_groups(
    scores: ScoreSet,
    targets: Mapping[str, float],
    tol: float = DEFAULT_TOLERANCE,
) -> dict[str, ShiftResult]:
    """Solve an independent swing inside each group."""
    labels = scores.groups()
    if not labels:
        raise MissingTargetError("scores carry no group labels")
    missing = [g for g in labels if g not in targets]
    if missing:
        raise MissingTargetError(f"no target for group(s): {', '.join(missing)}")
    unused = sorted(set(targets) - set(labels))
    if unused:
        logger.warning("Targets given for absent groups: %s", ", ".join(unused))

    results: dict[str, ShiftResult] = {}
    for label in labels:
        sub = scores.subset(label)
        if sub.n < 2:
            raise TargetError("a single unit has no interior target", group=label)
        try:
            results[label] = solve_alpha(sub, targets[label], tol=tol)
        except TargetError as exc:
            raise TargetError(str(exc), group=label) from exc
    return results

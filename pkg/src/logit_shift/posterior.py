"""Exact posterior scores given the observed total, and bounds around the swing.

Conditioning on S = D does not change if every score is first swung by
the same amount: a swing multiplies the probability of each outcome with
exactly D successes by the same constant.  The exact computation therefore
centres the scores with the logit shift before building any PMF, which
keeps P(S = D) at the mode of the distribution instead of deep in a tail.
"""

from __future__ import annotations

import logging
import math
import numbers
from collections.abc import Sequence

import numpy as np
from pydantic import ValidationError
from scipy.special import logit

from logit_shift.errors import (
    BoundViolationError,
    DomainError,
    InstabilityError,
    SizeError,
    TargetError,
)
from logit_shift.models import (
    Agreement,
    BernoulliVector,
    BoundReport,
    PosteriorResult,
    ScoreSet,
    ShiftResult,
)
from logit_shift.pbd import (
    DEFAULT_MAX_N,
    leave_one_out_at,
    normal_approx,
    pmf,
    pmf_ratio,
)
from logit_shift.shift import DEFAULT_TOLERANCE, as_scores, solve_alpha

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 20
BOUND_SLACK = 1e-9

_ENUMERATION_CHUNK = 1 << 16

# Beyond this, expit of a log-odds rounds one side of the trial to zero
_MAX_LOG_ODDS = 700.0
_TINY = np.finfo(float).tiny


def _integer_target(target: float, n: int) -> int:
    if isinstance(target, bool) or not isinstance(target, numbers.Real):
        raise TargetError(f"target must be an integer count, got {target!r}")
    if not float(target).is_integer():
        raise TargetError(f"target must be an integer count, got {target!r}")
    d = int(target)
    if not 0 < d < n:
        raise TargetError(
            f"target {d} is not interior; feasible targets are 1..{n - 1}"
        )
    return d


def _centre(lp: np.ndarray, log_alpha: float) -> tuple[float, BernoulliVector]:
    """Trials swung by the largest fraction of the swing that keeps both the
    success and the failure probability of every trial positive."""
    shrink = 1.0
    while shrink > 1e-3:
        log_tilt = shrink * log_alpha
        log_odds = lp - log_tilt
        if np.all(np.abs(log_odds) < _MAX_LOG_ODDS):
            return log_tilt, BernoulliVector.from_log_odds(log_odds)
        shrink *= 0.5
    logger.warning("Scores saturate under any swing; conditioning on the raw scores")
    return 0.0, BernoulliVector.from_log_odds(lp)


def _posterior(**fields: object) -> PosteriorResult:
    try:
        return PosteriorResult(**fields)  # type: ignore[arg-type]
    except ValidationError as exc:
        details = "; ".join(err["msg"] for err in exc.errors())
        raise InstabilityError(f"exact posterior failed its checks: {details}") from exc


def exact_posterior(
    scores: ScoreSet | Sequence[float] | np.ndarray,
    target: int,
    tol: float = DEFAULT_TOLERANCE,
    max_n: int = DEFAULT_MAX_N,
    workers: int | None = None,
) -> PosteriorResult:
    """P(W_i = 1 | sum_j W_j = D) for every unit, from one PMF and N deconvolutions."""
    s = as_scores(scores)
    d = _integer_target(target, s.n)
    if s.n > max_n:
        raise SizeError(f"{s.n} units exceed the PMF cap of {max_n}")

    shift = solve_alpha(s, d, tol=tol)
    lp = logit(s.scores)
    log_tilt, trials = _centre(lp, shift.log_alpha)

    full = pmf(trials, max_n=max_n)
    if full.probs[d] < _TINY:
        raise InstabilityError(
            f"P(S = {d}) underflows under a tilt of {math.exp(log_tilt):.6g}"
        )
    loo = leave_one_out_at(full, trials, (d - 1, d), workers=workers)
    below, at = loo[:, 0], loo[:, 1]
    if np.any(below < _TINY):
        raise InstabilityError(f"P(S_-i = {d - 1}) underflows for some unit")

    # Units that round to certain success can overshoot 1 by an ulp
    p_star = np.minimum(trials.p * below / full.probs[d], 1.0)
    phi = math.exp(log_tilt) * at / below
    logger.debug(
        "Exact posterior for %d units at D=%d (tilt %.6g)", s.n, d, math.exp(log_tilt)
    )
    return _posterior(
        p_star=p_star,
        xi=p_star / s.scores,
        phi=phi,
        target=d,
        tilt=math.exp(log_tilt),
        centred=full,
    )


def enumeration_oracle(
    scores: ScoreSet | Sequence[float] | np.ndarray,
    target: int,
    cap: int = ENUMERATION_CAP,
) -> PosteriorResult:
    """The posterior by brute force over all 2^N outcome vectors."""
    s = as_scores(scores)
    if s.n > cap:
        raise SizeError(f"enumeration over {s.n} units exceeds the cap of {cap}")
    d = _integer_target(target, s.n)

    p = s.scores
    log_p, log_q = np.log(p), np.log1p(-p)
    shifts = np.arange(s.n, dtype=np.int64)
    joint_one = np.zeros(s.n)
    joint_zero = np.zeros(s.n)
    total = 0.0
    outcomes = 1 << s.n
    for start in range(0, outcomes, _ENUMERATION_CHUNK):
        stop = min(start + _ENUMERATION_CHUNK, outcomes)
        codes = np.arange(start, stop, dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        hits = bits[bits.sum(axis=1) == d]
        if hits.size == 0:
            continue
        weight = np.exp(np.where(hits, log_p, log_q).sum(axis=1))
        joint_one += weight @ hits
        joint_zero += weight @ ~hits
        total += weight.sum()

    p_star = np.minimum(joint_one / total, 1.0)
    # P(S_-i = D) / P(S_-i = D-1), recovered from the two joint probabilities
    phi = (joint_zero / (1.0 - p)) / (joint_one / p)
    return _posterior(p_star=p_star, xi=p_star / p, phi=phi, target=d)


def bound_report(
    scores: ScoreSet | Sequence[float] | np.ndarray,
    target: int,
    shift: ShiftResult,
    post: PosteriorResult,
    slack: float = BOUND_SLACK,
    max_n: int = DEFAULT_MAX_N,
) -> BoundReport:
    """The bound chain lower <= min phi <= alpha <= max phi <= upper.

    Reuses the PMF the posterior was computed from when it carries one.
    """
    s = as_scores(scores)
    d = _integer_target(target, s.n)
    if shift.recalibrated.size != s.n or post.p_star.size != s.n:
        raise DomainError("shift and posterior must cover the same units as the scores")
    if post.target != d or not math.isclose(shift.target, d):
        raise DomainError(f"shift and posterior were not computed for target {d}")

    # Ratios of the full PMF pick up one factor of the swing per count
    full = post.centred
    if full is None or full.n != s.n:
        trials = BernoulliVector.from_log_odds(logit(s.scores) - math.log(post.tilt))
        full = pmf(trials, max_n=max_n)
    lower = post.tilt * pmf_ratio(full, d + 1, d)
    upper = post.tilt * pmf_ratio(full, d, d - 1)

    approx = normal_approx(s.scores)
    report = BoundReport(
        lower=lower,
        upper=upper,
        phi_min=float(post.phi.min()),
        phi_max=float(post.phi.max()),
        alpha=shift.alpha,
        sigma2=approx.sigma2,
        gap=upper / lower - 1.0,
        normal_gap=approx.ratio_gap(),
        error_estimate=approx.error_scale(),
    )
    worst = chain_violation(report)
    if worst > slack:
        raise BoundViolationError(
            f"bound chain {report.chain()} violated by relative {worst:.3g}"
        )
    return report


def chain_violation(report: BoundReport) -> float:
    """Largest relative amount by which a link of the chain runs backwards."""
    chain = report.chain()
    return max(max(a / b - 1.0, 0.0) for a, b in zip(chain, chain[1:]))


def error_estimate(scores: ScoreSet | Sequence[float] | np.ndarray) -> float:
    """Scale 1/sigma^2 of the gap between swung and exact posterior scores."""
    return normal_approx(as_scores(scores).scores).error_scale()


def compare(approx: np.ndarray, exact: np.ndarray) -> Agreement:
    """RMSE and unexplained variance of ``approx`` against ``exact``.

    1 - R^2 is None when the exact scores have no spread.
    """
    a = np.asarray(approx, dtype=float)
    e = np.asarray(exact, dtype=float)
    if a.shape != e.shape or a.size == 0:
        raise DomainError(f"cannot compare shapes {a.shape} and {e.shape}")
    resid = a - e
    rss = float(np.dot(resid, resid))
    one_minus_r2 = None
    if np.ptp(e) > 0.0:
        centred = e - e.mean()
        one_minus_r2 = rss / float(np.dot(centred, centred))
    return Agreement(
        rmse=math.sqrt(rss / e.size),
        one_minus_r2=one_minus_r2,
        max_abs_error=float(np.max(np.abs(resid))),
    )

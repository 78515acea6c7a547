"""Property checks run by ``logit-shift verify``.

Each check draws small random instances (N <= 20, so the 2^N enumeration
is affordable), runs the exact machinery on them and records the worst
deviation it saw.  A check passes when that worst value is within its
tolerance on every instance.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from logit_shift.errors import RecalibrationError
from logit_shift.models import LogisticScore, ScoreSet
from logit_shift.pbd import leave_one_out_pmf, pmf, recursion_error
from logit_shift.posterior import (
    BOUND_SLACK,
    ENUMERATION_CAP,
    bound_report,
    chain_violation,
    enumeration_oracle,
    exact_posterior,
)
from logit_shift.shift import intercept_shift, kl_objective, solve_alpha, swing
from logit_shift.simulate import Distribution, sample_scores

logger = logging.getLogger(__name__)

DEFAULT_MAX_N = 12
DEFAULT_SEEDS = 20


class PropertyCheck(BaseModel):
    name: str
    passed: bool
    cases: int = Field(ge=0)
    worst: float = 0.0
    tolerance: float
    detail: str = ""


class Instance(BaseModel):
    """One random case: scores and an interior integer target."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    scores: np.ndarray
    target: int
    distribution: Distribution


def instances(max_n: int, seeds: int, master_seed: int = 0) -> Iterator[Instance]:
    """Draw ``seeds`` cases cycling through the six sampling distributions."""
    dists = list(Distribution)
    for k in range(seeds):
        rng = np.random.default_rng([master_seed, k])
        n = int(rng.integers(2, max_n + 1))
        dist = dists[k % len(dists)]
        p = sample_scores(dist, n, rng)
        yield Instance(scores=p, target=int(rng.integers(1, n)), distribution=dist)


# Each measure returns the worst deviation it measured on one instance.
Measure = Callable[[Instance, np.random.Generator], float]


def _pmf_invariants(case: Instance, rng: np.random.Generator) -> float:
    dist = pmf(case.scores)
    if not dist.is_log_concave():
        return np.inf
    return abs(float(dist.probs.sum()) - 1.0)


def _leave_one_out(case: Instance, rng: np.random.Generator) -> float:
    full = pmf(case.scores)
    worst = 0.0
    for i, p_i in enumerate(case.scores):
        others = np.delete(case.scores, i)
        q = leave_one_out_pmf(full, float(p_i), others)
        direct = pmf(others).probs
        worst = max(
            worst,
            float(np.max(np.abs(q.probs - direct))),
            recursion_error(full.probs, q.probs, float(p_i)),
        )
    return worst


def _oracle_equivalence(case: Instance, rng: np.random.Generator) -> float:
    exact = exact_posterior(case.scores, case.target)
    brute = enumeration_oracle(case.scores, case.target)
    return float(np.max(np.abs(exact.p_star - brute.p_star)))


def _swing_identity(case: Instance, rng: np.random.Generator) -> float:
    """p*_i equals the prior swung by its own phi_i."""
    post = exact_posterior(case.scores, case.target)
    return float(np.max(np.abs(swing(case.scores, post.phi) - post.p_star)))


def _bound_chain(case: Instance, rng: np.random.Generator) -> float:
    shift = solve_alpha(case.scores, case.target)
    post = exact_posterior(case.scores, case.target)
    report = bound_report(case.scores, case.target, shift, post, slack=np.inf)
    return chain_violation(report)


def _sum_and_rank(case: Instance, rng: np.random.Generator) -> float:
    shift = solve_alpha(case.scores, case.target)
    post = exact_posterior(case.scores, case.target)
    order = np.argsort(case.scores, kind="stable")
    backwards = max(
        float(np.max(-np.diff(post.p_star[order]), initial=0.0)),
        float(np.max(-np.diff(shift.recalibrated[order]), initial=0.0)),
    )
    return max(
        abs(float(post.p_star.sum()) - case.target),
        abs(float(shift.recalibrated.sum()) - case.target),
        backwards,
    )


def _equal_scores(case: Instance, rng: np.random.Generator) -> float:
    n = case.scores.size
    p = np.full(n, float(rng.uniform(0.05, 0.95)))
    shift = solve_alpha(p, case.target)
    post = exact_posterior(p, case.target)
    share = case.target / n
    return max(
        float(np.max(np.abs(shift.recalibrated - share))),
        float(np.max(np.abs(post.p_star - share))),
    )


def _kl_minimality(case: Instance, rng: np.random.Generator) -> float:
    """No sum-preserving perturbation or the exact posterior beats the swing on KL."""
    shift = solve_alpha(case.scores, case.target)
    best = kl_objective(shift.recalibrated, case.scores)
    rivals = [exact_posterior(case.scores, case.target).p_star]
    x = shift.recalibrated
    room = np.minimum(x, 1.0 - x).min()
    for _ in range(8):
        v = rng.standard_normal(x.size)
        v -= v.mean()
        step = 0.5 * room / max(float(np.max(np.abs(v))), 1e-300)
        rivals.append(x + step * v)
    return max(0.0, max(best - kl_objective(r, case.scores) for r in rivals))


def _intercept_equivalence(case: Instance, rng: np.random.Generator) -> float:
    shift = solve_alpha(case.scores, case.target)
    model = LogisticScore.from_scores(
        ScoreSet(scores=case.scores), intercept=float(rng.normal())
    )
    moved = intercept_shift(model, shift.alpha).probabilities()
    return float(np.max(np.abs(moved - shift.recalibrated)))


CHECKS: list[tuple[str, Measure, float]] = [
    ("pmf normalisation and log-concavity", _pmf_invariants, 1e-12),
    ("leave-one-out recursion", _leave_one_out, 1e-9),
    ("oracle equivalence", _oracle_equivalence, 1e-10),
    ("posterior is a swing by phi", _swing_identity, 1e-10),
    ("bound chain", _bound_chain, BOUND_SLACK),
    ("sum constraint and rank preservation", _sum_and_rank, 1e-8),
    ("equal scores", _equal_scores, 1e-10),
    ("KL minimality", _kl_minimality, 1e-9),
    ("intercept equivalence", _intercept_equivalence, 1e-10),
]


def run_check(
    name: str,
    measure: Measure,
    tolerance: float,
    cases: list[Instance],
    master_seed: int = 0,
) -> PropertyCheck:
    worst = 0.0
    for k, case in enumerate(cases):
        rng = np.random.default_rng([master_seed, k, 1])
        try:
            value = measure(case, rng)
        except RecalibrationError as exc:
            logger.warning("%s raised on case %d: %s", name, k, exc)
            return PropertyCheck(
                name=name,
                passed=False,
                cases=k + 1,
                worst=np.inf,
                tolerance=tolerance,
                detail=f"{type(exc).__name__}: {exc}",
            )
        if value > worst:
            worst = value
        if not value <= tolerance:
            logger.info(
                "%s failed on a %s case: %.3g", name, case.distribution.value, value
            )
    passed = worst <= tolerance
    return PropertyCheck(
        name=name,
        passed=passed,
        cases=len(cases),
        worst=worst,
        tolerance=tolerance,
        detail="" if passed else "worst case exceeds tolerance",
    )


def run_checks(
    max_n: int = DEFAULT_MAX_N, seeds: int = DEFAULT_SEEDS, master_seed: int = 0
) -> list[PropertyCheck]:
    """Run every property check on the same set of random instances."""
    if not 2 <= max_n <= ENUMERATION_CAP:
        raise ValueError(f"max_n must lie in 2..{ENUMERATION_CAP}, got {max_n}")
    if seeds < 1:
        raise ValueError(f"seeds must be at least 1, got {seeds}")
    cases = list(instances(max_n, seeds, master_seed))
    return [
        run_check(name, measure, tol, cases, master_seed)
        for name, measure, tol in CHECKS
    ]

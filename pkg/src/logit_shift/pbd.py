"""Exact Poisson-Binomial distributions and leave-one-out deconvolution.

The full PMF is built by direct convolution of the trials' generating
polynomials (1 - p + p x).  Removing one trial is polynomial division by
its factor, run as a first-order linear filter: forward from count 0 or
backward from count n.  Each direction damps rounding error only on one
side of a split count, so the two halves are stitched together there and
the result is checked against

    P(S = d) = p * P(S_-i = d - 1) + (1 - p) * P(S_-i = d)

before it is returned.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.signal import lfilter

from logit_shift.errors import DivisionError, DomainError, InstabilityError, SizeError
from logit_shift.models import BernoulliVector, NormalApprox, Pmf, validated

logger = logging.getLogger(__name__)

DEFAULT_MAX_N = 100_000

# Relative tolerance of the leave-one-out recursion check
RECURSION_RTOL = 1e-9

# Below this, float64 values are too close to underflow for a relative check
_RELATIVE_FLOOR = np.finfo(float).tiny / np.finfo(float).eps


def as_bernoulli(
    probs: BernoulliVector | Sequence[float] | np.ndarray,
) -> BernoulliVector:
    """Coerce success probabilities into a validated BernoulliVector."""
    if isinstance(probs, BernoulliVector):
        return probs
    return validated(BernoulliVector, p=probs)


def _convolve(p: np.ndarray, q: np.ndarray | None = None) -> np.ndarray:
    if q is None:
        q = 1.0 - p
    out = np.zeros(p.size + 1)
    out[0] = 1.0
    for k, (pk, qk) in enumerate(zip(p, q)):
        out[1 : k + 2] = out[1 : k + 2] * qk + out[: k + 1] * pk
        out[0] *= qk
    return out


def pmf(
    probs: BernoulliVector | Sequence[float] | np.ndarray,
    max_n: int = DEFAULT_MAX_N,
) -> Pmf:
    """Exact distribution of the number of successes."""
    trials = as_bernoulli(probs)
    if trials.n > max_n:
        raise SizeError(f"{trials.n} trials exceed the PMF cap of {max_n}")
    out = _convolve(trials.p, trials.q)
    out /= out.sum()
    logger.debug("Computed PMF over %d trials", trials.n)
    return Pmf.from_probs(out)


# ---------------------------------------------------------------------------
# Leave-one-out
# ---------------------------------------------------------------------------


def _forward(probs: np.ndarray, p: float, q: float) -> np.ndarray:
    """r_d = (P_d - p r_{d-1}) / q, for d = 0..n-1."""
    n = probs.size - 1
    return lfilter([1.0 / q], [1.0, p / q], probs[:n])


def _backward(probs: np.ndarray, p: float, q: float) -> np.ndarray:
    """r_{d-1} = (P_d - q r_d) / p, for d = n..1."""
    return lfilter([1.0 / p], [1.0, q / p], probs[:0:-1])[::-1]


def _split_count(log_probs: np.ndarray, p: float, q: float) -> int:
    """Last count at which the forward recursion still damps its errors.

    Forward steps shrink relative error while the odds p/q stay below
    the ratio P(S=d)/P(S=d-1); the full PMF is log-concave, so that holds
    up to the mode of log P(S=d) - d log(p/q) and fails after it.
    """
    n = log_probs.size - 1
    tilted = log_probs - np.arange(n + 1) * (np.log(p) - np.log(q))
    return int(min(np.argmax(tilted), n - 1))


def _deconvolve(
    probs: np.ndarray, log_probs: np.ndarray, p: float, q: float, how: str
) -> np.ndarray:
    if how == "forward":
        r = _forward(probs, p, q)
    elif how == "backward":
        r = _backward(probs, p, q)
    else:
        m = _split_count(log_probs, p, q)
        r = np.concatenate(
            [_forward(probs, p, q)[: m + 1], _backward(probs, p, q)[m + 1 :]]
        )
    return np.maximum(r, 0.0)


def recursion_error(
    full: np.ndarray, reduced: np.ndarray, p: float, q: float | None = None
) -> float:
    """Worst relative violation of the one-trial recursion over all counts."""
    if q is None:
        q = 1.0 - p
    recon = np.zeros(full.size)
    recon[1:] += p * reduced
    recon[:-1] += q * reduced
    scale = np.maximum(full, _RELATIVE_FLOOR)
    return float(np.max(np.abs(recon - full) / scale))


def _remove_trial(
    full: Pmf,
    p: float,
    q: float,
    reconvolve: Callable[[], np.ndarray] | None,
    rtol: float,
) -> np.ndarray:
    for how in ("split", "forward", "backward"):
        r = _deconvolve(full.probs, full.log_probs, p, q, how)
        err = recursion_error(full.probs, r, p, q)
        if err <= rtol:
            return r / r.sum()
        logger.debug("Leave-one-out %s recursion off by %.3g (p=%.6g)", how, err, p)

    if reconvolve is not None:
        logger.warning(
            "Leave-one-out deconvolution unstable for p=%.6g; reconvolving", p
        )
        r = reconvolve()
        err = recursion_error(full.probs, r, p, q)
        if err <= rtol:
            return r / r.sum()
        raise InstabilityError(
            f"reconvolved leave-one-out PMF violates the recursion by {err:.3g}"
        )
    raise InstabilityError(
        f"leave-one-out deconvolution failed for p={p!r} in both directions"
    )


def leave_one_out_pmf(
    full: Pmf,
    p_i: float,
    others: BernoulliVector | Sequence[float] | np.ndarray | None = None,
    rtol: float = RECURSION_RTOL,
) -> Pmf:
    """Distribution of the sum with one trial of probability ``p_i`` removed.

    ``others`` (the remaining probabilities) enables an exact reconvolution
    when neither recursion passes the check.
    """
    if not 0.0 < p_i < 1.0:
        raise DomainError(f"trial probability must lie in (0, 1), got {p_i!r}")
    if full.n < 1:
        raise DomainError("cannot remove a trial from an empty sum")

    reconvolve = None
    if others is not None:
        rest = as_bernoulli(others)
        if rest.n != full.n - 1:
            raise DomainError(f"{rest.n} remaining trials for a PMF over {full.n}")
        reconvolve = lambda: pmf(rest).probs  # noqa: E731

    return Pmf.from_probs(_remove_trial(full, p_i, 1.0 - p_i, reconvolve, rtol))


def leave_one_out_at(
    full: Pmf,
    probs: BernoulliVector | Sequence[float] | np.ndarray,
    counts: Sequence[int],
    workers: int | None = None,
    rtol: float = RECURSION_RTOL,
) -> np.ndarray:
    """P(S_-i = d) for every unit i and each d in ``counts``.

    Returns an array of shape (N, len(counts)).  Units are independent, so
    running them on several workers gives the same array as a serial run.
    """
    trials = as_bernoulli(probs)
    if trials.n != full.n:
        raise DomainError(f"{trials.n} trials for a PMF over {full.n}")
    idx = np.asarray(counts, dtype=int)
    if np.any((idx < 0) | (idx > full.n - 1)):
        raise DomainError(f"counts must lie in 0..{full.n - 1}")

    def one(i: int) -> np.ndarray:
        def reconvolve() -> np.ndarray:
            return _convolve(np.delete(trials.p, i), np.delete(trials.q, i))

        p, q = float(trials.p[i]), float(trials.q[i])
        r = _remove_trial(full, p, q, reconvolve, rtol)
        return r[idx]

    if workers is not None and workers > 1 and trials.n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(trials.n)))
    else:
        rows = [one(i) for i in range(trials.n)]
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# Ratios and the normal approximation
# ---------------------------------------------------------------------------


def pmf_ratio(dist: Pmf, d_num: int, d_den: int) -> float:
    """P(S = d_num) / P(S = d_den), taken in log space."""
    for d in (d_num, d_den):
        if not 0 <= d <= dist.n:
            raise DomainError(f"count {d} outside 0..{dist.n}")
    if dist.probs[d_den] <= 0.0:
        raise DivisionError(f"P(S = {d_den}) is zero")
    return float(np.exp(dist.log_probs[d_num] - dist.log_probs[d_den]))


def normal_approx(
    probs: BernoulliVector | Sequence[float] | np.ndarray,
) -> NormalApprox:
    """Normal distribution with the sum's mean and variance."""
    trials = as_bernoulli(probs)
    p = trials.p
    return NormalApprox(
        mu=float(p.sum()), sigma2=float(np.dot(p, 1.0 - p)), n=trials.n
    )

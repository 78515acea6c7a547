"""Tests for data models."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from logit_shift.errors import DomainError
from logit_shift.models import (
    Agreement,
    BernoulliVector,
    BoundReport,
    LogisticScore,
    NormalApprox,
    Pmf,
    PosteriorResult,
    ScoreSet,
    validated,
)


class TestBernoulliVector:
    def test_accepts_interior(self):
        v = BernoulliVector(p=[0.1, 0.5, 0.9])
        assert v.n == 3

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_rejects_outside_open_unit(self, bad):
        with pytest.raises(ValidationError):
            BernoulliVector(p=[0.3, bad])

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            BernoulliVector(p=[])

    def test_array_is_read_only(self):
        v = BernoulliVector(p=[0.2, 0.4])
        with pytest.raises(ValueError):
            v.p[0] = 0.3

    def test_validated_converts_to_domain_error(self):
        with pytest.raises(DomainError, match="BernoulliVector"):
            validated(BernoulliVector, p=[0.0])

    def test_certain_success_carried_by_log_odds(self):
        v = BernoulliVector.from_log_odds(np.array([40.0, 0.0, -40.0]))
        assert v.p[0] == 1.0
        assert 0.0 < v.q[0] < 1e-17
        assert v.q[2] == 1.0
        assert_allclose(v.p[1], 0.5)

    def test_rejects_zero_failure_probability(self):
        with pytest.raises(ValidationError):
            BernoulliVector(p=[1.0, 0.5], q=[0.0, 0.5])

    def test_rejects_inconsistent_pair(self):
        with pytest.raises(ValidationError):
            BernoulliVector(p=[0.3, 0.5], q=[0.6, 0.5])

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValidationError):
            BernoulliVector(p=[0.3, 0.5], q=[0.7])


class TestPmf:
    def test_from_probs_log_space(self):
        dist = Pmf.from_probs(np.array([0.25, 0.75, 0.0]))
        assert dist.n == 2
        assert_allclose(dist.log_probs[:2], np.log([0.25, 0.75]))
        assert dist.log_probs[2] == -np.inf

    def test_rejects_unnormalised(self):
        with pytest.raises(ValidationError):
            Pmf.from_probs(np.array([0.5, 0.6]))

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            Pmf.from_probs(np.array([1.1, -0.1]))

    def test_mean_and_variance(self):
        dist = Pmf.from_probs(np.array([0.16, 0.68, 0.16]))
        assert dist.mean() == pytest.approx(1.0)
        assert dist.variance() == pytest.approx(0.32)

    def test_log_concave(self):
        assert Pmf.from_probs(np.array([0.16, 0.68, 0.16])).is_log_concave()

    def test_not_log_concave(self):
        assert not Pmf.from_probs(np.array([0.45, 0.1, 0.45])).is_log_concave()


class TestNormalApprox:
    def test_requires_positive_variance(self):
        with pytest.raises(ValidationError):
            NormalApprox(mu=1.0, sigma2=0.0, n=2)

    def test_requires_mean_inside_support(self):
        with pytest.raises(ValidationError):
            NormalApprox(mu=3.0, sigma2=0.5, n=2)

    def test_ratio_gap(self):
        approx = NormalApprox(mu=5.0, sigma2=2.5, n=10)
        d = 4.0
        psi = approx.density(np.array([d - 1, d, d + 1]))
        assert approx.ratio_gap() == pytest.approx(psi[1] ** 2 / (psi[0] * psi[2]) - 1)
        assert approx.error_scale() == pytest.approx(0.4)

    def test_max_deviation_zero_for_matching_pmf(self):
        approx = NormalApprox(mu=1.0, sigma2=0.5, n=2)
        probs = approx.density(np.arange(3))
        dist = Pmf.from_probs(probs / probs.sum())
        assert approx.max_deviation(dist) < 0.1


class TestScoreSet:
    def test_groups_in_first_appearance_order(self):
        s = ScoreSet(scores=[0.1, 0.2, 0.3, 0.4], group=["b", "a", "b", "a"])
        assert s.groups() == ["b", "a"]

    def test_subset(self):
        s = ScoreSet(
            scores=[0.1, 0.2, 0.3, 0.4],
            ids=["w", "x", "y", "z"],
            group=["b", "a", "b", "a"],
        )
        sub = s.subset("a")
        assert_allclose(sub.scores, [0.2, 0.4])
        assert sub.ids == ["x", "z"]

    def test_unknown_group(self):
        s = ScoreSet(scores=[0.1, 0.2], group=["a", "a"])
        with pytest.raises(KeyError):
            s.subset("b")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            ScoreSet(scores=[0.1, 0.2], ids=["x", "x"])

    def test_label_length_mismatch(self):
        with pytest.raises(ValidationError):
            ScoreSet(scores=[0.1, 0.2], group=["a"])

    def test_total(self):
        assert ScoreSet(scores=[0.25, 0.5]).total() == pytest.approx(0.75)


class TestLogisticScore:
    def test_round_trips_scores(self):
        s = ScoreSet(scores=[0.1, 0.6, 0.95])
        model = LogisticScore.from_scores(s, intercept=-1.3)
        assert_allclose(model.probabilities(), s.scores, rtol=1e-12)


class TestPosteriorResult:
    def _fields(self, **overrides):
        fields = {
            "p_star": [0.25, 0.75],
            "xi": [0.3, 0.7],
            "phi": [1.0, 1.0],
            "target": 1,
        }
        return {**fields, **overrides}

    def test_accepts_consistent(self):
        post = PosteriorResult(**self._fields())
        assert post.centred is None
        assert post.tilt == 1.0

    def test_accepts_rounded_certainty(self):
        post = PosteriorResult(**self._fields(p_star=[1.0, 0.0]))
        assert post.p_star[0] == 1.0

    def test_rejects_sum_off_target(self):
        with pytest.raises(ValidationError, match="sum to"):
            PosteriorResult(**self._fields(p_star=[0.25, 0.5]))

    def test_rejects_score_above_one(self):
        with pytest.raises(ValidationError):
            PosteriorResult(**self._fields(p_star=[1.25, -0.25]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            PosteriorResult(**self._fields(phi=[float("inf"), 1.0]))
        with pytest.raises(ValidationError):
            PosteriorResult(**self._fields(p_star=[float("nan"), 1.0]))

    def test_rejects_non_positive_ratio(self):
        with pytest.raises(ValidationError):
            PosteriorResult(**self._fields(phi=[0.0, 1.0]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValidationError):
            PosteriorResult(**self._fields(xi=[0.3]))


class TestBoundReport:
    def test_chain_order(self):
        report = BoundReport(
            lower=0.5,
            upper=0.9,
            phi_min=0.6,
            phi_max=0.8,
            alpha=0.7,
            sigma2=10.0,
            gap=0.8,
            normal_gap=0.1,
            error_estimate=0.1,
        )
        assert report.chain() == (0.5, 0.6, 0.7, 0.8, 0.9)


class TestAgreement:
    def test_r2_optional(self):
        assert Agreement(rmse=0.0, max_abs_error=0.0).one_minus_r2 is None

"""Tests for the built-in property checks."""

from unittest.mock import patch

import numpy as np
import pytest

from logit_shift.errors import InstabilityError
from logit_shift.simulate import Distribution
from logit_shift.verify import CHECKS, instances, run_check, run_checks


class TestInstances:
    def test_cycles_distributions(self):
        cases = list(instances(max_n=10, seeds=12))
        assert [c.distribution for c in cases[:6]] == list(Distribution)
        for case in cases:
            assert 2 <= case.scores.size <= 10
            assert 0 < case.target < case.scores.size

    def test_deterministic(self):
        a = list(instances(8, 5, master_seed=3))
        b = list(instances(8, 5, master_seed=3))
        for x, y in zip(a, b):
            assert np.array_equal(x.scores, y.scores)
            assert x.target == y.target


class TestRunChecks:
    def test_default_run_passes(self):
        checks = run_checks()
        assert len(checks) == len(CHECKS)
        failed = [(c.name, c.worst, c.detail) for c in checks if not c.passed]
        assert failed == []

    def test_oracle_check_is_tight(self):
        checks = {c.name: c for c in run_checks(max_n=15, seeds=30, master_seed=1)}
        assert checks["oracle equivalence"].worst < 1e-10
        assert checks["bound chain"].passed

    @pytest.mark.parametrize("max_n, seeds", [(1, 5), (21, 5), (10, 0)])
    def test_rejects_bad_arguments(self, max_n, seeds):
        with pytest.raises(ValueError):
            run_checks(max_n=max_n, seeds=seeds)


class TestRunCheck:
    def test_failure_is_reported(self):
        cases = list(instances(6, 3))
        check = run_check("always off", lambda case, rng: 1.0, 1e-3, cases)
        assert not check.passed
        assert check.worst == 1.0
        assert check.cases == 3

    def test_error_is_reported(self):
        cases = list(instances(6, 3))

        def measure(case, rng):
            raise InstabilityError("boom")

        with patch("logit_shift.verify.logger") as log:
            check = run_check("unstable", measure, 1e-3, cases)
        assert not check.passed
        assert "InstabilityError" in check.detail
        assert log.warning.called

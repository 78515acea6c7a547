"""Monte Carlo comparison of the logit shift against the exact posterior.

Scores are drawn from six distributions, the observed total is set 20%
above or below its expectation, and each row reports how far the swung
scores sit from the exact posterior (RMSE and 1 - R^2).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from rich import box
from rich.console import Console
from rich.table import Table

from logit_shift.errors import SamplingError
from logit_shift.posterior import compare, exact_posterior
from logit_shift.shift import DEFAULT_TOLERANCE, solve_alpha

logger = logging.getLogger(__name__)

OFFSETS = (-0.2, 0.2)
_MAX_REDRAWS = 1000

Sampler = Callable[[np.random.Generator, int], np.ndarray]


class Distribution(str, Enum):
    UNIFORM = "Uniform"
    CLOSE_TO_ZERO = "CloseToZero"
    CLOSE_TO_ONE = "CloseToOne"
    EXTREMAL = "Extremal"
    CENTRAL = "Central"
    BIMODAL = "Bimodal"

    @property
    def label(self) -> str:
        return _SAMPLERS[self][0]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return _SAMPLERS[self][1](rng, n)


def _beta(a: float, b: float) -> Sampler:
    return lambda rng, n: rng.beta(a, b, size=n)


def _even_mixture(first: Sampler, second: Sampler) -> Sampler:
    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        pick = rng.random(n) < 0.5
        return np.where(pick, first(rng, n), second(rng, n))

    return draw


_SAMPLERS: dict[Distribution, tuple[str, Sampler]] = {
    Distribution.UNIFORM: (
        "Uniform(0, 1)",
        lambda rng, n: rng.uniform(0.0, 1.0, size=n),
    ),
    Distribution.CLOSE_TO_ZERO: ("Beta(0.1, 3)", _beta(0.1, 3.0)),
    Distribution.CLOSE_TO_ONE: ("Beta(3, 0.1)", _beta(3.0, 0.1)),
    Distribution.EXTREMAL: (
        "0.5*Beta(0.1, 3) + 0.5*Beta(3, 0.1)",
        _even_mixture(_beta(0.1, 3.0), _beta(3.0, 0.1)),
    ),
    Distribution.CENTRAL: ("Beta(3, 3)", _beta(3.0, 3.0)),
    Distribution.BIMODAL: (
        "0.5*Beta(3, 10) + 0.5*Beta(10, 3)",
        _even_mixture(_beta(3.0, 10.0), _beta(10.0, 3.0)),
    ),
}


def sample_scores(
    sampler: Distribution | Sampler, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n scores, redrawing any that land exactly on 0 or 1."""
    draw = sampler.sample if isinstance(sampler, Distribution) else sampler
    p = np.asarray(draw(rng, n), dtype=float)
    for _ in range(_MAX_REDRAWS):
        bad = ~((p > 0.0) & (p < 1.0))
        if not bad.any():
            return p
        logger.debug("Redrawing %d scores on the boundary", int(bad.sum()))
        p[bad] = draw(rng, int(bad.sum()))
    raise SamplingError(
        f"sampler kept producing boundary values after {_MAX_REDRAWS} redraws"
    )


def observed_total(p: np.ndarray, offset: float) -> int:
    """Expected total moved by ``offset``, rounded half away from zero."""
    return int(math.floor((1.0 + offset) * float(p.sum()) + 0.5))


class SimSetting(BaseModel):
    """One distribution/offset cell of the study."""

    model_config = ConfigDict(frozen=True)

    name: Distribution
    offset: float
    n: int = Field(default=1000, ge=2)
    seed: int = Field(default=0, ge=0)
    replications: int = Field(default=1, ge=1)

    @field_validator("offset")
    @classmethod
    def _known_offset(cls, v: float) -> float:
        if not any(math.isclose(v, o) for o in OFFSETS):
            raise ValueError(f"offset must be one of {OFFSETS}, got {v!r}")
        return v


class SimRow(BaseModel):
    """Result of one setting; metrics are medians over replications."""

    model_config = ConfigDict(populate_by_name=True)

    setting: Distribution
    distribution: str
    offset: float
    target: int | None = Field(default=None, alias="D")
    rmse: float | None = None
    one_minus_r2: float | None = None
    max_abs_error: float | None = None
    sigma2: float | None = None
    feasible: bool = True
    seed: int
    n: int
    replications: int = 1


class SimReport(BaseModel):
    """All rows of one study run."""

    rows: list[SimRow] = Field(default_factory=list)
    seed: int
    n: int
    replications: int = 1

    def row(self, setting: Distribution, offset: float) -> SimRow:
        for r in self.rows:
            if r.setting == setting and math.isclose(r.offset, offset):
                return r
        raise KeyError((setting, offset))

    def feasible_rows(self) -> list[SimRow]:
        return [r for r in self.rows if r.feasible]

    def infeasible_rows(self) -> list[SimRow]:
        return [r for r in self.rows if not r.feasible]


def _median(values: Iterable[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.median(present)) if present else None


def run_setting(
    setting: SimSetting,
    sampler: Sampler | None = None,
    tol: float = DEFAULT_TOLERANCE,
) -> SimRow:
    """Run one cell; an interior target is required, otherwise the row is infeasible.

    ``sampler`` replaces the setting's distribution (the row keeps its name).
    """
    draw: Distribution | Sampler = sampler or setting.name
    targets: list[int] = []
    metrics: list[tuple[float, float | None, float, float]] = []

    for k in range(setting.replications):
        rng = np.random.default_rng([setting.seed, k])
        p = sample_scores(draw, setting.n, rng)
        d = observed_total(p, setting.offset)
        targets.append(d)
        if not 0 < d < setting.n:
            logger.info(
                "%s %+.0f%%: target %d outside 1..%d, row infeasible",
                setting.name.value,
                100 * setting.offset,
                d,
                setting.n - 1,
            )
            break
        shift = solve_alpha(p, d, tol=tol)
        post = exact_posterior(p, d, tol=tol)
        agreement = compare(shift.recalibrated, post.p_star)
        sigma2 = float(np.dot(p, 1.0 - p))
        metrics.append(
            (agreement.rmse, agreement.one_minus_r2, agreement.max_abs_error, sigma2)
        )

    row = SimRow(
        setting=setting.name,
        distribution=setting.name.label,
        offset=setting.offset,
        target=targets[0],
        seed=setting.seed,
        n=setting.n,
        replications=setting.replications,
    )
    if len(metrics) < setting.replications:
        return row.model_copy(update={"feasible": False})
    rmse, r2, max_err, sigma2 = zip(*metrics)
    return row.model_copy(
        update={
            "rmse": _median(rmse),
            "one_minus_r2": _median(r2),
            "max_abs_error": _median(max_err),
            "sigma2": _median(sigma2),
        }
    )


def table_settings(n: int, seed: int, replications: int = 1) -> list[SimSetting]:
    """The twelve distribution/offset cells, each with its own derived seed."""
    cells = [(dist, offset) for dist in Distribution for offset in OFFSETS]
    seeds = np.random.SeedSequence(seed).generate_state(len(cells))
    return [
        SimSetting(
            name=dist, offset=offset, n=n, seed=int(s), replications=replications
        )
        for (dist, offset), s in zip(cells, seeds)
    ]


def run_table(
    n: int,
    seed: int,
    replications: int = 1,
    workers: int | None = None,
    tol: float = DEFAULT_TOLERANCE,
) -> SimReport:
    """Run all twelve rows. Row seeds do not depend on ``workers``."""
    settings = table_settings(n, seed, replications)

    def one(setting: SimSetting) -> SimRow:
        return run_setting(setting, tol=tol)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, settings))
    else:
        rows = [one(s) for s in settings]
    logger.info("Simulated %d rows at n=%d", len(rows), n)
    return SimReport(rows=rows, seed=seed, n=n, replications=replications)


# ---------------------------------------------------------------------------
# Error scaling
# ---------------------------------------------------------------------------


class ScalingPoint(BaseModel):
    n: int
    sigma2: float
    max_abs_error: float


def scaling_study(
    sizes: Iterable[int] = (100, 400, 1600),
    seeds: int = 10,
    setting: Distribution = Distribution.UNIFORM,
    offset: float = 0.2,
    master_seed: int = 0,
    tol: float = DEFAULT_TOLERANCE,
) -> list[ScalingPoint]:
    """Median worst-unit error and median sigma^2 at each sample size."""
    sizes = list(sizes)
    row_seeds = np.random.SeedSequence(master_seed).generate_state(len(sizes))
    points: list[ScalingPoint] = []
    for n, s in zip(sizes, row_seeds):
        row = run_setting(
            SimSetting(
                name=setting, offset=offset, n=n, seed=int(s), replications=seeds
            ),
            tol=tol,
        )
        if not row.feasible or row.max_abs_error is None or row.sigma2 is None:
            raise ValueError(f"{setting.value} {offset:+.0%} is infeasible at n={n}")
        points.append(
            ScalingPoint(n=n, sigma2=row.sigma2, max_abs_error=row.max_abs_error)
        )
    return points


def scaling_slope(points: list[ScalingPoint]) -> float:
    """Slope of log(max error) against log(sigma^2)."""
    x = np.log([pt.sigma2 for pt in points])
    y = np.log([pt.max_abs_error for pt in points])
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def write_report(report: SimReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2, by_alias=True) + "\n")
    logger.debug("Wrote simulation report to %s", path)


def load_report(path: Path) -> SimReport:
    return SimReport.model_validate_json(path.read_text())


def build_table(report: SimReport, title: str | None = None) -> Table:
    """Table with one line per setting and offset."""
    table = Table(
        title=title,
        title_style="bold cyan",
        border_style="dim",
        box=box.SIMPLE_HEAD,
        padding=(0, 1),
    )
    table.add_column("Setting", style="bold")
    table.add_column("Sampling Distribution")
    table.add_column("Observed D", justify="right")
    table.add_column("RMSE", justify="right")
    table.add_column("1 - R²", justify="right")

    for row in report.rows:
        observed = f"{row.offset:+.0%}"
        if row.target is not None:
            observed += f" ({row.target})"
        rmse = f"{row.rmse:.5f}" if row.rmse is not None else "—"
        r2 = f"{row.one_minus_r2:.2e}" if row.one_minus_r2 is not None else "—"
        table.add_row(row.setting.value, row.distribution, observed, rmse, r2)
    return table


def write_table(report: SimReport, path: Path) -> None:
    """Plain-text rendering of the table."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        plain = Console(file=fh, width=100, no_color=True, highlight=False)
        render_table(report, plain)


def render_table(report: SimReport, console: Console) -> None:
    console.print(build_table(report, title=f"n={report.n}, seed={report.seed}"))

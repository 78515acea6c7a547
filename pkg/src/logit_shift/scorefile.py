"""Delimited score files: parsing, recalibration runs and output."""

from __future__ import annotations

import logging
import math
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from logit_shift.errors import MissingTargetError, ParseError, TargetError
from logit_shift.models import ScoreSet
from logit_shift.pbd import DEFAULT_MAX_N
from logit_shift.posterior import (
    BOUND_SLACK,
    bound_report,
    compare,
    error_estimate,
    exact_posterior,
)
from logit_shift.shift import DEFAULT_TOLERANCE, recalibrate_groups, solve_alpha

logger = logging.getLogger(__name__)

SCORE_COLUMN = "score"
ID_COLUMN = "id"
GROUP_COLUMN = "group"
SHIFT_COLUMN = "recalibrated"
POSTERIOR_COLUMN = "posterior"

# Label of the single pool used when no per-group targets are given
ALL_UNITS = "*"

# Data rows start on line 2, after the header
_FIRST_DATA_LINE = 2


class Method(str, Enum):
    LOGIT_SHIFT = "logit-shift"
    EXACT_POSTERIOR = "exact-posterior"
    BOTH = "both"

    @property
    def wants_shift(self) -> bool:
        return self in (Method.LOGIT_SHIFT, Method.BOTH)

    @property
    def wants_posterior(self) -> bool:
        return self in (Method.EXACT_POSTERIOR, Method.BOTH)


def delimiter_for(path: Path) -> str:
    return "\t" if path.suffix.lower() in (".tsv", ".tab") else ","


class ScoreFile(BaseModel):
    """A parsed score file. ``frame`` keeps every input cell as text."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    path: Path
    frame: pd.DataFrame
    scores: ScoreSet
    delimiter: str = ","
    clamped: int = 0


class RunConfig(BaseModel):
    """What one ``recalibrate`` invocation should do."""

    model_config = ConfigDict(frozen=True)

    method: Method = Method.LOGIT_SHIFT
    total: float | None = None
    targets: dict[str, float] | None = None
    tolerance: float = Field(default=DEFAULT_TOLERANCE, gt=0.0)
    clamp_epsilon: float | None = Field(default=None, gt=0.0, lt=0.5)
    output: Path | None = None
    diagnostics: Path | None = None

    @model_validator(mode="after")
    def _one_target_source(self) -> RunConfig:
        if (self.total is None) == (self.targets is None):
            raise ValueError("give exactly one of a total or per-group targets")
        return self


class GroupDiagnostics(BaseModel):
    """One line of the diagnostics file. Unset fields are written blank."""

    group: str
    n: int
    target: float
    alpha: float
    iterations: int
    residual: float
    lower: float | None = None
    upper: float | None = None
    phi_min: float | None = None
    phi_max: float | None = None
    gap: float | None = None
    sigma2: float | None = None
    error_estimate: float | None = None
    rmse: float | None = None
    one_minus_r2: float | None = None


class RecalibrationRun(BaseModel):
    """New output columns (aligned with the input rows) and per-pool diagnostics."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    columns: dict[str, np.ndarray] = Field(default_factory=dict)
    diagnostics: list[GroupDiagnostics] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _read_table(path: Path, what: str) -> tuple[pd.DataFrame, str]:
    sep = delimiter_for(path)
    try:
        frame = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise ParseError(f"{what} file {path} is empty", line=1) from exc
    except pd.errors.ParserError as exc:
        raise ParseError(f"cannot parse {what} file {path}: {exc}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {what} file {path}: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if len(set(frame.columns)) != len(frame.columns):
        raise ParseError(f"duplicate column names in {path}", line=1)
    return frame, sep


def _parse_number(text: str, line: int, column: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise ParseError(f"{column} {text!r} is not a number", line=line) from None
    if not math.isfinite(value):
        raise ParseError(f"{column} {text!r} is not finite", line=line)
    return value


def read_scores(path: Path, clamp_epsilon: float | None = None) -> ScoreFile:
    """Parse a score file.

    Scores must lie strictly inside (0, 1).  With ``clamp_epsilon`` set,
    scores in [0, eps) or (1 - eps, 1] are moved to the nearest of eps and
    1 - eps instead of being rejected.
    """
    path = Path(path)
    frame, sep = _read_table(path, "score")
    if SCORE_COLUMN not in frame.columns:
        raise ParseError(f"missing required column {SCORE_COLUMN!r}", line=1)

    values = np.empty(len(frame))
    clamped = 0
    for row, text in enumerate(frame[SCORE_COLUMN]):
        line = row + _FIRST_DATA_LINE
        value = _parse_number(text, line, SCORE_COLUMN)
        if clamp_epsilon is not None and 0.0 <= value <= 1.0:
            fixed = min(max(value, clamp_epsilon), 1.0 - clamp_epsilon)
            if fixed != value:
                clamped += 1
                value = fixed
        if not 0.0 < value < 1.0:
            raise ParseError(f"score {text!r} outside (0, 1)", line=line)
        values[row] = value
    if clamped:
        logger.warning(
            "Clamped %d score(s) into [%g, 1 - %g]",
            clamped,
            clamp_epsilon,
            clamp_epsilon,
        )

    ids = None
    if ID_COLUMN in frame.columns:
        ids = list(frame[ID_COLUMN])
        seen: dict[str, int] = {}
        for row, unit in enumerate(ids):
            if unit in seen:
                raise ParseError(
                    f"id {unit!r} already used on line {seen[unit]}",
                    line=row + _FIRST_DATA_LINE,
                )
            seen[unit] = row + _FIRST_DATA_LINE

    group = list(frame[GROUP_COLUMN]) if GROUP_COLUMN in frame.columns else None
    _check_pool_sizes(frame, group)

    logger.info("Read %d scores from %s", len(frame), path)
    return ScoreFile(
        path=path,
        frame=frame,
        scores=ScoreSet(scores=values, ids=ids, group=group),
        delimiter=sep,
        clamped=clamped,
    )


def _check_pool_sizes(frame: pd.DataFrame, group: list[str] | None) -> None:
    if len(frame) < 2:
        raise ParseError("a score file needs at least 2 rows", line=_FIRST_DATA_LINE)
    if group is None:
        return
    counts = pd.Series(group).value_counts(sort=False)
    for label, count in counts.items():
        if count < 2:
            line = group.index(label) + _FIRST_DATA_LINE
            raise ParseError(
                f"group {label!r} has a single row; need at least 2", line=line
            )


def read_targets(path: Path) -> dict[str, float]:
    """Parse a two-column ``group,total`` file."""
    path = Path(path)
    frame, _ = _read_table(path, "targets")
    missing = [c for c in (GROUP_COLUMN, "total") if c not in frame.columns]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", line=1)

    targets: dict[str, float] = {}
    for row, (label, text) in enumerate(zip(frame[GROUP_COLUMN], frame["total"])):
        line = row + _FIRST_DATA_LINE
        if label in targets:
            raise ParseError(f"group {label!r} listed twice", line=line)
        targets[label] = _parse_number(text, line, "total")
    return targets


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _integer_total(value: float, label: str) -> int:
    if not float(value).is_integer():
        raise TargetError(
            f"total {value!r} is not a whole count; the exact posterior needs one",
            group=None if label == ALL_UNITS else label,
        )
    return int(value)


def recalibrate_file(
    score_file: ScoreFile,
    config: RunConfig,
    workers: int | None = None,
    max_n: int = DEFAULT_MAX_N,
    slack: float = BOUND_SLACK,
) -> RecalibrationRun:
    """Recalibrate every pool of ``score_file`` as ``config`` asks.

    A single total treats the whole file as one pool even when it has a
    group column; per-group targets give each group its own swing.
    """
    scores = score_file.scores
    if config.targets is not None:
        if scores.group is None:
            raise MissingTargetError(
                f"per-group targets need a {GROUP_COLUMN!r} column in {score_file.path}"
            )
        shifts = recalibrate_groups(scores, config.targets, tol=config.tolerance)
        pools = [(label, scores.indices(label)) for label in scores.groups()]
        totals = {label: shifts[label].target for label in shifts}
    else:
        shifts = {ALL_UNITS: solve_alpha(scores, config.total, tol=config.tolerance)}
        pools = [(ALL_UNITS, np.arange(scores.n))]
        totals = {ALL_UNITS: float(config.total)}

    run = RecalibrationRun()
    if config.method.wants_shift:
        run.columns[SHIFT_COLUMN] = np.empty(scores.n)
    if config.method.wants_posterior:
        run.columns[POSTERIOR_COLUMN] = np.empty(scores.n)

    for label, idx in pools:
        p = scores.scores[idx]
        shift = shifts[label]
        row = GroupDiagnostics(
            group=label,
            n=idx.size,
            target=totals[label],
            alpha=shift.alpha,
            iterations=shift.iterations,
            residual=shift.residual,
            sigma2=float(np.dot(p, 1.0 - p)),
            error_estimate=error_estimate(p),
        )
        if config.method.wants_shift:
            run.columns[SHIFT_COLUMN][idx] = shift.recalibrated

        if config.method.wants_posterior:
            d = _integer_total(totals[label], label)
            try:
                post = exact_posterior(
                    p, d, tol=config.tolerance, max_n=max_n, workers=workers
                )
            except TargetError as exc:
                if label == ALL_UNITS:
                    raise
                raise TargetError(str(exc), group=label) from exc
            run.columns[POSTERIOR_COLUMN][idx] = post.p_star
            report = bound_report(p, d, shift, post, slack=slack, max_n=max_n)
            row = row.model_copy(
                update=report.model_dump(
                    include={"lower", "upper", "phi_min", "phi_max", "gap"}
                )
            )
            if config.method is Method.BOTH:
                agreement = compare(shift.recalibrated, post.p_star)
                row = row.model_copy(
                    update={
                        "rmse": agreement.rmse,
                        "one_minus_r2": agreement.one_minus_r2,
                    }
                )
        run.diagnostics.append(row)
        logger.info("Pool %s: n=%d alpha=%.10g", label, idx.size, shift.alpha)
    return run


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def write_scores(
    score_file: ScoreFile,
    columns: dict[str, np.ndarray],
    path: Path,
    float_format: str = "%.10g",
) -> None:
    """Write the input columns unchanged, followed by the new ones."""
    out = score_file.frame.copy()
    for name, values in columns.items():
        if name in out.columns:
            logger.warning("Overwriting existing column %r", name)
        out[name] = [float_format % v for v in values]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(path, sep=delimiter_for(path), index=False, lineterminator="\n")
    logger.debug("Wrote %d rows to %s", len(out), path)


def write_diagnostics(
    diagnostics: list[GroupDiagnostics],
    path: Path,
    float_format: str = "%.10g",
) -> None:
    frame = pd.DataFrame(
        [d.model_dump() for d in diagnostics],
        columns=list(GroupDiagnostics.model_fields),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        sep=delimiter_for(path),
        index=False,
        float_format=float_format,
        na_rep="",
        lineterminator="\n",
    )

"""CLI entry point for score recalibration."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table
from rich.text import Text

from logit_shift.config import Settings
from logit_shift.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, RecalibrationError
from logit_shift.models import validated
from logit_shift.scorefile import (
    GroupDiagnostics,
    Method,
    RunConfig,
    read_scores,
    read_targets,
    recalibrate_file,
    write_diagnostics,
    write_scores,
)
from logit_shift.simulate import render_table, run_table, write_report, write_table
from logit_shift.verify import DEFAULT_MAX_N, DEFAULT_SEEDS, PropertyCheck, run_checks

console = Console()
err_console = Console(stderr=True)

logger = logging.getLogger(__name__)


class RecalibrationGroup(click.Group):
    """Click group that turns package errors into the documented exit codes."""

    def main(self, *args, **kwargs):  # type: ignore[override]
        kwargs["standalone_mode"] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.Abort:
            err_console.print("[red]Aborted.[/red]")
            sys.exit(EXIT_USAGE)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_USAGE)
        except RecalibrationError as exc:
            err_console.print(f"[red]Error:[/red] {exc}")
            sys.exit(exc.exit_code)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)-8s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def _build_settings(verbose: bool, **overrides: object) -> Settings:
    """Build Settings from the environment, then apply CLI options that were given."""
    _setup_logging(verbose)
    given = {k: v for k, v in overrides.items() if v is not None}
    try:
        return Settings(**given)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors()
        )
        raise click.UsageError(details) from exc


def _render_diagnostics(rows: list[GroupDiagnostics]) -> None:
    table = Table(title="Recalibration", title_style="bold cyan", border_style="dim")
    table.add_column("Group", style="bold")
    table.add_column("n", justify="right")
    table.add_column("Target", justify="right")
    table.add_column("alpha", justify="right")
    table.add_column("Bounds", justify="center")
    table.add_column("RMSE", justify="right")

    for row in rows:
        bounds = "—"
        if row.lower is not None and row.upper is not None:
            bounds = f"[{row.lower:.6g}, {row.upper:.6g}]"
        rmse = f"{row.rmse:.3g}" if row.rmse is not None else "—"
        table.add_row(
            row.group,
            str(row.n),
            f"{row.target:.10g}",
            f"{row.alpha:.8g}",
            bounds,
            rmse,
        )

    console.print()
    console.print(table)
    console.print()


def _render_checks(checks: list[PropertyCheck]) -> None:
    table = Table(title="Property checks", title_style="bold cyan", border_style="dim")
    table.add_column("Check", style="bold")
    table.add_column("Cases", justify="right")
    table.add_column("Worst", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Result", justify="center")

    for check in checks:
        if check.passed:
            result = Text("pass", style="green")
        else:
            result = Text("FAIL", style="bold red")
        table.add_row(
            check.name,
            str(check.cases),
            f"{check.worst:.2e}",
            f"{check.tolerance:.0e}",
            result,
        )

    console.print()
    console.print(table)
    failed = [c for c in checks if not c.passed]
    if failed:
        for check in failed:
            console.print(f"  [red]{check.name}[/red]: {check.detail}")
    else:
        console.print(f"  [bold green]All {len(checks)} checks passed[/bold green]")
    console.print()


@click.group(cls=RecalibrationGroup)
@click.version_option(package_name="logit-shift")
def cli() -> None:
    """Recalibrate probability scores to an observed total."""


@cli.command()
@click.option(
    "--input",
    "input_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Score file (CSV, or TSV by extension) with a 'score' column.",
)
@click.option("--total", type=float, default=None, help="Observed total for all units.")
@click.option(
    "--targets",
    "targets_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="File of per-group totals with columns group,total.",
)
@click.option(
    "--method",
    type=click.Choice([m.value for m in Method]),
    default=Method.LOGIT_SHIFT.value,
    show_default=True,
    help="Logit shift, exact posterior, or both.",
)
@click.option(
    "--tolerance", type=float, default=None, help="Solver tolerance (default: 1e-10)."
)
@click.option(
    "--clamp-epsilon",
    type=float,
    default=None,
    help="Clamp scores of 0 or 1 into [E, 1-E] instead of rejecting them.",
)
@click.option(
    "--threads", type=int, default=None, help="Worker threads (default: all cores)."
)
@click.option(
    "--output",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Where to write the scores with the new columns.",
)
@click.option(
    "--diagnostics",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Optional per-group diagnostics file.",
)
@click.option("--verbose", "-v", is_flag=True, default=False, help="Verbose logging.")
def recalibrate(
    input_path: Path,
    total: float | None,
    targets_path: Path | None,
    method: str,
    tolerance: float | None,
    clamp_epsilon: float | None,
    threads: int | None,
    output: Path,
    diagnostics: Path | None,
    verbose: bool,
) -> None:
    """Swing every score by one common odds factor so the scores sum to the total."""
    if (total is None) == (targets_path is None):
        raise click.UsageError("give exactly one of --total and --targets")
    settings = _build_settings(
        verbose, tolerance=tolerance, clamp_epsilon=clamp_epsilon, threads=threads
    )
    targets = read_targets(targets_path) if targets_path is not None else None
    config = validated(
        RunConfig,
        method=Method(method),
        total=total,
        targets=targets,
        tolerance=settings.tolerance,
        clamp_epsilon=settings.clamp_epsilon,
        output=output,
        diagnostics=diagnostics,
    )

    score_file = read_scores(input_path, clamp_epsilon=config.clamp_epsilon)
    with console.status("[bold green]Recalibrating..."):
        run = recalibrate_file(
            score_file,
            config,
            workers=settings.resolved_threads(),
            max_n=settings.max_pmf_size,
            slack=settings.bound_slack,
        )

    fmt = settings.float_format()
    write_scores(score_file, run.columns, output, float_format=fmt)
    if diagnostics is not None:
        write_diagnostics(run.diagnostics, diagnostics, float_format=fmt)
    if verbose:
        _render_diagnostics(run.diagnostics)
    console.print(f"  Wrote [bold]{score_file.scores.n}[/bold] rows to {output}")


@cli.command()
@click.option(
    "--n",
    "n",
    type=click.IntRange(min=2),
    default=None,
    help="Units per draw (default: 1000).",
)
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed.")
@click.option(
    "--replications",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Independent draws per row; rows report medians.",
)
@click.option(
    "--threads", type=int, default=None, help="Worker threads (default: all cores)."
)
@click.option(
    "--output",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="JSON report path.",
)
@click.option(
    "--table",
    "table_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Also write the table as aligned text.",
)
@click.option("--verbose", "-v", is_flag=True, default=False, help="Verbose logging.")
def simulate(
    n: int | None,
    seed: int | None,
    replications: int,
    threads: int | None,
    output: Path,
    table_path: Path | None,
    verbose: bool,
) -> None:
    """Compare the logit shift with the exact posterior over twelve settings."""
    settings = _build_settings(verbose, sim_n=n, seed=seed, threads=threads)

    with console.status(f"[bold green]Simulating n={settings.sim_n}..."):
        report = run_table(
            settings.sim_n,
            settings.seed,
            replications=replications,
            workers=settings.resolved_threads(),
            tol=settings.tolerance,
        )

    write_report(report, output)
    if table_path is not None:
        write_table(report, table_path)
    console.print()
    render_table(report, console)
    console.print()


@cli.command()
@click.option(
    "--max-n",
    type=click.IntRange(2, 20),
    default=DEFAULT_MAX_N,
    show_default=True,
    help="Largest number of units per instance.",
)
@click.option(
    "--seeds",
    type=click.IntRange(min=1),
    default=DEFAULT_SEEDS,
    show_default=True,
    help="Random instances per check.",
)
@click.option("--verbose", "-v", is_flag=True, default=False, help="Verbose logging.")
def verify(max_n: int, seeds: int, verbose: bool) -> int:
    """Run the built-in property checks on small random instances."""
    settings = _build_settings(verbose)
    if max_n > settings.enumeration_cap:
        raise click.BadParameter(
            f"enumeration is capped at {settings.enumeration_cap} units",
            param_hint="--max-n",
        )
    with console.status("[bold green]Checking..."):
        checks = run_checks(max_n=max_n, seeds=seeds, master_seed=settings.seed)
    _render_checks(checks)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


def main() -> None:
    """Entry point wrapper."""
    cli()


if __name__ == "__main__":
    main()

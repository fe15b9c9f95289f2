"""Command line: ``fronttrack run`` and ``fronttrack batch``."""

from __future__ import annotations

import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from .errors import FrontTrackError
from .runner import run, write_timeseries
from .scenario import load_scenario_file


def run_one(path: str, out: str, strict_compat: bool = False, seed: int | None = None) -> tuple[str, int, str]:
    """Load, run and write one scenario; returns ``(path, exit_code, message)``.

    ``seed`` is recorded in the metadata only: runs are deterministic.
    """
    stem = Path(path).stem
    try:
        sc = load_scenario_file(path, strict_compat)
    except FrontTrackError as exc:
        return path, exc.exit_code, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        return path, 2, f"cannot read scenario: {exc}"
    record = run(sc)
    if seed is not None:
        record.scenario["seed"] = seed
    csv_path, _ = write_timeseries(record, Path(out) / f"{stem}.csv")
    msg = f"{record.status}: {record.steps} steps to t={record.final_time:.6g}, wrote {csv_path}"
    if record.flags:
        msg += f" ({record.flags[-1]['message']})"
    return path, record.exit_code, msg


@click.group()
@click.version_option(package_name="artifact", prog_name="fronttrack")
def cli():
    """Front tracking runs from TOML scenario files."""


@cli.command("run")
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--out", "out", default=".", show_default=True, type=click.Path(file_okay=False),
              help="Directory for the CSV series and its JSON metadata.")
@click.option("--strict-compat", is_flag=True, help="Refuse initial data with corner residual above 1e-6.")
@click.option("--seed", type=int, default=None, help="Seed recorded for randomized property suites.")
def run_cmd(scenario, out, strict_compat, seed):
    """Run one SCENARIO file."""
    _, code, msg = run_one(scenario, out, strict_compat, seed)
    click.echo(msg, err=code != 0)
    sys.exit(code)


@cli.command("batch")
@click.argument("scenarios", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--strict-compat", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None, help="Worker processes (default: CPU count).")
def batch_cmd(scenarios, out, strict_compat, seed, jobs):
    """Run several SCENARIOS concurrently; exit with the largest exit code."""
    worst = 0
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_one, s, out, strict_compat, seed) for s in scenarios]
        for fut in futures:
            path, code, msg = fut.result()
            click.echo(f"{path}: {msg}")
            worst = max(worst, code)
    sys.exit(worst)


def main(argv=None):
    cli.main(args=argv, prog_name="fronttrack")


if __name__ == "__main__":
    main()

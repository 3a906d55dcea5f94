import math
import shutil
from pathlib import Path

import click

from hetnetcache.config import CONFIG_DIR, BUNDLED_CONFIG_DIR, ConfigError, default_config_text, load_environment

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4

DEFAULT_GAMMAS_DB = (0.0, 5.0, 10.0, 15.0)


def _fail(message: str, code: int):
    click.echo(message, err=True)
    raise SystemExit(code)


def _run(action):
    """Call `action`, mapping library errors onto the documented exit codes."""
    from hetnetcache.quadrature import QuadratureError
    try:
        return action()
    except ConfigError as e:
        _fail(f"Invalid configuration ({e.key}): {e}", EXIT_USAGE)
    except FileNotFoundError as e:
        _fail(str(e), EXIT_USAGE)
    except QuadratureError as e:
        _fail(f"Numeric failure: {e}", EXIT_NUMERIC)
    except ValueError as e:
        _fail(f"Invalid argument: {e}", EXIT_USAGE)


def _setup(config_path, seed, out_dir):
    from hetnetcache.config import default_out_dir, default_seed, load_system_config
    cfg = load_system_config(config_path)
    seed = seed if seed is not None else default_seed(cfg.numeric.seed)
    out_dir = Path(out_dir) if out_dir else default_out_dir()
    return cfg, seed, out_dir


def _parse_grid(values, grid_range, name, integer=False):
    """Grid from a comma-separated list or an inclusive START STOP STEP range, sorted ascending."""
    if values:
        try:
            grid = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(name, f"not a list of numbers: {values!r}")
    elif grid_range:
        start, stop, step = grid_range
        if step <= 0 or stop < start:
            raise ConfigError(name, "range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = [round(start + k * step, 12) for k in range(count)]
    else:
        grid = []
    if not grid:
        raise ConfigError(name, "empty range")
    if integer:
        if any(int(v) != v for v in grid):
            raise ConfigError(name, "cache sizes must be integers")
        grid = [int(v) for v in grid]
    return sorted(grid)


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                             help="System config file (key=value, boundary units).")
seed_option = click.option("--seed", type=int, default=None,
                           help="Root seed; defaults to $HETNETCACHE_SEED, then numeric.seed.")
out_dir_option = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                              help="Output directory; defaults to $HETNETCACHE_OUT_DIR or ./results.")
workers_option = click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True,
                              help="Worker threads for grid points and realization chunks.")


@click.group(invoke_without_command=True)
@click.option("--emit-default-config", is_flag=True, help="Print the default system config and exit.")
@click.pass_context
def main(ctx, emit_default_config):
    """
    hetnetcache: coverage, throughput and joint cache/spectrum optimization for
    cache-enabled mmWave HetNets with integrated access and backhaul.
    """
    load_environment()
    if emit_default_config:
        click.echo(default_config_text(), nl=False)
        ctx.exit(EXIT_OK)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command("init")
def cli_init():
    """
    Initialize the user configuration directory by copying the default files:
      - env.example (renamed to .env)
      - system_config.txt
    Existing files are left untouched.
    """
    click.echo("Initializing hetnetcache configuration")
    CONFIG_DIR.mkdir(parents=True, exist_ok=True)

    files_to_copy = [
        {"src_file_name": "env.example", "dest_file_name": ".env"},
        {"src_file_name": "system_config.txt", "dest_file_name": "system_config.txt"},
    ]
    for file in files_to_copy:
        src_file = BUNDLED_CONFIG_DIR / file["src_file_name"]
        dest_file = CONFIG_DIR / file["dest_file_name"]
        if not dest_file.exists():
            shutil.copy2(src_file, dest_file)
            click.echo(f"Copied {src_file} to {dest_file}.")
        else:
            click.echo(f"{dest_file} already exists; skipping.")


@main.command("analyze")
@config_option
@click.option("--gamma", "gammas", type=float, multiple=True, help="SINR threshold in dB (repeatable).")
@click.option("--cache", "C", type=click.IntRange(min=0), default=0, show_default=True, help="SBS cache size C.")
@click.option("--eta", type=click.FloatRange(0.0, 1.0), default=0.9, show_default=True, help="Access share.")
@seed_option
@out_dir_option
@workers_option
@click.option("--trace", is_flag=True, help="Also dump coverage integrand samples.")
def cli_analyze(config_path, gammas, C, eta, seed, out_dir, workers, trace):
    """
    Coverage of the SBS, MBS and backhaul links and the APT at (eta, C) per threshold.
    """
    from hetnetcache.flows import analyze_flow, run_with_workers

    def action():
        cfg, run_seed, target = _setup(config_path, seed, out_dir)
        grid = list(gammas) if gammas else list(DEFAULT_GAMMAS_DB)
        return run_with_workers(analyze_flow, workers, cfg=cfg, gammas_db=grid, C=C, eta=eta,
                                out_dir=target, seed=run_seed, trace=trace), target

    rows, target = _run(action)
    click.echo(f"Wrote {len(rows)} rows to {target / 'analyze.csv'}")


@main.command("sweep")
@config_option
@click.option("--axis", type=click.Choice(["C", "eta", "gamma0", "gamma_p", "omega_ca"]), required=True)
@click.option("--values", default=None, help="Comma-separated axis values (gamma0 in dB).")
@click.option("--range", "grid_range", type=float, nargs=3, default=None, help="START STOP STEP, inclusive.")
@click.option("--axis2", type=click.Choice(["C", "eta", "gamma0", "gamma_p", "omega_ca"]), default=None)
@click.option("--values2", default=None, help="Comma-separated values of the second axis.")
@click.option("--range2", "grid_range2", type=float, nargs=3, default=None, help="START STOP STEP of axis2.")
@click.option("--mode", type=click.Choice(["apt", "optimize"]), default="apt", show_default=True)
@click.option("--cache", "C", type=click.IntRange(min=0), default=0, show_default=True,
              help="Cache size when C is not swept.")
@click.option("--eta", type=click.FloatRange(0.0, 1.0), default=0.9, show_default=True,
              help="Access share when eta is not swept.")
@seed_option
@out_dir_option
@workers_option
def cli_sweep(config_path, axis, values, grid_range, axis2, values2, grid_range2, mode, C, eta, seed, out_dir,
              workers):
    """
    Evaluate APT, or every solver's optimum, along one axis or a two-axis grid.
    """
    from hetnetcache.flows import run_with_workers, sweep_flow

    def action():
        cfg, run_seed, target = _setup(config_path, seed, out_dir)
        grid = _parse_grid(values, grid_range, "range", integer=(axis == "C"))
        grid2 = _parse_grid(values2, grid_range2, "range2", integer=(axis2 == "C")) if axis2 else None
        return run_with_workers(sweep_flow, workers, cfg=cfg, axis=axis, values=grid, out_dir=target,
                                seed=run_seed, C=C, eta=eta, axis2=axis2, values2=grid2, mode=mode,
                                workers=workers), target

    rows, target = _run(action)
    click.echo(f"Wrote {len(rows)} sweep rows to {target}")


@main.command("optimize")
@config_option
@click.option("--algorithm", type=click.Choice(["jcspa", "baselines", "all"]), default="all", show_default=True)
@click.option("--epsilon", type=float, default=1e-5, show_default=True, help="Relative BCD stopping tolerance.")
@click.option("--iter-max", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--restarts", type=click.IntRange(min=0), default=3, show_default=True,
              help="Random starting cache sizes in addition to C=0.")
@seed_option
@out_dir_option
@workers_option
def cli_optimize(config_path, algorithm, epsilon, iter_max, restarts, seed, out_dir, workers):
    """
    Maximize APT over cache size, SBS power and spectrum partition.
    """
    from hetnetcache.flows import optimize_flow, run_with_workers

    def action():
        cfg, run_seed, target = _setup(config_path, seed, out_dir)
        return run_with_workers(optimize_flow, workers, cfg=cfg, algorithm=algorithm, out_dir=target,
                                seed=run_seed, workers=workers, epsilon=epsilon, iter_max=iter_max,
                                restarts=restarts)

    results = _run(action)
    for result in results:
        click.echo(f"{result.algorithm:>18}: C*={result.C_star:4d} eta*={result.eta_star:.4f} "
                   f"APT*={result.apt_star:.6g}")


@main.command("validate")
@config_option
@click.option("--n", "n", type=click.IntRange(min=1), default=20000, show_default=True,
              help="Monte Carlo realizations.")
@click.option("--gamma", "gammas", type=float, multiple=True, help="SINR threshold in dB (repeatable).")
@click.option("--cache", "caches", type=click.IntRange(min=0), multiple=True, help="Cache size (repeatable).")
@click.option("--tolerance", type=float, default=0.03, show_default=True,
              help="Allowed |analytic - empirical| for coverage.")
@click.option("--snr-tolerance", type=float, default=0.02, show_default=True,
              help="Allowed |closed form - empirical| in the noise-limited check.")
@seed_option
@out_dir_option
@workers_option
@click.option("--trace", is_flag=True, help="Also write the per-realization trace.")
def cli_validate(config_path, n, gammas, caches, tolerance, snr_tolerance, seed, out_dir, workers, trace):
    """
    Compare analytic coverage with Monte Carlo estimates; exits 4 if any pair fails.
    """
    from hetnetcache.flows import run_with_workers, validate_flow

    def action():
        cfg, run_seed, target = _setup(config_path, seed, out_dir)
        return run_with_workers(validate_flow, workers, cfg=cfg, n=n, seed=run_seed, out_dir=target,
                                workers=workers, gammas_db=list(gammas) if gammas else list(DEFAULT_GAMMAS_DB),
                                C_values=list(caches) if caches else [0, 200], tolerance=tolerance,
                                snr_tolerance=snr_tolerance, trace=trace)

    report = _run(action)
    click.echo(f"{len(report.rows) - len(report.failures)} of {len(report.rows)} checks passed")
    if not report.passed:
        for row in report.failures:
            click.echo(f"FAILED {row['check']} {row['kind']} gamma={row['gamma_dB']} C={row['C']}: "
                       f"{row['analytic']:.6f} vs {row['empirical']:.6f}", err=True)
        raise SystemExit(EXIT_VALIDATION)


if __name__ == "__main__":
    main()

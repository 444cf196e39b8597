"""Command surface: pmf, extinction, moments, simulate and verify.

Every command builds one OutputRecord and writes it to stdout as CSV or JSON;
diagnostics go to stderr. Exit codes: 0 success, 1 verification failure,
2 usage error, 3 numerical non-convergence, 4 internal error.
"""
import io
import json
import logging
import sys
from dataclasses import dataclass, field

import click
import numpy as np
import pandas as pd

from . import __version__, classical, config, fbd, mc, oracle
from .classical import ModelParams
from .errors import FbdError

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json')
SUITES = ('reduction', 'oracle', 'mc', 'all')

REDUCTION_TOL = 1e-8
HALF_ORDER_TOL = 1e-5
QUARTER_ORDER_TOL = 1e-4
CAPUTO_TOL = 5e-3
CHI_SQUARE_LEVEL = 1e-3


@dataclass(frozen=True)
class OutputRecord:
    command: str
    parameters: dict
    columns: tuple
    rows: list
    summary: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__

    def as_dict(self):
        return {
            'command': self.command,
            'parameters': _plain(self.parameters),
            'columns': list(self.columns),
            'rows': _plain(self.rows),
            'summary': _plain(self.summary),
            'seed': self.seed,
            'version': self.version,
        }

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, allow_nan=False) + '\n'

    def to_csv(self):
        buffer = io.StringIO()
        meta = {'command': self.command, 'version': self.version, 'seed': self.seed}
        meta.update({f"param.{key}": value for key, value in _plain(self.parameters).items()})
        meta.update({f"summary.{key}": value for key, value in _plain(self.summary).items()})
        for key in sorted(meta):
            value = meta[key]
            buffer.write(f"# {key}={_format_scalar(value)}\n")
        frame = pd.DataFrame(_plain(self.rows), columns=list(self.columns))
        frame.to_csv(buffer, index=False, float_format=_format_float, lineterminator='\n')
        return buffer.getvalue()

    def render(self, fmt):
        return self.to_json() if fmt == 'json' else self.to_csv()


def _format_float(value):
    # shortest round-trip repr, locale independent
    return repr(float(value))


def _format_scalar(value):
    if isinstance(value, float):
        return _format_float(value)
    return '' if value is None else str(value)


def _plain(value):
    """Convert numpy scalars and containers to JSON-native Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _parse_grid(t, t_grid):
    if t_grid:
        try:
            return [float(item) for item in t_grid.split(',') if item.strip()]
        except ValueError:
            raise click.BadParameter(f"expected comma-separated numbers, got {t_grid!r}", param_hint='--t-grid')
    if t is None:
        raise click.UsageError("one of --t or --t-grid is required")
    return [t]


def _model(lam, mu, nu):
    return ModelParams(lam, mu, nu)


def _tol(ctx, flag):
    return config.resolve_tol(flag, ctx.obj)


def model_options(func):
    func = click.option('--nu', type=float, default=1.0, show_default=True, help='Fractional order in (0, 1].')(func)
    func = click.option('--mu', type=float, required=True, help='Per-capita death rate (>= 0).')(func)
    func = click.option('--lambda', 'lam', type=float, required=True, help='Per-capita birth rate (> 0).')(func)
    return func


def output_options(func):
    func = click.option('--format', 'fmt', type=click.Choice(FORMATS), default='csv', show_default=True)(func)
    func = click.option('--tol', type=float, default=None, help=f"Absolute tolerance (overrides {config.TOL_ENV_VAR}).")(func)
    return func


def _configure_logging(verbosity):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format='%(levelname)s %(name)s: %(message)s', force=True)


@click.group()
@click.version_option(__version__, prog_name='fracbd')
@click.option('-v', '--verbose', count=True, help='Repeat for more detail on stderr.')
@click.pass_context
def cli(ctx, verbose):
    """Fractional linear birth-death process numerics."""
    _configure_logging(verbose)
    ctx.obj = config.load_settings()


@cli.command()
@model_options
@click.option('--t', 't', type=float, required=True)
@click.option('--kmax', type=click.IntRange(min=0), required=True)
@output_options
@click.pass_context
def pmf(ctx, lam, mu, nu, t, kmax, tol, fmt):
    """State probabilities p_0..p_kmax at time t."""
    params = _model(lam, mu, nu)
    vector = fbd.pmf_vector(params, t, kmax, _tol(ctx, tol))
    rows = [[k, vector.probs[k], vector.errors[k]] for k in range(kmax + 1)]
    record = OutputRecord(
        'pmf', {'lambda': lam, 'mu': mu, 'nu': nu, 't': t, 'kmax': kmax, 'tol': vector.series_tol},
        ('k', 'probability', 'trunc_error'), rows, {'tail_bound': vector.tail_bound},
    )
    click.echo(record.render(fmt), nl=False)


@cli.command()
@model_options
@click.option('--t', 't', type=float, default=None)
@click.option('--t-grid', default=None, help='Comma-separated times, e.g. 0.5,1,2.')
@output_options
@click.pass_context
def extinction(ctx, lam, mu, nu, t, t_grid, tol, fmt):
    """Extinction probability over a time grid."""
    params = _model(lam, mu, nu)
    grid = _parse_grid(t, t_grid)
    tol = _tol(ctx, tol)
    rows = [[time, *fbd.extinction_with_error(params, time, tol)] for time in grid]
    record = OutputRecord(
        'extinction', {'lambda': lam, 'mu': mu, 'nu': nu, 'tol': tol}, ('t', 'extinction', 'error_estimate'), rows,
        {'limit': fbd.extinction_limit(params)},
    )
    click.echo(record.render(fmt), nl=False)


@cli.command()
@model_options
@click.option('--t', 't', type=float, default=None)
@click.option('--t-grid', default=None, help='Comma-separated times, e.g. 0.5,1,2.')
@output_options
@click.pass_context
def moments(ctx, lam, mu, nu, t, t_grid, tol, fmt):
    """Mean, variance and second factorial moment over a time grid."""
    params = _model(lam, mu, nu)
    grid = _parse_grid(t, t_grid)
    tol = _tol(ctx, tol)
    rows = []
    for time in grid:
        estimate = fbd.moments(params, time, tol)
        rows.append([
            time, estimate.mean, estimate.mean_error, estimate.variance, estimate.variance_error,
            estimate.second_factorial, estimate.second_factorial_error,
        ])
    record = OutputRecord(
        'moments', {'lambda': lam, 'mu': mu, 'nu': nu, 'tol': tol},
        ('t', 'mean', 'mean_error', 'variance', 'variance_error', 'second_factorial_moment', 'second_factorial_error'),
        rows,
    )
    click.echo(record.render(fmt), nl=False)


@cli.command()
@model_options
@click.option('--t', 't', type=float, required=True)
@click.option('--samples', type=click.IntRange(min=1), required=True)
@click.option('--seed', type=click.IntRange(min=0), required=True)
@click.option('--workers', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--kmax-report', type=click.IntRange(min=0), default=config.KMAX_REPORT, show_default=True)
@click.option('--time-change', type=click.Choice(mc.TIME_CHANGES), default=mc.INVERSE_STABLE, show_default=True)
@click.option('--format', 'fmt', type=click.Choice(FORMATS), default='csv', show_default=True)
@click.pass_context
def simulate(ctx, lam, mu, nu, t, samples, seed, workers, kmax_report, time_change, fmt):
    """Monte Carlo histogram of N_nu(t)."""
    params = _model(lam, mu, nu)
    summary = mc.simulate(params, t, mc.McConfig(samples, seed, workers, kmax_report, time_change))
    frame = summary.to_frame()
    top = int(np.flatnonzero(summary.counts)[-1]) if summary.counts.any() else 0
    rows = frame.iloc[: top + 1].values.tolist()
    rows = [[int(k), int(count), frequency, err] for k, count, frequency, err in rows]
    record = OutputRecord(
        'simulate', {'lambda': lam, 'mu': mu, 'nu': nu, 't': t, 'samples': samples, 'workers': workers,
                     'kmax_report': kmax_report, 'time_change': time_change},
        ('k', 'count', 'frequency', 'std_err'), rows,
        {'overflow': summary.overflow, 'mean': summary.sample_mean, 'variance': summary.sample_variance,
         'mean_std_err': summary.mean_std_err},
        seed=seed,
    )
    click.echo(record.render(fmt), nl=False)


def _check(name, computed, reference, tolerance):
    diff = abs(computed - reference)
    return [name, computed, reference, diff, tolerance, diff <= tolerance]


def reduction_checks(params, t, tol):
    """fbd at nu = 1 against the classical closed forms."""
    logger.info("Step 1: nu = 1 reduction against the classical closed forms")
    base = params.with_nu(1.0)
    rows = [_check('reduction.extinction', fbd.extinction(base, t, tol), classical.classical_extinction(base, t), REDUCTION_TOL)]
    for k in range(1, 11):
        rows.append(_check(f"reduction.p{k}", fbd.pmf(base, t, k, tol), classical.classical_pmf(base, t, k), REDUCTION_TOL))
    return rows


def oracle_checks(params, t, tol, dt, kmax):
    """fbd against subordination quadrature at nu in {1/2, 1/4} and the Caputo integrator at params.nu."""
    rows = []
    for nu, tolerance in ((0.5, HALF_ORDER_TOL), (0.25, QUARTER_ORDER_TOL)):
        logger.info("Step 2: subordination quadrature at nu=%g", nu)
        model = params.with_nu(nu)
        for k in [oracle.EXTINCTION] + list(range(1, 6)):
            index = 0 if k == oracle.EXTINCTION else k
            rows.append(_check(
                f"subordination.nu{nu:g}.p{index}", fbd.pmf(model, t, index, tol),
                oracle.subordination_quadrature(model, t, k, nu), tolerance,
            ))
    logger.info("Step 3: L1 Caputo integrator at nu=%g", params.nu)
    solution = oracle.solve_caputo_system(params, oracle.OracleConfig(kmax, dt, t))
    final = solution.raw[-1]
    for k in range(0, 4):
        rows.append(_check(f"caputo.nu{params.nu:g}.p{k}", fbd.pmf(params, t, k, tol), float(final[k]), CAPUTO_TOL))
    return rows


def mc_checks(params, t, tol, samples, seed, workers):
    """fbd against Monte Carlo: extinction within three standard errors and a chi-square fit."""
    logger.info("Step 4: Monte Carlo with %d samples", samples)
    summary = mc.simulate(params, t, mc.McConfig(samples, seed, workers))
    extinct = fbd.extinction(params, t, tol)
    rows = [_check('mc.extinction', float(summary.frequencies[0]), extinct,
                   max(3 * float(np.sqrt(extinct * (1 - extinct) / samples)), 1.0 / samples))]
    kmax = max(1, min(int(np.flatnonzero(summary.counts)[-1]) if summary.counts.any() else 1, 200))
    fit = mc.chi_square_test(summary, fbd.pmf_vector(params, t, kmax, tol))
    shortfall = max(0.0, CHI_SQUARE_LEVEL - fit.p_value)
    rows.append(['mc.chi_square_p_value', fit.p_value, CHI_SQUARE_LEVEL, shortfall, CHI_SQUARE_LEVEL, fit.p_value >= CHI_SQUARE_LEVEL])
    return rows


@cli.command()
@model_options
@click.option('--t', 't', type=float, required=True)
@click.option('--suite', type=click.Choice(SUITES), default='all', show_default=True)
@click.option('--samples', type=click.IntRange(min=1), default=100000, show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=1, show_default=True)
@click.option('--workers', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--dt', type=float, default=1e-3, show_default=True)
@click.option('--kmax', type=click.IntRange(min=2), default=200, show_default=True)
@output_options
@click.pass_context
def verify(ctx, lam, mu, nu, t, suite, samples, seed, workers, dt, kmax, tol, fmt):
    """Cross-check fbd against the closed forms, both oracles and Monte Carlo."""
    params = _model(lam, mu, nu)
    tol = _tol(ctx, tol)
    rows = []
    if suite in ('reduction', 'all'):
        rows += reduction_checks(params, t, tol)
    if suite in ('oracle', 'all'):
        rows += oracle_checks(params, t, tol, dt, kmax)
    if suite in ('mc', 'all'):
        rows += mc_checks(params, t, tol, samples, seed, workers)

    passed = all(row[-1] for row in rows)
    failed = [row[0] for row in rows if not row[-1]]
    if failed:
        logger.warning("Checks outside tolerance: %s", ', '.join(failed))
    record = OutputRecord(
        'verify', {'lambda': lam, 'mu': mu, 'nu': nu, 't': t, 'suite': suite, 'tol': tol},
        ('check', 'computed', 'reference', 'abs_diff', 'tolerance', 'passed'), rows,
        {'passed': passed, 'max_abs_diff': max(row[3] for row in rows) if rows else 0.0},
        seed=seed if suite in ('mc', 'all') else None,
    )
    click.echo(record.render(fmt), nl=False)
    return 0 if passed else 1


def main(argv=None):
    """Run the command surface and return its exit code."""
    try:
        result = cli.main(args=argv, prog_name='fracbd', standalone_mode=False)
        return result if isinstance(result, int) else 0
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        return 1
    except FbdError as exc:
        click.echo(f"Error: {exc}", err=True)
        return exc.exit_code
    except Exception as exc:
        logger.exception("Unhandled error")
        click.echo(f"Error: internal: {exc}", err=True)
        return 4

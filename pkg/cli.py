"""
Línea de comandos
Descomposición de archivos, verificación de pares y reproducción de los
experimentos con salida CSV.

Códigos de salida: 0 todo correcto, 2 cota o comprobación violada (o
descomposición incompleta), 1 error de uso, lectura o formato.
"""
import logging
import sys
from typing import Optional, Sequence

import click

from config import get_config, iteration_config, spectral_config
from repositories.report_repository import ReportRepository
from repositories.tensor_repository import TensorRepository
from services.decompose import DEFLATION_MODES, decompose_odeco
from services.exceptions import OdecoError
from services.experiments import (
    ENSEMBLE_KINDS,
    ExperimentConfig,
    ExperimentResult,
    constants_table,
    counterexamples,
    epsilon_grid,
    figure1,
    figure2,
    run_ensemble,
    svd_rates,
)
from services.odeco import SingularTuple, tuple_residual
from services.perturb import report_frame, verify_bounds

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2


def _settings(full: bool = False):
    return get_config('full') if full else get_config()


def _experiment_config(name: str, seed, full: bool, restarts, tol, grid_points=None, epsilon=None):
    settings = _settings(full)
    return ExperimentConfig(
        experiment=name,
        full=full,
        grid_points=grid_points or settings.GRID_POINTS,
        seed=settings.ODECO_SEED if seed is None else seed,
        epsilon=settings.EPSILON if epsilon is None else epsilon,
        spectral=spectral_config(settings, restarts=restarts, tol=tol),
        iteration=iteration_config(settings),
    )


def _emit(ctx: click.Context, result: ExperimentResult, out: Optional[str]) -> None:
    """Escribe el CSV, imprime las comprobaciones y termina con el código que toque."""
    settings = _settings()
    path = ReportRepository(settings.OUTPUT_DIR).write_frame(out or f"{result.name}.csv", result.frame, result.metadata)
    for check in result.checks:
        mark = "✓" if check.passed else "✗"
        click.echo(f"{mark} {check.name}: observado={check.observed:.12g} esperado={check.expected:.12g} "
                   f"tol={check.tol:g} {check.detail}".rstrip())
    click.echo(f"CSV: {path}")
    if not result.passed:
        logger.warning("%s: %d comprobaciones fallidas", result.name, len(result.failures))
        ctx.exit(EXIT_VIOLATION)
    ctx.exit(EXIT_OK)


seed_option = click.option('--seed', type=int, default=None, help='Semilla (por defecto ODECO_SEED).')
out_option = click.option('--out', type=click.Path(dir_okay=False), default=None, help='Archivo de salida.')
restarts_option = click.option('--restarts', type=click.IntRange(min=1), default=None,
                               help='Arranques de la norma espectral.')
tol_option = click.option('--tol', type=click.FloatRange(min=0, min_open=True), default=None,
                          help='Tolerancia de la norma espectral.')
full_option = click.option('--full', is_flag=True, default=False, help='Malla y arranques completos.')


@click.group()
@click.option('--log-level', default=None, help='Nivel de logging (por defecto LOG_LEVEL).')
def odeco(log_level):
    """Perturbación y descomposición de tensores odeco."""
    level = (log_level or _settings().LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format='%(levelname)s %(name)s: %(message)s')


@odeco.command()
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@click.option('-r', '--rank', 'rank', type=click.IntRange(min=1), required=True, help='Componentes a recuperar.')
@click.option('--deflation-mode', type=click.Choice(DEFLATION_MODES), default='orthogonal_complement')
@click.option('--iter-restarts', type=click.IntRange(min=1), default=None, help='Arranques por componente.')
@seed_option
@out_option
@click.pass_context
def decompose(ctx, input_path, rank, deflation_mode, iter_restarts, seed, out):
    """Descompone un tensor en formato de texto y escribe el archivo odeco."""
    settings = _settings()
    repository = TensorRepository()
    tensor = repository.read_tensor(input_path)
    cfg = iteration_config(settings, restarts=iter_restarts, deflation_mode=deflation_mode)
    result = decompose_odeco(tensor, rank, cfg, seed=settings.ODECO_SEED if seed is None else seed)
    target = out or f"{input_path}.odeco"
    repository.write_odeco(target, result.odeco)
    for k in range(result.found):
        tup = SingularTuple(float(result.odeco.lambdas[k]), result.odeco.component(k))
        click.echo(f"k={k} lambda={tup.value:.17g} residuo={tuple_residual(tensor, tup):.3e}")
    click.echo(f"Odeco: {target}")
    if not result.complete:
        click.echo(f"✗ sólo {result.found} de {rank} componentes convergieron", err=True)
        ctx.exit(EXIT_VIOLATION)
    ctx.exit(EXIT_OK)


@odeco.command()
@click.argument('first', type=click.Path(exists=True, dir_okay=False))
@click.argument('second', type=click.Path(exists=True, dir_okay=False))
@click.option('--epsilon', type=click.FloatRange(min=0, min_open=True), default=None)
@restarts_option
@tol_option
@seed_option
@out_option
@click.pass_context
def perturb(ctx, first, second, epsilon, restarts, tol, seed, out):
    """Verifica las cotas entre dos archivos odeco (T y T~)."""
    settings = _settings()
    repository = TensorRepository()
    a = repository.read_odeco(first)
    b = repository.read_odeco(second)
    epsilon = settings.EPSILON if epsilon is None else epsilon
    report = verify_bounds(a, b, epsilon, spectral_config(settings, restarts=restarts, seed=seed, tol=tol))
    metadata = {"first": first, "second": second, "epsilon": epsilon, "delta": report.delta,
                "delta_is_estimate": report.delta_is_estimate, "c_epsilon": report.c_epsilon,
                "restarts": restarts or settings.SPECTRAL_RESTARTS,
                "seed": settings.ODECO_SEED if seed is None else seed}
    path = ReportRepository(settings.OUTPUT_DIR).write_frame(out or "perturbation.csv", report_frame(report), metadata)
    click.echo(f"Δ = {report.delta:.17g} (estimación inferior)")
    click.echo(f"CSV: {path}")
    if not report.passed:
        click.echo(f"✗ cotas violadas en k = {report.violations}", err=True)
        ctx.exit(EXIT_VIOLATION)
    click.echo("✓ todas las cotas se cumplen")
    ctx.exit(EXIT_OK)


@odeco.command('figure1')
@seed_option
@out_option
@full_option
@restarts_option
@tol_option
@click.option('--grid-points', type=click.IntRange(min=2), default=None)
@click.pass_context
def figure1_cmd(ctx, seed, out, full, restarts, tol, grid_points):
    """Pares odeco correlacionados: max sin∠ frente a Δ/lambda."""
    cfg = _experiment_config('figure1', seed, full, restarts, tol, grid_points)
    _emit(ctx, figure1(cfg), out)


@odeco.command('figure2')
@seed_option
@out_option
@full_option
@restarts_option
@tol_option
@click.option('--grid-points', type=click.IntRange(min=2), default=None)
@click.pass_context
def figure2_cmd(ctx, seed, out, full, restarts, tol, grid_points):
    """Modelo X = T + E: errores de la aproximación odeco."""
    cfg = _experiment_config('figure2', seed, full, restarts, tol, grid_points)
    _emit(ctx, figure2(cfg), out)


@odeco.command('counterexamples')
@seed_option
@out_option
@restarts_option
@click.pass_context
def counterexamples_cmd(ctx, seed, out, restarts):
    """Weyl, matricización, min-max, ejemplo 2 x 2 e intercambio."""
    cfg = _experiment_config('counterexamples', seed, False, restarts, None)
    _emit(ctx, counterexamples(cfg), out)


@odeco.command('svd-rates')
@seed_option
@out_option
@restarts_option
@click.option('--trials', type=click.IntRange(min=1), default=20)
@click.option('--kappa', type=click.FloatRange(min=0, min_open=True), default=8.0)
@click.option('--rank', type=click.IntRange(min=1), default=4)
@click.pass_context
def svd_rates_cmd(ctx, seed, out, restarts, trials, kappa, rank):
    """Escalado del error del SVD tensorial con d y lambda."""
    cfg = _experiment_config('svd_rates', seed, False, restarts, None)
    _emit(ctx, svd_rates(cfg, r=rank, kappa=kappa, trials=trials), out)


@odeco.command('constants')
@click.option('--p', 'p', type=click.IntRange(min=3), default=3)
@click.option('--start', type=float, default=0.5)
@click.option('--stop', type=float, default=6.0)
@click.option('--step', type=click.FloatRange(min=0, min_open=True), default=0.02)
@out_option
@click.pass_context
def constants_cmd(ctx, p, start, stop, step, out):
    """c_eps y max{1+eps, 1/c_eps} en una malla de epsilon."""
    if not 0 < start <= stop:
        raise click.BadParameter('se requiere 0 < start <= stop')
    result = constants_table(epsilon_grid(start, stop, step), p)
    click.echo(f"mínimo {result.metadata['objective']:.6f} en eps = {result.metadata['argmin']:.2f}")
    _emit(ctx, result, out)


@odeco.command('ensemble')
@click.option('--kind', type=click.Choice(ENSEMBLE_KINDS), required=True)
@click.option('--count', type=click.IntRange(min=1), default=None, help='Instancias (por defecto las de aceptación).')
@seed_option
@out_option
@restarts_option
@click.option('--epsilon', type=click.FloatRange(min=0, min_open=True), default=None)
@click.pass_context
def ensemble_cmd(ctx, kind, count, seed, out, restarts, epsilon):
    """Ensambles de verificación de cotas y recuperación."""
    cfg = _experiment_config(f"ensemble_{kind}", seed, False, restarts, None, epsilon=epsilon)
    _emit(ctx, run_ensemble(kind, cfg, count), out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Punto de entrada con códigos de salida 0 / 1 / 2."""
    try:
        code = odeco.main(args=list(argv) if argv is not None else None, prog_name='odeco', standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo('Abortado', err=True)
        return EXIT_USAGE
    except (OdecoError, OSError) as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_USAGE
    return EXIT_OK if code is None else int(code)


if __name__ == '__main__':
    sys.exit(main())

#!/usr/bin/env python3
"""
Main CLI interface for characteristic-curve identification.
"""

import json
import sys
from functools import wraps
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click

from config import Config, setup_logging
from core_types import Dataset, IdentifiedModel, ModelFamily
from curve_refit import LAWS, refit_model
from dataset_storage import DatasetStorage, load_dataset, save_dataset
from errors import CCIdentError, ConfigError, InvalidArgument
from harness import (
    ARCH_AXES, SweepConfig, identify, make_dataset, rmse, run_sweep, select_family,
    sweep_architecture, validation_case, write_arch_csv, write_cc_samples, write_nn_edges,
    write_raw_csv, write_summary_csv,
)
from nn_cc import NeuralCurve, export_model, import_model
from odesim import simulate_identified, simulate_system
from poly_cc import export_poly_coefficients
from run_config import PRESET_NAMES, RunConfig, dump_config, resolve_config
from sindy_cc import export_sindy_terms
from systems import SYSTEM_NAMES, TrueSystem, make_system


# ============================================================================
# Shared options and error handling
# ============================================================================

def run_options(fn):
    """--system --preset --config --seed --jobs --out"""
    options = [
        click.option('--system', type=click.Choice(SYSTEM_NAMES), help='Registry system'),
        click.option('--preset', type=click.Choice(PRESET_NAMES), help='Named parameter set'),
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Run config JSON'),
        click.option('--seed', type=int, help='Master seed (CCIDENT_SEED overrides)'),
        click.option('--jobs', type=int, help='Worker processes for sweeps'),
        click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Output directory'),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def method_options(fn):
    """--method --degree --threshold --ridge --epochs --neurons --layers --activation"""
    options = [
        click.option('--method', help='poly, sindy, nn, a comma list, or all'),
        click.option('--degree', type=int, help='Polynomial degree for Poly-CC and SINDy-CC'),
        click.option('--threshold', type=float, help='STLSQ threshold'),
        click.option('--ridge', type=float, help='STLSQ ridge regularisation'),
        click.option('--epochs', type=int, help='NN-CC maximum epochs'),
        click.option('--neurons', type=int, help='NN-CC neurons per hidden layer'),
        click.option('--layers', type=int, help='NN-CC hidden layers'),
        click.option('--activation', help='NN-CC activation function'),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def cli_errors(fn):
    """Map library exceptions to exit codes: 2 for configuration, 1 for experiment failures."""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"✗ Configuration error: {e}", err=True)
            sys.exit(2)
        except CCIdentError as e:
            click.echo(f"✗ {type(e).__name__}: {e}", err=True)
            sys.exit(1)
        except KeyboardInterrupt:
            click.echo("\n✗ Interrupted by user", err=True)
            sys.exit(1)
    return wrapper


def build_overrides(system=None, seed=None, jobs=None, out_dir=None, method=None, degree=None,
                    threshold=None, ridge=None, epochs=None, neurons=None, layers=None,
                    activation=None, **_) -> Dict[str, Any]:
    """Nested config patch from CLI flags; unset flags stay None and are skipped on merge."""
    return {
        'system': {'name': system},
        'seed': seed,
        'jobs': jobs,
        'output_dir': out_dir,
        'methods': {
            'selection': method,
            'poly': {'degree': degree},
            'sindy': {'degree': degree, 'threshold': threshold, 'ridge': ridge},
            'nn': {'max_epochs': epochs, 'neurons': neurons, 'layers': layers, 'activation': activation},
        },
    }


def resolve(preset: Optional[str], config_path: Optional[str], flags: Dict[str, Any],
            extra: Optional[Dict[str, Any]] = None) -> Tuple[RunConfig, Path]:
    """Resolve the run config, create the output directory and record the config in it."""
    overrides = build_overrides(**flags)
    if extra:
        overrides.update(extra)
    try:
        cfg = resolve_config(preset, Path(config_path) if config_path else None, overrides)
        out = Config.validate(cfg.output_path())
    except InvalidArgument as e:
        raise ConfigError(str(e))
    dump_config(cfg, out)
    return cfg, out


def system_or_config_error(cfg: RunConfig) -> TrueSystem:
    try:
        return cfg.build_system()
    except InvalidArgument as e:
        raise ConfigError(str(e))


def known_system(cfg: RunConfig, ds: Optional[Dataset] = None) -> Optional[TrueSystem]:
    """Generating system from dataset metadata, else from the config, else None."""
    if ds is not None and 'system' in ds.meta:
        try:
            return make_system(ds.meta['system'], ds.meta.get('params'))
        except InvalidArgument:
            return None
    if cfg.system.name:
        return system_or_config_error(cfg)
    return None


def training_dataset(cfg: RunConfig, dataset: Optional[str], out: Path) -> Tuple[Dataset, str]:
    """Load --dataset or generate the configured training run; returns (dataset, file stem)."""
    if dataset:
        path = Path(dataset)
        return load_dataset(path, estimate_missing=True), path.stem
    system = system_or_config_error(cfg)
    forcing, init = cfg.training_drive(system)
    ds = make_dataset(system, forcing, init, cfg.integrator.build())
    DatasetStorage(out).save(system.name, ds, {**ds.meta, 'seed': cfg.seed})
    return ds, system.name


def resolve_family(family: Optional[str], system: Optional[TrueSystem]) -> ModelFamily:
    if family:
        return ModelFamily.parse(family)
    if system is not None:
        return system.family
    raise ConfigError("cannot infer the model family; pass --family position|velocity")


def _fmt(value: float) -> str:
    return f"{value:.6g}"


# ============================================================================
# Commands
# ============================================================================

@click.group()
@click.option('--log-level', help='Logging level (default from LOG_LEVEL)')
def cli(log_level):
    """Identify characteristic curves of forced second-order oscillators."""
    setup_logging(log_level)


@cli.command()
@run_options
@cli_errors
def generate(preset, config_path, **flags):
    """Integrate a registry system and write its dataset CSV."""
    cfg, out = resolve(preset, config_path, flags)
    ds, stem = training_dataset(cfg, None, out)
    click.echo(f"✓ {ds.n} samples of {stem} written to {out / (stem + '.csv')}")
    click.echo(f"  integrator={ds.meta['integrator']} max residual={ds.meta['residual_max']:.3e}")


@cli.command('identify')
@run_options
@method_options
@click.option('--dataset', type=click.Path(dir_okay=False), help='Training dataset CSV')
@click.option('--family', type=click.Choice([f.value for f in ModelFamily]), help='Model family')
@cli_errors
def identify_cmd(preset, config_path, dataset, family, **flags):
    """Fit the selected methods and export the identified models."""
    cfg, out = resolve(preset, config_path, flags)
    ds, stem = training_dataset(cfg, dataset, out)
    system = known_system(cfg, ds)
    fam = resolve_family(family, system)
    settings = cfg.method_settings()

    models: Dict[str, IdentifiedModel] = {}
    failed = False
    for method in cfg.selected_methods():
        try:
            model = identify(ds, fam, method, settings)
        except CCIdentError as e:
            click.echo(f"✗ {method}: {e}", err=True)
            failed = True
            continue
        models[method] = model
        if method == 'poly':
            path = export_poly_coefficients(model, out / f"{stem}_poly.csv")
            flag = ' (rank deficient)' if model.fit.rank_deficient else ''
            click.echo(f"✓ poly: fit residual {model.fit.fit_residual:.3e}{flag} -> {path}")
        elif method == 'sindy':
            path = export_sindy_terms(model, out / f"{stem}_sindy.csv")
            click.echo(f"✓ sindy: {model.fit.n_active} active terms, fit residual "
                       f"{model.fit.fit_residual:.3e} -> {path}")
            for name, curve in zip(fam.curve_names, (model.cc_a, model.cc_b)):
                for term, coeff in curve.active_terms:
                    click.echo(f"    {name}: {_fmt(coeff)} * {term.render()}")
        else:
            path = export_model(model, out / f"{stem}_nn.txt")
            click.echo(f"✓ nn: final loss {model.fit.final_loss:.3e} after {model.fit.epochs} epochs -> {path}")

    if models:
        true_curves = (system.cc_a, system.cc_b) if system is not None and system.family is fam else (None, None)
        for index, name in enumerate(fam.curve_names):
            variable = fam.input_variables[index]
            curves = {m: (mdl.cc_a, mdl.cc_b)[index] for m, mdl in models.items()}
            write_cc_samples(out / f"{stem}_cc_{name}.csv", ds.domain(variable), curves, true_curves[index])
            if 'nn' in curves and isinstance(curves['nn'], NeuralCurve):
                write_nn_edges(out / f"{stem}_nn_edges_{name}.csv", curves['nn'], true_curves[index])
    if failed:
        sys.exit(1)


@cli.command()
@run_options
@method_options
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), help='NN-CC model file')
@click.option('--dataset', type=click.Path(dir_okay=False), help='Dataset to fit when no --model is given')
@click.option('--family', type=click.Choice([f.value for f in ModelFamily]), help='Model family')
@click.option('--amplitude', type=float, help='Forcing amplitude')
@click.option('--omega', type=float, help='Forcing frequency')
@click.option('--x0', type=float, help='Initial position')
@click.option('--v0', type=float, help='Initial velocity')
@cli_errors
def simulate(preset, config_path, model_path, dataset, family, amplitude, omega, x0, v0, **flags):
    """Forward-simulate an identified model under a validation drive."""
    extra = {'validation': {'amplitude': amplitude, 'omega': omega, 'x0': x0, 'v0': v0}}
    cfg, out = resolve(preset, config_path, flags, extra)

    ds = None
    if model_path:
        model = import_model(Path(model_path))
        stem = Path(model_path).stem
    else:
        ds, stem = training_dataset(cfg, dataset, out)
        method = cfg.selected_methods()[0]
        model = identify(ds, resolve_family(family, known_system(cfg, ds)), method, cfg.method_settings())
    system = known_system(cfg, ds)
    if system is None:
        raise ConfigError("simulate needs a system (--system, a preset or dataset metadata) for its forcing form")

    forcing, init = cfg.validation_drive(system)
    integrator = cfg.integrator.build()
    traj = simulate_identified(model, forcing, init[0], init[1], integrator)
    path = save_dataset(traj.to_dataset(), out / f"{stem}_simulation.csv")
    click.echo(f"✓ {model.method} model simulated ({traj.method}) -> {path}")

    if system.family is model.family:
        reference = simulate_system(system, forcing, init, integrator)
        click.echo(f"  rmse vs {system.name}: {rmse(traj.x, reference.x):.3e}")


@cli.command()
@run_options
@method_options
@cli_errors
def validate(preset, config_path, **flags):
    """Run the train/validate RMSE sweep and write raw and summary reports."""
    cfg, out = resolve(preset, config_path, flags)
    system = system_or_config_error(cfg)
    protocol = cfg.build_protocol(system)
    sweep = SweepConfig(methods=cfg.selected_methods(), settings=cfg.method_settings(),
                        integrator=cfg.integrator.build(), jobs=cfg.resolved_jobs())

    def progress(done, total, record):
        click.echo(f"cell {done}/{total} method={record.method} rmse={_fmt(record.rmse)}", err=True)

    reports = run_sweep(system, protocol, sweep, on_record=progress)
    raw = write_raw_csv(reports, out / f"{system.name}_rmse_raw.csv")
    summary = write_summary_csv(reports, out / f"{system.name}_rmse_summary.csv")

    for method, report in reports.items():
        s = report.summary
        click.echo(f"  {method}: n={s.n} median={_fmt(s.median)} mean={_fmt(s.mean)} "
                   f"diverged={report.n_diverged} failed={report.n_failed}")
    click.echo(f"✓ Reports written to {raw} and {summary}")
    if any(report.n_failed for report in reports.values()):
        click.echo("⚠ Some cells failed; see the raw report", err=True)
        sys.exit(1)


@cli.command('select-family')
@run_options
@method_options
@click.option('--dataset', type=click.Path(dir_okay=False), help='Training dataset CSV')
@cli_errors
def select_family_cmd(preset, config_path, dataset, **flags):
    """Fit both model families and rank them on the validation drive."""
    cfg, out = resolve(preset, config_path, flags)
    ds, _ = training_dataset(cfg, dataset, out)
    system = known_system(cfg, ds)
    if system is None:
        raise ConfigError("select-family needs the generating system for the validation reference")
    forcing, init = cfg.validation_drive(system)
    integrator = cfg.integrator.build()
    case = validation_case(system, forcing, init, integrator)

    method = cfg.selected_methods()[0]
    result = select_family(ds, case, method, cfg.method_settings(), integrator)
    for rank, (family, value) in enumerate(result.ranking, 1):
        click.echo(f"  {rank}. {family.value}: rmse={_fmt(value)} ({result.status[family].value})")
    with open(out / 'family_selection.json', 'w') as f:
        json.dump({
            'method': method,
            'rmse': {fam.value: value for fam, value in result.rmse.items()},
            'status': {fam.value: s.value for fam, s in result.status.items()},
            'winner': result.winner.value if result.winner else None,
            'inconclusive': result.inconclusive,
            'non_discriminative': result.non_discriminative,
        }, f, indent=4)
    if result.non_discriminative:
        click.echo("⚠ Validation drive equals the training drive; the ranking does not discriminate")
    if result.inconclusive:
        click.echo("✗ Both families failed on the validation drive", err=True)
        sys.exit(1)
    click.echo(f"✓ winner: {result.winner.value}")


@cli.command('sweep-arch')
@run_options
@method_options
@click.option('--dataset', type=click.Path(dir_okay=False), help='Training dataset CSV')
@click.option('--family', type=click.Choice([f.value for f in ModelFamily]), help='Model family')
@click.option('--axis', type=click.Choice(list(ARCH_AXES)), help='Architecture axis to sweep')
@click.option('--values', help='Comma-separated axis values (default: the standard grid)')
@cli_errors
def sweep_arch(preset, config_path, dataset, family, axis, values, **flags):
    """Train NN-CC across neurons, layers or activations and tabulate final losses."""
    extra = {'arch': {'axis': axis, 'values': values.split(',') if values else None}}
    cfg, out = resolve(preset, config_path, flags, extra)
    ds, stem = training_dataset(cfg, dataset, out)
    fam = resolve_family(family, known_system(cfg, ds))

    def progress(done, total, row):
        click.echo(f"cell {done}/{total} {cfg.arch.axis}={row.value} loss={_fmt(row.final_loss)}", err=True)

    rows = sweep_architecture(ds, fam, cfg.arch.axis, cfg.arch.values, cfg.train_config(),
                              jobs=cfg.resolved_jobs(), on_row=progress)
    path = write_arch_csv(rows, out / f"{stem}_arch_{cfg.arch.axis}.csv")
    for row in rows:
        status = f"error: {row.error}" if row.error else f"loss={row.final_loss:.3e}"
        click.echo(f"  {cfg.arch.axis}={row.value}: {status} ({row.wall_time:.1f}s)")
    click.echo(f"✓ Table written to {path}")
    if any(row.error for row in rows):
        sys.exit(1)


@cli.command()
@run_options
@method_options
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), help='NN-CC model file')
@click.option('--dataset', type=click.Path(dir_okay=False), help='Dataset to fit when no --model is given')
@click.option('--family', type=click.Choice([f.value for f in ModelFamily]), help='Model family')
@click.option('--law-a', type=click.Choice(LAWS), default='polynomial', show_default=True,
              help='Law for the friction curve')
@click.option('--law-b', type=click.Choice(LAWS), default='polynomial', show_default=True,
              help='Law for the restoring curve')
@click.option('--refit-degree', type=int, default=3, show_default=True, help='Degree of polynomial laws')
@cli_errors
def refit(preset, config_path, model_path, dataset, family, law_a, law_b, refit_degree, **flags):
    """Refit identified curves to closed-form laws and print their parameters."""
    cfg, out = resolve(preset, config_path, flags)
    if model_path:
        model = import_model(Path(model_path))
        stem = Path(model_path).stem
    else:
        ds, stem = training_dataset(cfg, dataset, out)
        model = identify(ds, resolve_family(family, known_system(cfg, ds)),
                         cfg.selected_methods()[0], cfg.method_settings())

    refitted = refit_model(model, law_a, law_b, refit_degree)
    report = {}
    for name, curve in zip(refitted.family.curve_names, (refitted.cc_a, refitted.cc_b)):
        report[name] = {'law': curve.law, 'params': curve.params, 'rms_error': curve.rms_error}
        shown = ', '.join(f"{k}={_fmt(v)}" for k, v in curve.params.items())
        click.echo(f"  {name} ({curve.law}): {shown}  [rms {curve.rms_error:.2e}]")
    path = out / f"{stem}_refit.json"
    with open(path, 'w') as f:
        json.dump(report, f, indent=4)
    click.echo(f"✓ Refit written to {path}")


if __name__ == '__main__':
    cli()

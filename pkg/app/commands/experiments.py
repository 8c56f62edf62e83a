# app/commands/experiments.py
import functools
from pathlib import Path
from typing import Optional, Tuple

import click

from app.core.config import settings
from app.core.constants import SUBCOMMANDS
from app.core.errors import ConfigError, QuasiLabError
from app.core.logging import ExperimentLogger
from app.db.run_store import RunStore
from app.schemas.experiment import ExperimentConfig
from app.services.experiment_runner import ExperimentRunner

experiment_logger = ExperimentLogger()

DESCRIPTIONS = {
    "cf": "Continued-fraction expansion with exact convergents",
    "beta": "Finite-depth profile of beta(alpha)",
    "divisors": "Small-divisor profile and a sample divisor solve",
    "dc": "Diophantine and strong Diophantine checks",
    "resonances": "eps0-resonances of theta",
    "spectrum": "Eigenvalues of the Dirichlet truncation",
    "ids": "Integrated density of states by eigenvalue counting",
    "measure": "Atoms of a spectral measure",
    "holder": "Interval masses against eps^(1/2)",
    "lyapunov": "Finite-n Lyapunov exponents",
    "strip-growth": "Transfer-matrix growth on a complex strip",
    "weyl": "Weyl m-function, M(z) and the psi bound",
    "pk-scan": "P_(k) sums and the eps_k ladder",
    "duality": "Spectra of H and its dual truncation",
    "thouless": "Thouless formula residual",
    "uniformity": "xi-uniformity of phases on the resonant windows",
    "localize": "Decay of dual eigenvectors between resonances",
    "bloch-defect": "Defect of the Bloch lift of a dual eigenvector",
    "model-x": "Norms of the model sums X",
    "covariance": "Shift covariance of spectral measures",
}


def experiment_options(fn):
    """Options shared by every experiment subcommand"""
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="Flat key = value config file")
    @click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                  help="Override a config key; applied after the file")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                  help="Output directory for this run")
    @click.option("--precision", type=int, default=None, help="Working precision in bits")
    @click.option("--threads", type=int, default=None, help="Worker threads (0 = one per CPU)")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)
    return wrapper


def default_output_dir(command: str, config: ExperimentConfig) -> Path:
    return Path(settings.output_dir) / f"{command}-{config.config_hash()[:12]}"


def run_experiment(command: str, config_path: Optional[str], overrides: Tuple[str, ...],
                   out_dir: Optional[str], precision: Optional[int], threads: Optional[int]) -> None:
    """Resolve the config, run the subcommand and map failures onto exit codes"""
    try:
        if threads is not None and threads < 0:
            raise ConfigError("threads must be non-negative", key="--threads", value=threads)
        config = ExperimentConfig.load(config_path, overrides, precision)
        store = RunStore(out_dir or default_output_dir(command, config))
        manifest = ExperimentRunner(config, store, threads).execute(command)
    except QuasiLabError as exc:
        experiment_logger.run_failed(command, exc.code, exc.key, None if exc.value is None else str(exc.value),
                                     exc.exit_code)
        click.echo(f"error: {exc}", err=True)
        raise click.exceptions.Exit(exc.exit_code)

    click.echo(str(store.root))
    for warning in manifest.warnings:
        click.echo(f"warning: {warning}", err=True)


def make_command(name: str) -> click.Command:
    @click.command(name=name, help=DESCRIPTIONS[name])
    @experiment_options
    def command(config_path, overrides, out_dir, precision, threads):
        run_experiment(name, config_path, overrides, out_dir, precision, threads)
    return command


def register(group: click.Group) -> None:
    for name in SUBCOMMANDS:
        group.add_command(make_command(name))

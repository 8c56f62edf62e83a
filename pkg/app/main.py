# app/main.py
import click

from app.commands.experiments import register
from app.commands.selftest import selftest
from app.core.config import settings
from app.core.logging import setup_logging


def create_cli() -> click.Group:
    """Create and configure the command group"""

    @click.group(help=f"{settings.project_name}: numerical lab for quasi-periodic Schrodinger operators")
    @click.version_option(settings.project_version, prog_name=settings.project_name)
    @click.option("--log-level", default=None, help="Override QUASILAB_LOG_LEVEL")
    def cli(log_level):
        setup_logging(log_level)

    register(cli)
    cli.add_command(selftest)
    return cli


# Create cli instance
cli = create_cli()


if __name__ == "__main__":
    cli()

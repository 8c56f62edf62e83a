# app/commands/selftest.py
import click

from app.core.constants import EXIT_OK
from app.services.selftest import SelfTest

EXIT_SELFTEST_FAILED = 1


@click.command(name="selftest", help="Run the built-in closed-form checks")
@click.option("--potential-file", type=click.Path(dir_okay=False), default=None,
              help="Also check that this potential table parses")
def selftest(potential_file):
    report = SelfTest(potential_file).run()
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        click.echo(f"{status}  {check.name:<24} {check.detail}")
    failed = sum(not check.passed for check in report.checks)
    click.echo(f"{len(report.checks) - failed}/{len(report.checks)} checks passed")
    raise click.exceptions.Exit(EXIT_OK if failed == 0 else EXIT_SELFTEST_FAILED)

#!/usr/bin/env python3
"""Run CPSample experiments: generate data, train, sample, audit and report."""

import functools
import logging
import sys

import click
import tabulate
from click_aliases import ClickAliasedGroup

from cpsample_lab.common import ConfigException, StageFailureException
from cpsample_lab.util import checks, pipeline
from cpsample_lab.util.config import ENV_VAR, load_config, template_path

EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_CHECK = 4


@click.group(cls=ClickAliasedGroup)
def cli():
    """Run CPSample experiments: generate data, train, sample, audit and report."""
    pass


def common_options(f):
    @click.option(
        "-c",
        "--config",
        "config_file",
        envvar=ENV_VAR,
        required=True,
        help=f"Experiment config file. The environment variable {ENV_VAR} can also be used",
    )
    @click.option("-s", "--seed", type=int, default=None, help="Override run.seed")
    @click.option("-o", "--out", default=None, help="Override run.out (output directory)")
    @click.option("-f", "--force", is_flag=True, help="Rerun the requested stages")
    @click.option("-j", "--threads", type=int, default=None, help="Override run.threads")
    @click.option("-v", "--verbose", is_flag=True, help="Debug logging")
    @click.option("-q", "--quiet", is_flag=True, help="No progress bars, warnings only")
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        return f(*args, **kwargs)

    return wrapper


def setup_logging(verbose, quiet):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def read_config(config_file, seed, out, threads):
    config = load_config(config_file)
    overrides = {"seed": seed, "out": out, "threads": threads}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return config.replace("run", **overrides) if overrides else config


def execute(stages, config_file, seed, out, force, threads, verbose, quiet, check=False):
    """Run stages and exit with 0 (ok), 2 (config), 3 (stage failure) or 4 (failed check)."""
    setup_logging(verbose, quiet)
    try:
        config = read_config(config_file, seed, out, threads)
        forced = (stages or True) if force else ()
        result = pipeline.run_pipeline(config, stages, forced, not quiet)
    except ConfigException as e:
        click.secho(f"Config error: {e}", fg="red", err=True)
        sys.exit(EXIT_CONFIG)
    except StageFailureException as e:
        click.secho(f"Stage failed: {e}", fg="red", err=True)
        sys.exit(EXIT_STAGE)

    rows = [[stage, status] for stage, status in result.statuses.items()]
    click.echo(tabulate.tabulate(rows, headers=["Stage", "Status"], tablefmt="plain"))
    click.echo(f"Artifacts in {result.out} (config {result.config_hash[:12]})")
    if not check:
        return
    results = checks.run_checks(result.out)
    click.echo()
    click.echo(
        tabulate.tabulate(
            [[r.name, "PASS" if r.passed else "FAIL", r.detail] for r in results],
            headers=["Check", "Result", "Detail"],
            tablefmt="plain",
        )
    )
    failed = [r.name for r in results if not r.passed]
    if failed:
        click.secho(f"{len(failed)}/{len(results)} checks failed: {', '.join(failed)}", fg="red")
        sys.exit(EXIT_CHECK)
    click.secho(f"All {len(results)} checks passed", fg="green")


def stage_command(stage, help_text):
    @cli.command(name=stage, help=help_text)
    @common_options
    def command(**kwargs):
        execute([stage], **kwargs)

    return command


stage_command("gen-data", "Generate the train/test dataset.")
stage_command("train-denoiser", "Train the denoiser (and its EMA copy).")
stage_command("train-classifier", "Train the classifier on random labels until it memorizes.")
stage_command("sample", "Draw unguided DDIM, CPSample and rejection-sampler samples.")
stage_command("audit-sim", "Nearest-neighbour similarity and delta-ball reports.")
stage_command("audit-mia", "Membership inference Z-test, unprotected and with CPSample.")
stage_command("audit-perm", "Permutation test on a protected training subset.")
stage_command("verify-lemma", "Check the rejection-sampling bound on the CPSample run.")
stage_command("eval-frechet", "Fréchet distance of samples to held-out data.")
stage_command("sweep", "Try a grid of CPSample (alpha, scale) settings and tune one.")


@cli.command(name="run-all", aliases=["all"])
@common_options
@click.option("--check", is_flag=True, help="Evaluate acceptance checks; exit 4 on failure")
def run_all(check, **kwargs):
    """Run every stage, reusing fresh checkpoints."""
    execute(None, check=check, **kwargs)


@cli.command(aliases=["init"])
def config_template():
    """Output a template experiment config that you can then use to build your own."""
    with open(template_path()) as f:
        for line in f:
            print(line, end="")


if __name__ == "__main__":
    cli()

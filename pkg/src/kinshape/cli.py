"""Command-line entry point: ``kinshape <command> ...``.

Exit codes: 0 success, 1 failed check, 2 usage/config error, 3 data error,
4 numerical degeneracy, 5 training divergence.
"""

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from kinshape import data, evaluation, grassmann, gradcheck, network
from kinshape.errors import ConfigError, DataError, KinshapeError

EXIT_CHECK_FAILED = 1


def _load_config(path, section):
    """Read a YAML/JSON mapping; keys may sit at top level or under ``section``."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if section in raw:
        raw = raw[section]
        if not isinstance(raw, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
    return dict(raw)


def _train_config(config_path, **overrides):
    values = _load_config(config_path, "train")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return network.TrainConfig.from_dict(values)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _fmt(values):
    return ",".join(f"{v:.12g}" for v in values)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except KinshapeError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.exit_code)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(DataError.exit_code)


@click.group(cls=_Group)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Affine-invariant shape comparison and kinship verification."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(name)s: %(message)s")


_centering = click.option(
    "--centering", type=click.Choice(["on", "off"]), default="on", show_default=True,
    help="Subtract the landmark centroid before comparison.",
)


@cli.command()
@click.argument("shape_a", type=click.Path(dir_okay=False))
@click.argument("shape_b", type=click.Path(dir_okay=False))
@_centering
def compare(shape_a, shape_b, centering):
    """Compare two landmark files: prints ||B||_F and principal angles."""
    center = centering == "on"
    s0 = data.load_landmarks(shape_a, center=center)
    s1 = data.load_landmarks(shape_b, center=center)
    d0 = grassmann.shape_to_projector(s0, center=center)
    d1 = grassmann.shape_to_projector(s1, center=center)
    b = grassmann.aisc_forward(s0, s1, decomp0=d0, decomp1=d1)
    info = grassmann.geodesic_info(b, d0, d1)
    click.echo(f"frobenius_norm_B={float(np.linalg.norm(b)):.12g}")
    click.echo(f"principal_cosines={_fmt(info.principal_cosines)}")
    click.echo(f"principal_angles_deg={_fmt(np.degrees(info.principal_angles))}")
    click.echo(f"landmarks={d0.landmark_count}")
    click.echo(f"centering={centering}")


@cli.command("gradcheck")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--m", "m_values", type=click.IntRange(min=3), multiple=True,
              help="Landmark count(s); repeat the flag for several. Default: 5, 10, 68.")
@click.option("--trials", type=click.IntRange(min=1), default=100, show_default=True)
@_centering
def gradcheck_cmd(seed, m_values, trials, centering):
    """Check both AISC backward paths against central finite differences."""
    summary = gradcheck.run_gradcheck(
        seed=seed, m_values=m_values or (5, 10, 68), trials=trials, center=centering == "on"
    )
    click.echo(f"{'check':<20}{'max_rel_error':>16}{'tolerance':>12}  status")
    for name, err, tol in summary.rows():
        click.echo(f"{name:<20}{err:>16.3e}{tol:>12.0e}  {'PASS' if err < tol else 'FAIL'}")
    for form, err in summary.denominator_errors.items():
        click.echo(f"{'u_jacobian_' + form:<20}{err:>16.3e}")
    click.echo(f"denominator_form={summary.denominator_form}")
    click.echo(f"trials={summary.trials} skipped_degenerate={summary.skipped_degenerate} seed={seed}")
    if not summary.passed:
        sys.exit(EXIT_CHECK_FAILED)


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML/JSON synth config.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--families", type=click.IntRange(min=1), default=None, help="Override family_count.")
def synth(config_path, out_dir, seed, families):
    """Generate a synthetic kinship dataset in the on-disk formats."""
    values = _load_config(config_path, "synth")
    if seed is not None:
        values["seed"] = seed
    if families is not None:
        values["family_count"] = families
    config = data.SynthConfig.from_dict(values)
    samples = data.generate_synthetic(config)
    data.write_dataset(out_dir, samples)
    _write_json(Path(out_dir) / "synth_config.json", config.to_dict())
    click.echo(f"wrote {len(samples)} pairs to {out_dir}")


_jobs = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Folds evaluated in parallel.")


def _data_options(fn):
    fn = click.option("--seed", type=int, default=None, help="Training seed (overrides config).")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                      help="YAML/JSON train config.")(fn)
    fn = click.option("--data", "data_dir", type=click.Path(file_okay=False, exists=True), required=True)(fn)
    return fn


def _load_folded(data_dir, config, folds, fold_seed):
    samples = data.load_dataset(data_dir, center=config.center)
    if any(s.fold is None for s in samples):
        samples = data.assign_folds(samples, folds or 5, fold_seed)
    k = folds or len({s.fold for s in samples})
    return samples, k


@cli.command("train")
@_data_options
def train_cmd(data_dir, config_path, out_dir, seed):
    """Train on every pair in the dataset and write a checkpoint."""
    config = _train_config(config_path, seed=seed)
    samples = data.load_dataset(data_dir, center=config.center)
    result = network.train(samples, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    network.save_checkpoint(out / "checkpoint.json", result.model)
    _write_json(out / "history.json", {"config": config.to_dict(), "history": result.history})
    final = result.history[-1]["loss"] if result.history else float("nan")
    click.echo(f"trained on {len(samples)} pairs; final loss {final:.6g}; checkpoint {out / 'checkpoint.json'}")


@cli.command("eval")
@_data_options
@_jobs
@click.option("--folds", type=click.IntRange(min=2), default=None,
              help="Fold count (default: folds in the manifest, else 5).")
def eval_cmd(data_dir, config_path, out_dir, seed, jobs, folds):
    """K-fold cross-validation; writes report.txt and report.json."""
    config = _train_config(config_path, seed=seed)
    samples, k = _load_folded(data_dir, config, folds, config.seed)
    report = evaluation.cross_validate(samples, config, k, jobs=jobs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    click.echo(report.to_text(), nl=False)


@cli.command()
@_data_options
@_jobs
@click.option("--folds", type=click.IntRange(min=2), default=None)
def ablate(data_dir, config_path, out_dir, seed, jobs, folds):
    """Appearance-only / shape-only / fused cross-validated accuracy."""
    config = _train_config(config_path, seed=seed)
    samples, k = _load_folded(data_dir, config, folds, config.seed)
    table = evaluation.ablation(samples, config, k, jobs=jobs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(evaluation.ablation_text(table), encoding="utf-8")
    _write_json(out / "ablation.json", {"k": k, "rows": table, "config": config.to_dict()})
    click.echo(evaluation.ablation_text(table), nl=False)


def main(argv=None):
    cli.main(args=argv, prog_name="kinshape")


if __name__ == "__main__":
    main()

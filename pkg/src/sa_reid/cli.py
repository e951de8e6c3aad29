"""Command-line interface: ``sa-reid gen|train|eval|cam|gradcheck|compare --config PATH``."""
from collections import Counter
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click

from sa_reid.attention import sa_forward
from sa_reid.cam import attention_map_export, cam_gap, cam_sa, heatmap_export
from sa_reid.dataset import SPLITS, export_dir, generate_toy, load_dir, read_ppm
from sa_reid.exceptions import ConfigurationError, SaReidError
from sa_reid.experiments.attention_ablation import attention_is_not_worse, run_and_save_attention_ablation
from sa_reid.model import (
    ModelConfig,
    Params,
    check_params,
    classification_accuracy,
    load_checkpoint,
    save_checkpoint,
    stage_feature_maps,
    train,
)
from sa_reid.retrieval import evaluate_model, format_ranking_report, per_query_ap_table
from sa_reid.utils import (
    GRADCHECK_LAYERS,
    RunConfig,
    assert_gradients_pass,
    load_run_config,
    run_gradient_checks,
)

LOSS_LOG_FILE_NAME = "loss_log.csv"
PER_QUERY_AP_FILE_NAME = "per_query_ap.csv"


def _model_for_checkpoint(config: RunConfig, params: Params) -> ModelConfig:
    """The configured model with the class count stored in the checkpoint."""
    if "main.fc.weight" not in params:
        raise ConfigurationError("The checkpoint holds no 'main.fc.weight' tensor.")
    model_config = replace(config.model, num_classes=params["main.fc.weight"].shape[0])
    check_params(params, model_config)
    return model_config


def cmd_gen(config: RunConfig, out_dir: Optional[Path] = None) -> int:
    """Generate the toy benchmark and write it to ``out_dir`` (default: the configured data folder)."""
    out_dir = Path(out_dir or config.paths.data_dir)
    samples = generate_toy(config.toy, verbose=True)
    export_dir(samples, out_dir)
    counts = Counter(sample.split for sample in samples)
    for split in SPLITS:
        click.echo(f"{split} = {counts[split]}")
    return 0


def cmd_train(config: RunConfig, checkpoint: Optional[Path] = None, out_dir: Optional[Path] = None) -> int:
    """Train on the 'train' split of the data folder, then write the checkpoint and the loss log."""
    checkpoint = Path(checkpoint or config.paths.checkpoint)
    out_dir = Path(out_dir or config.paths.output_dir)
    samples = load_dir(config.paths.data_dir, splits=("train",))
    num_classes = len({sample.identity for sample in samples})
    model_config = replace(config.model, num_classes=num_classes)

    result = train(model_config, samples, config.training, verbose=True)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, checkpoint, cfg=model_config)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.loss_log.to_csv(out_dir / LOSS_LOG_FILE_NAME, index=False)

    accuracy = classification_accuracy(result.params, model_config, samples, result.label_map)
    click.echo(f"checkpoint = {checkpoint}")
    click.echo(f"train_accuracy = {accuracy:.6f}")
    return 0


def cmd_eval(config: RunConfig, checkpoint: Optional[Path] = None, out_dir: Optional[Path] = None) -> int:
    """Score cross-camera retrieval of the query split against the gallery split."""
    params = load_checkpoint(checkpoint or config.paths.checkpoint, cfg=config.model)
    model_config = _model_for_checkpoint(config, params)
    samples = load_dir(config.paths.data_dir, splits=("query", "gallery"))
    result = evaluate_model(params, model_config, samples, verbose=True)
    click.echo(format_ranking_report(result))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        per_query_ap_table(result).to_csv(out_dir / PER_QUERY_AP_FILE_NAME, index=False)
    return 0


def cmd_cam(
    config: RunConfig,
    image_path: Path,
    stage: int,
    class_id: int,
    mode: str = "gap",
    checkpoint: Optional[Path] = None,
    out_dir: Optional[Path] = None,
) -> int:
    """
    Export the class activation map of one deep-supervision branch for one image.

    Writes ``cam_stage<stage>_class<class_id>_<mode>.csv`` and ``.pgm``; with mode 'sa' also the attention
    weights as ``attention_stage<stage>.csv``.
    """
    params = load_checkpoint(checkpoint or config.paths.checkpoint, cfg=config.model)
    model_config = _model_for_checkpoint(config, params)
    if not 1 <= stage <= model_config.num_ds_branches:
        raise ConfigurationError(
            f"Stage {stage} has no deep-supervision head, expected a stage between 1 and "
            f"{model_config.num_ds_branches}."
        )
    if not 0 <= class_id < model_config.num_classes:
        raise ConfigurationError(f"Class {class_id} is out of range for {model_config.num_classes} classes.")

    feature_map = stage_feature_maps(params, model_config, read_ppm(image_path))[stage - 1]
    class_weights = params[f"ds{stage}.fc.weight"][class_id]
    out_dir = Path(out_dir or config.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"cam_stage{stage}_class{class_id}_{mode}"

    if mode == "sa":
        cam = cam_sa(feature_map, class_weights, class_id=class_id)
        _, attention, _ = sa_forward(feature_map)
        attention_path = attention_map_export(attention, out_dir / f"attention_stage{stage}.csv")
        click.echo(f"attention = {attention_path}")
    else:
        cam = cam_gap(feature_map, class_weights, class_id=class_id)
    click.echo(f"csv = {heatmap_export(cam, out_dir / f'{stem}.csv', format='csv')}")
    click.echo(f"pgm = {heatmap_export(cam, out_dir / f'{stem}.pgm', format='pgm')}")
    return 0


def cmd_gradcheck(config: RunConfig, corrupt_layer: Optional[str] = None) -> int:
    """Run the finite-difference suite and print the largest relative error of every layer."""
    report = run_gradient_checks(config.gradcheck, corrupt_layer=corrupt_layer, verbose=True)
    for row in report.itertuples():
        status = "ok" if row.passed else "FAILED"
        click.echo(f"{row.layer} = {row.max_relative_error:.3e} (tolerance {row.tolerance:.0e}) {status}")
    assert_gradients_pass(report)
    return 0


def cmd_compare(config: RunConfig, out_dir: Optional[Path] = None) -> int:
    """Attention ablation on the toy benchmark; exit code 1 when attention loses more than the tolerance."""
    summary = run_and_save_attention_ablation(config, out_dir or config.paths.output_dir)
    for key, value in summary.items():
        click.echo(f"{key} = {value:.6f}")
    return 0 if attention_is_not_worse(summary) else 1


def _run(command, *args, **kwargs) -> None:
    try:
        exit_code = command(*args, **kwargs)
    except (SaReidError, OSError) as error:
        raise click.ClickException(str(error))
    if exit_code:
        click.get_current_context().exit(exit_code)


config_option = click.option(
    "--config",
    "config_file_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Key-value configuration file (key = value per line, # comments).",
)
seed_option = click.option("--seed", type=int, default=None, help="Overrides the seed of the configuration.")
checkpoint_option = click.option(
    "--checkpoint", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Checkpoint file."
)
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None)


def _load(config_file_path: Path, seed: Optional[int]) -> RunConfig:
    try:
        return load_run_config(config_file_path, seed=seed)
    except SaReidError as error:
        raise click.ClickException(str(error))


@click.group()
def main():
    """Parameter-free spatial attention for person re-identification on a synthetic benchmark."""


@main.command("gen")
@config_option
@seed_option
@out_option
def gen(config_file_path, seed, out_dir):
    """Generate the synthetic dataset."""
    _run(cmd_gen, _load(config_file_path, seed), out_dir=out_dir)


@main.command("train")
@config_option
@seed_option
@checkpoint_option
@out_option
def train_command(config_file_path, seed, checkpoint, out_dir):
    """Train and write a checkpoint and a loss log."""
    _run(cmd_train, _load(config_file_path, seed), checkpoint=checkpoint, out_dir=out_dir)


@main.command("eval")
@config_option
@seed_option
@checkpoint_option
@out_option
def eval_command(config_file_path, seed, checkpoint, out_dir):
    """Evaluate cross-camera retrieval (CMC and mAP)."""
    _run(cmd_eval, _load(config_file_path, seed), checkpoint=checkpoint, out_dir=out_dir)


@main.command("cam")
@config_option
@seed_option
@checkpoint_option
@out_option
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--stage", required=True, type=int, help="Stage whose deep-supervision head is visualised.")
@click.option("--class-id", required=True, type=int)
@click.option("--mode", type=click.Choice(["gap", "sa"]), default="gap", show_default=True)
def cam_command(config_file_path, seed, checkpoint, out_dir, image_path, stage, class_id, mode):
    """Export the class activation map of one image."""
    _run(
        cmd_cam,
        _load(config_file_path, seed),
        image_path=image_path,
        stage=stage,
        class_id=class_id,
        mode=mode,
        checkpoint=checkpoint,
        out_dir=out_dir,
    )


@main.command("gradcheck")
@config_option
@seed_option
@click.option("--corrupt-layer", type=click.Choice(GRADCHECK_LAYERS), default=None, hidden=True)
def gradcheck(config_file_path, seed, corrupt_layer):
    """Check every analytic gradient against finite differences."""
    _run(cmd_gradcheck, _load(config_file_path, seed), corrupt_layer=corrupt_layer)


@main.command("compare")
@config_option
@seed_option
@out_option
def compare(config_file_path, seed, out_dir):
    """Compare retrieval with and without spatial attention over several seeds."""
    _run(cmd_compare, _load(config_file_path, seed), out_dir=out_dir)


if __name__ == "__main__":
    main()

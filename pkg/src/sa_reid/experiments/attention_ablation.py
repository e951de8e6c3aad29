from dataclasses import replace
from pathlib import Path
from typing import Dict, Optional, Union

import pandas as pd
from tqdm import tqdm

from sa_reid.dataset import generate_toy, select_split
from sa_reid.model import train
from sa_reid.retrieval import evaluate_model
from sa_reid.utils import RunConfig, load_run_config

# variant name -> (sa_on_backbone, sa_on_ds)
ABLATION_VARIANTS = {
    "no_sa": (False, False),
    "sa": (False, True),
    "backbone_sa": (True, True),
}
ABLATION_COLUMNS = ["seed", "variant", "sa_on_backbone", "sa_on_ds", "rank_1", "map"]
# largest tolerated average rank-1 deficit of the attention model
ABLATION_TOLERANCE = 0.02


def run_attention_ablation(config: RunConfig, verbose: bool = True) -> pd.DataFrame:
    """
    Train and evaluate every attention placement of ``ABLATION_VARIANTS`` for each comparison seed.

    The variants are no attention at all, attention on the deep-supervision branches, and attention on both the
    deep-supervision branches and the last backbone feature map. Every seed of ``config.training.compare_seeds``
    trains all variants from the same initialisation seed on the same occluded-camera toy benchmark.

    Parameters
    ----------
    config : RunConfig
        The run configuration; ``config.toy`` defines the benchmark.
    verbose : bool, default: True
        Whether to show a progress bar over the runs.

    Returns
    -------
    pd.DataFrame
        One row per (seed, variant) with the columns of ``ABLATION_COLUMNS``.
    """
    samples = generate_toy(config.toy)
    train_samples = select_split(samples, "train")
    num_classes = len({sample.identity for sample in train_samples})

    runs = [(seed, variant) for seed in config.training.compare_seeds for variant in ABLATION_VARIANTS]
    rows = []
    progress_bar = tqdm(total=len(runs), desc="Attention ablation", unit="run", disable=not verbose)
    for seed, variant in runs:
        sa_on_backbone, sa_on_ds = ABLATION_VARIANTS[variant]
        model_config = replace(
            config.model, seed=seed, sa_on_backbone=sa_on_backbone, sa_on_ds=sa_on_ds, num_classes=num_classes
        )
        result = train(model_config, train_samples, config.training, verbose=False)
        ranking = evaluate_model(result.params, model_config, samples)
        rows.append(
            dict(
                seed=seed,
                variant=variant,
                sa_on_backbone=sa_on_backbone,
                sa_on_ds=sa_on_ds,
                rank_1=ranking.rank(1),
                map=ranking.map,
            )
        )
        progress_bar.update(1)
    progress_bar.close()
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)


def summarize_ablation(table: pd.DataFrame) -> Dict[str, float]:
    """
    Mean rank-1 and mAP of every variant, then the rank-1 gaps of both attention variants over 'no_sa'.

    ``rank_1_gap`` compares deep-supervision attention with no attention, ``backbone_rank_1_gap`` compares
    attention on both placements with no attention. Variants absent from ``table`` are left out.
    """
    means = table.groupby("variant")[["rank_1", "map"]].mean()
    summary = {}
    for variant in ABLATION_VARIANTS:
        if variant in means.index:
            summary[f"{variant}_rank_1"] = float(means.loc[variant, "rank_1"])
            summary[f"{variant}_map"] = float(means.loc[variant, "map"])
    if "no_sa_rank_1" in summary:
        for variant, gap_name in (("sa", "rank_1_gap"), ("backbone_sa", "backbone_rank_1_gap")):
            if f"{variant}_rank_1" in summary:
                summary[gap_name] = summary[f"{variant}_rank_1"] - summary["no_sa_rank_1"]
    return summary


def attention_is_not_worse(summary: Dict[str, float], tolerance: float = ABLATION_TOLERANCE) -> bool:
    """Deep-supervision attention loses at most ``tolerance`` average rank-1 against no attention."""
    return summary["rank_1_gap"] >= -tolerance


def run_and_save_attention_ablation(
    config: RunConfig, output_folder_path: Union[str, Path], verbose: bool = True
) -> Dict[str, float]:
    """Run the ablation, write the per-run table to 'attention_ablation.csv' and return the summary."""
    output_folder_path = Path(output_folder_path)
    output_folder_path.mkdir(parents=True, exist_ok=True)
    table = run_attention_ablation(config, verbose=verbose)
    table.to_csv(output_folder_path / "attention_ablation.csv", index=False)
    return summarize_ablation(table)


if __name__ == "__main__":
    # Parameters for the ablation

    # The key-value configuration file, when set to None the packaged defaults are used
    config_file_path: Optional[Path] = None

    # Overrides the seed of the configuration
    seed = None

    # The folder where the per-run table is written
    output_folder_path = Path("outputs")

    run_config = load_run_config(config_file_path, seed=seed)
    ablation_summary = run_and_save_attention_ablation(config=run_config, output_folder_path=output_folder_path)
    for key, value in ablation_summary.items():
        print(f"{key} = {value:.6f}")

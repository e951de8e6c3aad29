import re
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from numpy.testing import assert_array_equal

from sa_reid.cli import main
from sa_reid.model import init_params, load_checkpoint
from sa_reid.utils import GRADCHECK_LAYERS, load_run_config

KEY_VALUE_LINE = re.compile(r"^(?P<key>\w+) = (?P<value>.*)$")


def key_values(output: str) -> dict:
    """The ``key = value`` lines of a command's output; progress bars are ignored."""
    lines = (line.rsplit("\r", 1)[-1] for line in output.splitlines())
    return {match["key"]: match["value"] for match in map(KEY_VALUE_LINE.match, lines) if match}


@pytest.fixture
def workspace(tmp_path, write_config):
    """A small configuration whose data folder and outputs live under ``tmp_path``."""
    config_path = write_config(
        "seed = 3\n"
        "num_identities = 6\n"
        "images_per_identity_per_camera = 2\n"
        "image_height = 16\n"
        "image_width = 8\n"
        "noise_std = 0\n"
        "stage_channels = 4, 6\n"
        "stage_downsample = true, false\n"
        "reduced_dim = 4\n"
        "epochs = 1\n"
        "batch_size = 4\n"
        "compare_seeds = 0\n"
        f"data_dir = {tmp_path / 'data'}\n"
        f"checkpoint = {tmp_path / 'model.sapl'}\n"
        f"output_dir = {tmp_path / 'outputs'}\n"
        "num_random_cases = 5\n"
        "num_layer_cases = 2\n"
    )
    return tmp_path, config_path


def invoke(*args):
    return CliRunner().invoke(main, [str(arg) for arg in args])


@pytest.fixture
def trained_workspace(workspace):
    tmp_path, config_path = workspace
    assert invoke("gen", "--config", config_path).exit_code == 0
    result = invoke("train", "--config", config_path)
    assert result.exit_code == 0, result.output
    return tmp_path, config_path


def test_gen_writes_every_split_reproducibly(workspace):
    tmp_path, config_path = workspace
    result = invoke("gen", "--config", config_path)
    assert result.exit_code == 0, result.output
    assert key_values(result.output) == {"train": "12", "query": "6", "gallery": "6"}
    files = sorted((tmp_path / "data").rglob("*.ppm"))
    assert len(files) == 24
    first_bytes = [path.read_bytes() for path in files]

    other = tmp_path / "again"
    assert invoke("gen", "--config", config_path, "--out", other).exit_code == 0
    assert [path.read_bytes() for path in sorted(other.rglob("*.ppm"))] == first_bytes


def test_gen_into_unwritable_location_fails(workspace):
    tmp_path, config_path = workspace
    blocker = tmp_path / "blocker"
    blocker.write_text("not a folder")
    result = invoke("gen", "--config", config_path, "--out", blocker / "data")
    assert result.exit_code != 0


def test_missing_config_is_a_usage_error(tmp_path):
    result = invoke("gen", "--config", tmp_path / "absent.cfg")
    assert result.exit_code == 2


def test_invalid_config_value_fails(write_config):
    result = invoke("gen", "--config", write_config("lam = 2\n"))
    assert result.exit_code == 1
    assert "model.lam" in result.output


def test_train_then_eval(trained_workspace):
    tmp_path, config_path = trained_workspace
    assert (tmp_path / "model.sapl").exists()
    loss_log = pd.read_csv(tmp_path / "outputs" / "loss_log.csv")
    assert len(loss_log) == 1
    assert np.isfinite(loss_log["total_loss"]).all()

    result = invoke("eval", "--config", config_path, "--out", tmp_path / "eval")
    assert result.exit_code == 0, result.output
    report = key_values(result.output)
    assert list(report) == ["cmc_1", "cmc_5", "cmc_10", "map", "skipped"]
    assert 0.0 <= float(report["cmc_1"]) <= float(report["cmc_5"]) <= float(report["cmc_10"]) <= 1.0
    assert report["skipped"] == "0"
    per_query = pd.read_csv(tmp_path / "eval" / "per_query_ap.csv")
    assert per_query["query_index"].tolist() == list(range(6))


def test_train_reruns_are_byte_identical(workspace):
    tmp_path, config_path = workspace
    assert invoke("gen", "--config", config_path).exit_code == 0
    for name in ("a", "b"):
        checkpoint, out_dir = tmp_path / f"{name}.sapl", tmp_path / name
        result = invoke("train", "--config", config_path, "--checkpoint", checkpoint, "--out", out_dir)
        assert result.exit_code == 0, result.output
    assert (tmp_path / "a.sapl").read_bytes() == (tmp_path / "b.sapl").read_bytes()
    assert (tmp_path / "a" / "loss_log.csv").read_bytes() == (tmp_path / "b" / "loss_log.csv").read_bytes()


def test_zero_epochs_writes_the_initial_parameters(workspace, write_config):
    tmp_path, config_path = workspace
    zero_epochs_path = write_config(config_path.read_text().replace("epochs = 1\n", "epochs = 0\n"), "zero.cfg")
    assert invoke("gen", "--config", zero_epochs_path).exit_code == 0
    result = invoke("train", "--config", zero_epochs_path)
    assert result.exit_code == 0, result.output

    expected = init_params(replace(load_run_config(zero_epochs_path).model, num_classes=6))
    loaded = load_checkpoint(tmp_path / "model.sapl")
    assert list(loaded) == list(expected)
    for name in expected:
        assert_array_equal(loaded[name], expected[name])
    assert len(pd.read_csv(tmp_path / "outputs" / "loss_log.csv")) == 0


def test_eval_rejects_a_checkpoint_of_another_architecture(trained_workspace, write_config):
    tmp_path, config_path = trained_workspace
    backbone_path = write_config(config_path.read_text() + "sa_on_backbone = true\n", "backbone.cfg")
    result = invoke("eval", "--config", backbone_path)
    assert result.exit_code == 1
    assert "different architecture" in result.output
    assert "sa_on_backbone" in result.output


def test_eval_rejects_a_foreign_checkpoint(trained_workspace):
    tmp_path, config_path = trained_workspace
    bogus = tmp_path / "bogus.sapl"
    bogus.write_bytes(b"NOTACHECKPOINT" + bytes(16))
    result = invoke("eval", "--config", config_path, "--checkpoint", bogus)
    assert result.exit_code == 1
    assert "bad magic" in result.output


def test_eval_without_checkpoint_fails(workspace):
    tmp_path, config_path = workspace
    assert invoke("gen", "--config", config_path).exit_code == 0
    result = invoke("eval", "--config", config_path)
    assert result.exit_code == 1
    assert "does not exist" in result.output


@pytest.mark.parametrize("mode", ["gap", "sa"])
def test_cam_exports(trained_workspace, mode):
    tmp_path, config_path = trained_workspace
    image = sorted((tmp_path / "data" / "query").glob("*.ppm"))[0]
    out_dir = tmp_path / "cams"
    result = invoke(
        "cam", "--config", config_path, "--image", image, "--stage", 1, "--class-id", 2, "--mode", mode, "--out", out_dir
    )
    assert result.exit_code == 0, result.output
    cam = np.loadtxt(out_dir / f"cam_stage1_class2_{mode}.csv", delimiter=",")
    assert cam.shape == (8, 4)
    assert (out_dir / f"cam_stage1_class2_{mode}.pgm").read_bytes().startswith(b"P5\n4 8\n255\n")
    if mode == "sa":
        attention = np.loadtxt(out_dir / "attention_stage1.csv", delimiter=",")
        assert attention.shape == (8, 4)
        assert np.isclose(attention.sum(), 1.0, atol=1e-5)


@pytest.mark.parametrize("stage, class_id", [(2, 0), (0, 0), (1, 3)])
def test_cam_rejects_out_of_range_arguments(trained_workspace, stage, class_id):
    tmp_path, config_path = trained_workspace
    image = sorted((tmp_path / "data" / "query").glob("*.ppm"))[0]
    result = invoke("cam", "--config", config_path, "--image", image, "--stage", stage, "--class-id", class_id)
    assert result.exit_code == 1


def test_gradcheck_passes(workspace):
    _, config_path = workspace
    result = invoke("gradcheck", "--config", config_path)
    assert result.exit_code == 0, result.output
    report = key_values(result.output)
    assert list(report) == list(GRADCHECK_LAYERS)
    assert all(value.endswith(" ok") for value in report.values())


def test_gradcheck_catches_a_corrupted_backward(workspace):
    _, config_path = workspace
    result = invoke("gradcheck", "--config", config_path, "--corrupt-layer", "sa")
    assert result.exit_code == 1
    assert key_values(result.output)["sa"].endswith("FAILED")
    assert "'sa'" in result.output


@pytest.mark.slow
def test_compare_writes_the_run_table(workspace):
    tmp_path, config_path = workspace
    result = invoke("compare", "--config", config_path)
    assert result.exit_code in (0, 1), result.output
    report = key_values(result.output)
    assert {"no_sa_rank_1", "sa_rank_1", "backbone_sa_rank_1", "rank_1_gap", "backbone_rank_1_gap"} <= set(report)
    table = pd.read_csv(tmp_path / "outputs" / "attention_ablation.csv")
    assert table["variant"].tolist() == ["no_sa", "sa", "backbone_sa"]
    assert table["sa_on_backbone"].tolist() == [False, False, True]
    assert table["sa_on_ds"].tolist() == [False, True, True]

import json

import numpy as np
import pytest
from click.testing import CliRunner

from right_reasons.config.config import DEFAULT_CONFIG_PATH, build_config, flatten, load_config_file, unflatten
from right_reasons.datasets.schema import LabeledDataset, TextKind
from right_reasons.datasets.storage import load_dataset
from right_reasons.errors.harness import CheckpointError, ConfigError, DriverError
from right_reasons.harness import experiments, reports
from right_reasons.harness.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from right_reasons.harness.data import ExperimentData
from right_reasons.harness.experiments import DriverOutput, IndexDocument, boundary_grid, history_rows
from right_reasons.main import cli, run
from right_reasons.model.mlp import init_params
from right_reasons.training.settings import RrrConfig
from right_reasons.training.trainer import train


@pytest.fixture
def output_dir(tmp_path):
    return tmp_path / "out"


def test_checkpoint_round_trip_is_bitwise(tmp_path, rng):
    params = init_params(5, 3, seed=0, hidden_sizes=(4,))
    # values with long decimal expansions
    arrays = [array + rng.normal(scale=1e-3, size=array.shape) for array in params.arrays()]
    params = type(params).from_arrays(arrays)
    path = tmp_path / "model.json"
    save_checkpoint(Checkpoint.from_params(params, RrrConfig(), "abc", {"test_accuracy": 0.5}), path)

    loaded = load_checkpoint(path)
    for before, after in zip(params.arrays(), loaded.to_params().arrays(), strict=True):
        assert before.tobytes() == after.tobytes()
    assert loaded.dataset_fingerprint == "abc"
    assert loaded.metrics == {"test_accuracy": 0.5}


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(CheckpointError):
        load_checkpoint(broken)
    broken.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(CheckpointError, match="format version 99"):
        load_checkpoint(broken)
    broken.write_text(json.dumps({"format_version": 1, "layer_sizes": [1]}))
    with pytest.raises(CheckpointError):
        load_checkpoint(broken)


def test_flatten_and_unflatten():
    nested = {"training": {"lambda1": 10.0, "adam": {"learning_rate": 0.01}}, "annotation": "full"}
    flat = flatten(nested)
    assert flat == {"training.lambda1": 10.0, "training.adam.learning_rate": 0.01, "annotation": "full"}
    assert unflatten(flat) == nested
    with pytest.raises(ConfigError):
        unflatten({"training": 1, "training.lambda1": 2})


def test_default_config_file_matches_model_defaults():
    config = build_config(load_config_file(DEFAULT_CONFIG_PATH), {})
    assert config.training == RrrConfig()
    assert config.dataset.name == "toy-color"
    assert config.explain.cutoff == 0.67
    assert config.surrogate.scheme.num_samples == 5000


def test_overrides_win(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("training:\n  lambda1: 5.0\ndataset.seed: 3\n")
    config = build_config(load_config_file(path), {"training.lambda1": 7.0, "dataset.n": None})
    assert config.training.lambda1 == 7.0
    assert config.dataset.seed == 3
    assert config.dataset.resolved_test_seed == 4


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.yaml")
    path = tmp_path / "bad.yaml"
    path.write_text("training: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config_file(path)
    path.write_text("- a list\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


@pytest.mark.parametrize(
    ("value", "expected"),
    [(None, ""), (True, "1"), (False, "0"), (3, "3"), (0.1, "0.1"), (np.float64(1 / 3), "0.3333333333333333"), (np.int64(4), "4"), ("x", "x")],
)
def test_format_value(value, expected):
    assert reports.format_value(value) == expected


def test_write_csv(tmp_path):
    path = reports.write_csv(tmp_path / "rows.csv", ("a", "b"), [{"a": 1, "b": None}, {"b": 2.5, "a": 2}])
    assert path.read_text() == "a,b\n1,\n2,2.5\n"
    assert reports.read_csv(path) == [{"a": "1", "b": ""}, {"a": "2", "b": "2.5"}]
    with pytest.raises(DriverError):
        reports.write_csv(tmp_path / "bad.csv", ("a",), [{"a": 1, "extra": 2}])


def test_history_rows_start_at_initialization(small_dataset, quick_config):
    _, history = train(quick_config.model_copy(update={"epochs": 2}), small_dataset)
    rows = history_rows(history)
    assert [row["epoch"] for row in rows] == [0, 1, 2]
    assert rows[0]["train_accuracy"] is None
    assert rows[0]["total"] == history.initial.total
    assert tuple(rows[0]) == reports.HISTORY_COLUMNS


def test_boundary_grid_covers_the_data():
    X = np.array([[0.0, 0.0], [1.0, 2.0]])
    points = boundary_grid(X, 3)
    assert points.shape == (9, 2)
    np.testing.assert_allclose(points[:3, 0], [-0.5, 0.5, 1.5])
    np.testing.assert_allclose(points[::3, 1], [-0.5, 1.0, 2.5])


def test_cli_runs_a_driver_and_writes_metadata(mocker, output_dir):
    driver = mocker.Mock(return_value=DriverOutput(files=[output_dir / "a.csv"], metrics={"score": 1.0}))
    mocker.patch.dict("right_reasons.main.DRIVERS", {"train": driver})
    assert run(["train", "--lambda1", "5", "--seed", "2", "--hidden-sizes", "8,4", "--output-dir", str(output_dir)]) == 0

    config = driver.call_args.args[0]
    assert config.experiment == "train"
    assert config.training.lambda1 == 5.0
    assert config.training.seed == 2 and config.dataset.seed == 2
    assert config.training.hidden_sizes == [8, 4]
    metadata = json.loads((output_dir / "run-metadata.json").read_text())
    assert metadata["subcommand"] == "train"
    assert metadata["files"] == ["a.csv"]
    assert metadata["seeds"] == {"dataset": 2, "test_dataset": 3, "training": 2}
    assert "--lambda1" in metadata["argv"]


def test_cli_fae_flags(mocker, output_dir):
    driver = mocker.Mock(return_value=DriverOutput())
    mocker.patch.dict("right_reasons.main.DRIVERS", {"fae": driver})
    assert run(["fae", "--cutoff", "0.5", "--lambda1-schedule", "1e3,1e6", "--output-dir", str(output_dir)]) == 0
    fae = driver.call_args.args[0].fae
    assert fae.cutoff == 0.5
    assert fae.lambda1_schedule == [1e3, 1e6]
    assert "lambda1_schedule" in fae.model_fields_set


@pytest.mark.parametrize(
    "argv",
    [
        ["no-such-command"],
        ["train", "--no-such-flag"],
        ["train", "--epochs", "-1"],
        ["train", "--hidden-sizes", "a,b"],
        ["--config-file", "/nonexistent/config.yaml", "train"],
    ],
)
def test_cli_configuration_errors_exit_1(mocker, output_dir, argv):
    driver = mocker.Mock(return_value=DriverOutput())
    mocker.patch.dict("right_reasons.main.DRIVERS", {"train": driver})
    assert run([*argv, "--output-dir", str(output_dir)] if argv[0] == "train" else argv) == 1
    driver.assert_not_called()


def test_cli_driver_failure_exits_2(mocker, output_dir):
    mocker.patch.dict("right_reasons.main.DRIVERS", {"train": mocker.Mock(side_effect=RuntimeError("boom"))})
    assert run(["train", "--output-dir", str(output_dir)]) == 2


def test_cli_driver_config_error_exits_1(mocker, output_dir):
    mocker.patch.dict("right_reasons.main.DRIVERS", {"train": mocker.Mock(side_effect=ConfigError("needs --mnist-dir"))})
    assert run(["train", "--output-dir", str(output_dir)]) == 1


def test_gen_data_end_to_end(output_dir):
    assert run(["gen-data", "--n", "20", "--test-n", "10", "--annotation", "corners", "--output-dir", str(output_dir)]) == 0
    train_set = load_dataset(output_dir / "train.csv")
    assert train_set.n_examples == 20
    assert train_set.A.sum() == 20 * 12
    assert load_dataset(output_dir / "test.csv").A.sum() == 0


def test_train_and_explain_end_to_end(output_dir):
    common = ["--dataset", "toy-2d-two-class", "--n", "40", "--test-n", "20", "--epochs", "2", "--hidden-sizes", "6"]
    assert run(["train", *common, "--output-dir", str(output_dir)]) == 0
    checkpoint = load_checkpoint(output_dir / "model.json")
    assert checkpoint.layer_sizes == [2, 6, 2]
    assert reports.read_csv(output_dir / "history.csv")[0]["epoch"] == "0"

    explained = output_dir / "explained"
    assert run(["explain", *common, "--checkpoint", str(output_dir / "model.json"), "--output-dir", str(explained)]) == 0
    summary = reports.read_csv(explained / "explain_summary.csv")[0]
    assert summary["examples"] == "20"
    assert summary["corner_share"] == ""
    assert not (explained / "model.json").exists()


def test_boundary_field_driver(output_dir):
    config = build_config(
        load_config_file(DEFAULT_CONFIG_PATH),
        {
            "experiment": "boundary-field",
            "dataset.name": "toy-2d-three-class",
            "dataset.n": 30,
            "dataset.test_n": 15,
            "training.epochs": 1,
            "training.hidden_sizes": [4],
            "sweeps.grid_resolution": 4,
            "output_dir": str(output_dir),
        },
    )
    output = experiments.run_boundary_field(config)
    rows = reports.read_csv(output_dir / "boundary_field.csv")
    assert len(rows) == 16
    assert tuple(rows[0]) == reports.BOUNDARY_FIELD_COLUMNS
    assert output.metrics["points"] == 16


def test_lambda_sweep_needs_four_decades(output_dir):
    config = build_config({}, {"sweeps.lambda1_grid": [1.0, 10.0, 100.0], "output_dir": str(output_dir)})
    with pytest.raises(ConfigError):
        experiments.run_lambda_sweep(config)


def test_data_efficiency_is_toy_color_only(output_dir):
    config = build_config({}, {"dataset.name": "iris-cancer", "output_dir": str(output_dir)})
    with pytest.raises(ConfigError):
        experiments.run_data_efficiency(config)


SMALL_RUN = ["--n", "40", "--test-n", "20", "--epochs", "1", "--hidden-sizes", "4"]


def invoke(args):
    result = CliRunner().invoke(cli, args, obj={"argv": args})
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture
def text_data(rng):
    """A tiny bag-of-words corpus; the first test document is empty."""
    vocabulary = ["god", "church", "atheism", "bible", "reason", "faith"]
    counts = rng.integers(1, 3, size=(36, 6)) * (rng.random((36, 6)) < 0.7)
    counts[:, :3] = np.maximum(counts[:, :3], 1)
    counts[30] = 0
    labels = (counts[:, 1] > counts[:, 2]).astype(int)

    def dataset(rows, split):
        kind = TextKind(vocabulary=vocabulary)
        return LabeledDataset(name="text", X=counts[rows] / 2.0, y=np.eye(2)[labels[rows]], kind=kind, split=split)

    return ExperimentData(train=dataset(slice(0, 30), "train"), test=dataset(slice(30, 36), "test"))


def test_surrogate_skips_empty_documents(mocker, output_dir, text_data):
    mocker.patch("right_reasons.harness.experiments.load_experiment_data", return_value=text_data)
    args = ["surrogate", "--epochs", "1", "--hidden-sizes", "8", "--instances", "6", "--reseeds", "2", "--num-samples", "60", "--k", "2"]
    invoke([*args, "--output-dir", str(output_dir)])

    fidelity = reports.read_csv(output_dir / "fidelity.csv")
    assert [row["example"] for row in fidelity] == [str(example) for example in range(6)]
    assert fidelity[0]["degenerate"] == "1"
    assert fidelity[0]["sign_agreement"] == ""
    assert {row["example"] for row in reports.read_csv(output_dir / "surrogate.csv")} == {str(example) for example in range(1, 6)}

    stability = reports.read_csv(output_dir / "stability.csv")
    assert [row["method"] for row in stability] == ["surrogate", "gradient"]
    assert stability[1]["mean_jaccard"] == "1.0"
    metrics = json.loads((output_dir / "run-metadata.json").read_text())["metrics"]
    assert metrics["skipped_examples"] == 1
    assert 0.0 <= metrics["mean_sign_agreement"] <= 1.0


def test_fae_cli_writes_checkpoints_and_index(output_dir):
    args = ["fae", *SMALL_RUN, "--max-iterations", "2", "--lambda1-schedule", "10,100", "--accuracy-floor", "0", "--overlap-ceiling", "1"]
    invoke([*args, "--output-dir", str(output_dir)])

    index = IndexDocument.model_validate_json((output_dir / "fae" / "index.json").read_text())
    assert index.format_version == 1
    assert index.stop_reason == "max-iterations"
    assert index.iterations == ["fae/iteration-0.json", "fae/iteration-1.json"]
    assert index.lambda1_schedule == [10.0, 100.0]
    assert 0.0 <= index.mean_test_disagreement <= 1.0
    for path, lambda1 in zip(index.iterations, [10.0, 100.0], strict=True):
        checkpoint = load_checkpoint(output_dir / path)
        assert checkpoint.layer_sizes == [75, 4, 2]
        assert checkpoint.config.lambda1 == lambda1

    trace = reports.read_csv(output_dir / "fae_trace.csv")
    assert [row["iteration"] for row in trace] == ["0", "1"]
    assert float(trace[0]["annotated_fraction"]) == 0.0
    assert tuple(trace[0]) == reports.FAE_COLUMNS


def test_rule_transitions_cli(output_dir):
    args = ["rule-transitions", *SMALL_RUN, "--transition-grid", "0,10", "--annotated-counts", "0,5", "--examples", "10"]
    assert run([*args, "--output-dir", str(output_dir)]) == 0
    rows = reports.read_csv(output_dir / "rule_transitions.csv")
    assert [(row["lambda1"], row["annotated"]) for row in rows] == [("0.0", "0"), ("0.0", "5"), ("10.0", "0"), ("10.0", "5")]
    assert all(float(row["corner_share"]) + float(row["top_middle_share"]) <= 1.0 + 1e-12 for row in rows)


def test_confound_report_cli(output_dir):
    assert run(["confound-report", *SMALL_RUN, "--splits", "2", "--output-dir", str(output_dir)]) == 0
    rows = reports.read_csv(output_dir / "confound_report.csv")
    assert [row["variant"] for row in rows] == ["full", "full", "zero", "zero"]
    summary = reports.read_csv(output_dir / "confound_summary.csv")
    assert len(summary) == 6
    assert {row["runs"] for row in summary} == {"2"}


def test_data_efficiency_cli(output_dir):
    args = ["data-efficiency", *SMALL_RUN, "--n-grid", "20,40", "--variants", "none,pro-rule1", "--grid", "1,10,100", "--trial-epochs", "1"]
    assert run([*args, "--output-dir", str(output_dir)]) == 0
    rows = reports.read_csv(output_dir / "data_efficiency.csv")
    assert [(row["variant"], row["n"]) for row in rows] == [("none", "20"), ("none", "40"), ("pro-rule1", "20"), ("pro-rule1", "40")]
    assert rows[0]["lambda1"] == "0.0"
    assert float(rows[2]["lambda1"]) in (1.0, 10.0, 100.0)

"""End-to-end command-line behaviour."""

import dataclasses

import numpy as np
import pytest

from handgeo.cli import main
from handgeo.classifiers import MlpModel, RbfModel, TemplateDb, load_model
from handgeo.features import load_features, save_features
from handgeo.imaging import save_bmp
from handgeo.synthgen import canonical_params, render


def tree_bytes(root):
    return {
        path.relative_to(root): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


@pytest.fixture()
def features_csv(tmp_path):
    """Synthetic, well-separated features: 3 persons, samples 0..9."""
    rng = np.random.default_rng(1)
    centres = rng.uniform(-1, 1, size=(3, 9))
    entries = [
        (p, j, centres[p] + rng.normal(0, 0.05, 9))
        for p in range(3)
        for j in range(10)
    ]
    path = tmp_path / "features.csv"
    save_features(path, entries)
    return path


class TestGen:
    def test_same_seed_writes_byte_identical_trees(self, tmp_path):
        args = ["--seed", "5", "--persons", "2", "--samples", "3"]
        assert main(["gen", "--out", str(tmp_path / "a")] + args) == 0
        assert main(["gen", "--out", str(tmp_path / "b")] + args) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_flags_override_the_config_file(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("persons=2\nsamples=3\nseed=5\n")
        out = tmp_path / "c"
        assert main(["gen", "--config", str(cfg), "--out", str(out), "--persons", "3"]) == 0
        assert (out / "person_02").is_dir()

    def test_unknown_config_key_fails_cleanly(self, tmp_path, capsys):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("person_count=2\n")
        assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
        assert capsys.readouterr().err.startswith("config_error:")

    def test_missing_out_fails_cleanly(self, capsys):
        assert main(["gen"]) == 1
        assert capsys.readouterr().err.startswith("config_error:")


class TestExtract:
    def test_single_image_yields_one_row(self, tmp_path):
        img, _ = render(canonical_params(), noise_level=0.0)
        bmp = tmp_path / "hand.bmp"
        save_bmp(img, bmp)
        out = tmp_path / "row.csv"
        code = main(
            ["extract", "--input", str(bmp), "--out", str(out), "--person", "4"]
        )
        assert code == 0
        rows = load_features(out)
        assert len(rows) == 1 and rows[0][0] == 4

    def test_corpus_tree_yields_all_rows(self, tmp_path):
        corpus_dir = tmp_path / "corpus"
        main(["gen", "--out", str(corpus_dir), "--persons", "2", "--samples", "3"])
        out = tmp_path / "all.csv"
        assert main(["extract", "--input", str(corpus_dir), "--out", str(out)]) == 0
        assert len(load_features(out)) == 6

    def test_merged_fingers_exit_with_a_landmark_error(self, tmp_path, capsys):
        params = canonical_params()
        bad = dataclasses.replace(params, palm_width=params.palm_width - 90)
        img, _ = render(bad, allow_defects=True)
        bmp = tmp_path / "merged.bmp"
        save_bmp(img, bmp)
        code = main(["extract", "--input", str(bmp), "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert capsys.readouterr().err.startswith("landmark_error:")
        assert not (tmp_path / "x.csv").exists()

    def test_missing_file_reports_an_io_error(self, tmp_path, capsys):
        code = main(
            ["extract", "--input", str(tmp_path / "no.bmp"), "--out", str(tmp_path / "y.csv")]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("io_error:")


class TestTrain:
    @pytest.mark.parametrize(
        "kind,model_type",
        [("nn", TemplateDb), ("mlp", MlpModel), ("rbf", RbfModel)],
    )
    def test_each_kind_writes_a_loadable_model(
        self, tmp_path, features_csv, kind, model_type
    ):
        out = tmp_path / f"{kind}.model"
        code = main(
            [
                "train", "--features", str(features_csv), "--out", str(out),
                "--kind", kind, "--multistart", "2", "--hidden", "8",
                "--centres", "10",
            ]
        )
        assert code == 0
        model = load_model(out)
        assert isinstance(model, model_type)
        assert model.scaler is not None

    def test_unknown_kind_fails_cleanly(self, tmp_path, features_csv, capsys):
        code = main(
            ["train", "--features", str(features_csv), "--out", str(tmp_path / "m"),
             "--kind", "svm"]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("config_error:")


class TestEval:
    def test_protocol_report_contains_every_classifier_row(
        self, tmp_path, features_csv, capsys
    ):
        out = tmp_path / "report"
        code = main(
            ["eval", "--features", str(features_csv), "--out", str(out),
             "--multistart", "1", "--hidden", "8", "--centres", "5"]
        )
        assert code == 0
        text = (out / "report.txt").read_text()
        for label in (
            "NN-MAD", "NN-MSE", "MLP-MSE", "MLP-MSEREG",
            "Committee-MSE", "Committee-MSEREG", "RBF",
        ):
            assert label in text
        assert (out / "report.csv").read_text().startswith("key,value")

    def test_pretrained_models_are_scored_by_file_stem(
        self, tmp_path, features_csv, capsys
    ):
        model = tmp_path / "nearest.model"
        main(["train", "--features", str(features_csv), "--out", str(model),
              "--kind", "nn"])
        out = tmp_path / "report"
        code = main(
            ["eval", "--features", str(features_csv), "--out", str(out),
             "--models", str(model)]
        )
        assert code == 0
        assert "model:nearest" in (out / "report.txt").read_text()

    def test_requiring_exactly_one_input_source(self, tmp_path, capsys):
        assert main(["eval", "--out", str(tmp_path / "r")]) == 1
        assert "exactly one" in capsys.readouterr().err


class TestSweep:
    def test_curve_csv_lists_one_rate_per_count(self, tmp_path, features_csv):
        out = tmp_path / "curve.csv"
        code = main(
            ["sweep", "--features", str(features_csv), "--out", str(out),
             "--centres", "2,5,10"]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "centres,rate"
        assert [int(line.split(",")[0]) for line in lines[1:]] == [2, 5, 10]

    def test_bad_centre_list_fails_cleanly(self, tmp_path, features_csv, capsys):
        code = main(
            ["sweep", "--features", str(features_csv), "--out", str(tmp_path / "c"),
             "--centres", "five"]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("config_error:")

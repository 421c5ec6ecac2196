"""End-to-end command line runs: outputs, run manifest, exit codes."""

import hashlib
import io
import json
from contextlib import redirect_stdout, redirect_stderr

import pytest

pytest.importorskip("torch")
pytest.importorskip("featx")

from featx import cli  # noqa: E402

from helpers_featx import write_manifest  # noqa: E402


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(argv)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def full_run(backbone_file, linear_file, manifest_file, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "pairs.fdx"
    argv = ["extract",
            "--manifest", manifest_file,
            "--backbone-weights", backbone_file,
            "--linear-weights", linear_file,
            "--out", str(out)]
    code, stdout, stderr = run_cli(argv)
    assert code == 0, stderr
    return {"root": root, "out": out, "argv": argv, "stdout": stdout}


class TestExtractRun:
    def test_outputs_exist(self, full_run):
        out = full_run["out"]
        assert out.is_file()
        assert (full_run["root"] / "pairs.fdx.baseline.json").is_file()
        assert (full_run["root"] / "pairs.fdx.manifest.json").is_file()
        assert "wrote 50 records over 5 layers" in full_run["stdout"]
        assert "baseline weights ->" in full_run["stdout"]

    def test_run_manifest_contents(self, full_run, backbone_file,
                                    linear_file, manifest_file):
        doc = json.loads(
            (full_run["root"] / "pairs.fdx.manifest.json").read_text())
        assert set(doc) == {"command", "argv", "config", "inputs",
                            "version", "duration_s"}
        assert doc["command"] == "extract"
        assert doc["argv"] == full_run["argv"]
        cfg = doc["config"]
        assert cfg["backbone_digest"].startswith("sha256:")
        assert cfg["preprocess"] == {
            "resize_edge": 64,
            "center_crop": None,
            "value_range": "[-1, 1]",
            "channel_shift": [-0.030, -0.088, -0.188],
            "channel_scale": [0.458, 0.448, 0.450],
        }
        assert cfg["batch"] == 16
        for path in (manifest_file, backbone_file, linear_file):
            want = hashlib.sha256(open(path, "rb").read()).hexdigest()
            assert doc["inputs"][path] == want
        assert doc["duration_s"] > 0

    def test_rerun_is_byte_identical(self, full_run):
        first = full_run["out"].read_bytes()
        first_baseline = (full_run["root"]
                          / "pairs.fdx.baseline.json").read_bytes()
        code, _, _ = run_cli(full_run["argv"])
        assert code == 0
        assert full_run["out"].read_bytes() == first
        assert (full_run["root"]
                / "pairs.fdx.baseline.json").read_bytes() == first_baseline

    def test_outputs_feed_the_consumer(self, full_run):
        model = pytest.importorskip("rankalign.model")
        distx = pytest.importorskip("rankalign.distx")
        schema, tensors = distx.read_archive(str(full_run["out"]))
        head = model.load_weights(
            str(full_run["root"] / "pairs.fdx.baseline.json"))
        assert head.schema.layer_names == ("conv1", "conv2", "conv3",
                                           "conv4", "conv5")
        assert head.schema.channel_counts == schema.channel_counts
        scores = [model.distance(head, t) for t in tensors]
        assert len(scores) == 50
        assert all(s >= 0 for s in scores)
        assert max(scores) > 0


class TestExitCodes:
    def test_missing_manifest(self, backbone_file, tmp_path):
        code, _, err = run_cli(["extract", "--manifest", "/nope/m.csv",
                                "--backbone-weights", backbone_file,
                                "--out", str(tmp_path / "o.fdx")])
        assert code == 4
        assert "error:" in err

    def test_malformed_manifest(self, backbone_file, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("set_id,target_path\na,b\n")
        code, _, err = run_cli(["extract", "--manifest", str(bad),
                                "--backbone-weights", backbone_file,
                                "--out", str(tmp_path / "o.fdx")])
        assert code == 2
        assert "image_id" in err or "image_path" in err

    def test_undecodable_image(self, backbone_file, corpus, tmp_path):
        fake = tmp_path / "fake.png"
        fake.write_text("not pixels")
        manifest = write_manifest(
            tmp_path / "m.csv",
            [("s", corpus["rows"][0][1], "a", str(fake))])
        code, _, err = run_cli(["extract", "--manifest", manifest,
                                "--backbone-weights", backbone_file,
                                "--out", str(tmp_path / "o.fdx")])
        assert code == 2
        assert "fake.png" in err

    def test_bad_resize(self, backbone_file, manifest_file, tmp_path):
        code, _, err = run_cli(["extract", "--manifest", manifest_file,
                                "--backbone-weights", backbone_file,
                                "--resize", "8",
                                "--out", str(tmp_path / "o.fdx")])
        assert code == 2
        assert "resize" in err

    def test_bad_linear_checkpoint(self, backbone_file, manifest_file,
                                   tmp_path):
        import torch
        lin = tmp_path / "lin.pth"
        torch.save({"lin0.model.1.weight": torch.zeros((1, 64, 1, 1))},
                   str(lin))
        code, _, err = run_cli(["extract", "--manifest", manifest_file,
                                "--backbone-weights", backbone_file,
                                "--linear-weights", str(lin),
                                "--out", str(tmp_path / "o.fdx")])
        assert code == 2
        assert "lin1" in err

    def test_version_flag(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["--version"])
        assert exc.value.code == 0

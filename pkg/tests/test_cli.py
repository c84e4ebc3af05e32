"""CLI contract: seeds, determinism, exit codes, error prefix, help defaults."""

import json
import os

import numpy as np
import pytest

from tlp.cli import run
from tlp.io import read_pgm, read_tlpt, write_pgm
from tlp.phantom import read_manifest


@pytest.fixture(scope="module")
def mask_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("masks") / "m.pgm"
    mask = np.zeros((16, 16), np.float32)
    mask[6:10, 6:10] = 1.0
    write_pgm(str(path), mask)
    return str(path)


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    """One tiny gen-data + train, reused by eval/synth tests."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data")
    out = str(root / "run")
    assert run(["gen-data", "--out", data, "--cases", "8", "--resolution", "32",
                "--train-frac", "0.5", "--val-frac", "0.25", "--test-frac", "0.25",
                "--seed", "3"]) == 0
    code = run(["train", "--data", data, "--out", out, "--seed", "1",
                "--epochs-fixed", "1", "--epochs-decay", "1", "--batch-size", "2",
                "--base-channels", "4", "--levels", "1", "--lr", "1e-3"])
    assert code == 0
    return {"data": data, "run": out, "ckpt": os.path.join(out, "ckpt_final.tlpckpt")}


class TestFpgCommand:
    def test_dilated_output_and_idempotence(self, mask_file, tmp_path, capsys):
        out1 = str(tmp_path / "p1.pgm")
        out2 = str(tmp_path / "p2.pgm")
        args = ["fpg", "--mask", mask_file, "--p", "1.0", "--q", "0.0", "--t", "1", "--seed", "7"]
        assert run(args + ["--out", out1]) == 0
        assert "seed: 7" in capsys.readouterr().out
        assert run(args + ["--out", out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()
        src = read_pgm(mask_file)
        dst = read_pgm(out1)
        assert dst.sum() > src.sum()  # pure dilation grows the mask

    def test_missing_mask_is_runtime_error(self, tmp_path, capsys):
        code = run(["fpg", "--mask", str(tmp_path / "none.pgm"), "--out", str(tmp_path / "o.pgm")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")


class TestGenData:
    def test_manifest_and_splits(self, cli_run):
        manifest = read_manifest(cli_run["data"])
        assert len(manifest["cases"]) == 8
        splits = [c["split"] for c in manifest["cases"]]
        assert splits.count("train") == 4 and splits.count("val") == 2 and splits.count("test") == 2

    def test_determinism(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            assert run(["gen-data", "--out", out, "--cases", "2", "--resolution", "16", "--seed", "9"]) == 0
        for cid in ("case0000", "case0001"):
            for name in ("x1.tlpt", "x2.tlpt", "y.tlpt", "lesion.pgm"):
                pa = open(os.path.join(a, cid, name), "rb").read()
                pb = open(os.path.join(b, cid, name), "rb").read()
                assert pa == pb, f"{cid}/{name}"


class TestEvalAndSynth:
    def test_eval_writes_report(self, cli_run, tmp_path, capsys):
        report_path = str(tmp_path / "report.json")
        code = run(["eval", "--ckpt", cli_run["ckpt"], "--data", cli_run["data"],
                    "--split", "test", "--out", report_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "PSNR" in out and "±" in out
        report = json.loads(open(report_path).read())
        assert len(report["cases"]) == 2
        assert set(report["aggregates"]) == {"psnr_db", "ssim", "nmse"}

    def test_synth_three_prompt_modes(self, cli_run, tmp_path):
        manifest = read_manifest(cli_run["data"])
        case_id = manifest["cases"][0]["id"]
        lesion_path = os.path.join(cli_run["data"], case_id, "lesion.pgm")
        outs = {}
        for mode, label in (("none", "none"), ("lesion", "lesion"), (lesion_path, "file")):
            out = str(tmp_path / f"{label}.tlpt")
            code = run(["synth", "--ckpt", cli_run["ckpt"], "--data", cli_run["data"],
                        "--case", case_id, "--prompt", mode, "--out", out])
            assert code == 0
            outs[label] = read_tlpt(out)
        assert outs["none"].shape == (32, 32)
        # oracle mask and explicit file mask agree; no-prompt differs
        assert np.array_equal(outs["lesion"], outs["file"])
        assert not np.array_equal(outs["none"], outs["lesion"])

    def test_synth_unknown_case(self, cli_run, tmp_path, capsys):
        code = run(["synth", "--ckpt", cli_run["ckpt"], "--data", cli_run["data"],
                    "--case", "nope", "--prompt", "none", "--out", str(tmp_path / "y.tlpt")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_synth_determinism(self, cli_run, tmp_path):
        manifest = read_manifest(cli_run["data"])
        case_id = manifest["cases"][0]["id"]
        blobs = []
        for name in ("r1.tlpt", "r2.tlpt"):
            out = str(tmp_path / name)
            assert run(["synth", "--ckpt", cli_run["ckpt"], "--data", cli_run["data"],
                        "--case", case_id, "--prompt", "none", "--out", out]) == 0
            blobs.append(open(out, "rb").read())
        assert blobs[0] == blobs[1]


class TestCliContract:
    def test_unknown_flag_is_validation_error(self, capsys):
        assert run(["fpg", "--mask", "m.pgm", "--out", "o.pgm", "--frobnicate"]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_unknown_subcommand(self, capsys):
        assert run(["explode"]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_help_lists_paper_defaults(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["train", "--help"])
        assert exc.value.code == 0
        text = " ".join(capsys.readouterr().out.split())
        assert "default: 0.5" in text       # fpg-q and beta1
        assert "default: 0.9" in text       # fpg-p
        assert "default: 5" in text         # fpg-t
        assert "default: 100.0" in text     # lambda
        assert "default: 0.0001" in text    # lr
        assert "default: 0.999" in text     # beta2

    def test_config_file_layering(self, mask_file, tmp_path, capsys):
        cfg = tmp_path / "fpg.cfg"
        cfg.write_text("p=1.0\nq=0.0\nt=2\nseed=5\n")
        out1 = str(tmp_path / "a.pgm")
        out2 = str(tmp_path / "b.pgm")
        assert run(["fpg", "--mask", mask_file, "--out", out1, "--config", str(cfg)]) == 0
        # explicit flag wins over the config file value
        assert run(["fpg", "--mask", mask_file, "--out", out2, "--config", str(cfg), "--t", "0"]) == 0
        a, b = read_pgm(out1), read_pgm(out2)
        assert not np.array_equal(a, b)
        assert np.array_equal(b, read_pgm(mask_file))  # t=0 is the identity

    def test_config_file_bad_line(self, mask_file, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just nonsense\n")
        assert run(["fpg", "--mask", mask_file, "--out", str(tmp_path / "o.pgm"),
                    "--config", str(cfg)]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_seed_printed(self, cli_run, capsys):
        run(["eval", "--ckpt", cli_run["ckpt"], "--data", cli_run["data"],
             "--split", "val", "--seed", "123"])
        assert "seed: 123" in capsys.readouterr().out

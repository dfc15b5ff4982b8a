import json

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from photogeo import fileio
from photogeo.cli import main
from photogeo.errors import DivergenceError


runner = CliRunner()


def all_output(result):
    try:
        err = result.stderr
    except (ValueError, AttributeError):
        err = ""
    return result.output + err


def tiny_config(samples=2, iters=6, stages=2, seed=5, **extra):
    cfg = {
        "stages": stages,
        "samples": samples,
        "seed": seed,
        "oracle": {"scene": "hemisphere", "size": 16, "fit_budget": 5},
        "stage_overrides": [
            {"iters1": iters, "iters2": iters, "iters3": iters}
            for _ in range(stages)
        ],
    }
    cfg.update(extra)
    return cfg


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli_run")
    cfg_path = base / "config.json"
    cfg_path.write_text(json.dumps(tiny_config()))
    out = base / "results"
    result = runner.invoke(main, ["run", "--config", str(cfg_path), "--out", str(out)])
    assert result.exit_code == 0, all_output(result)
    return out, result


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_scene(tmp_path):
    out = tmp_path / "scene"
    result = runner.invoke(main, ["synth", "hemisphere", "--size", "16", "--out", str(out)])
    assert result.exit_code == 0, all_output(result)
    for name in ("image.png", "mask.png", "depth_gt.pfm", "albedo_gt.png", "scene.json"):
        assert (out / name).exists(), name
    meta = json.loads((out / "scene.json").read_text())
    assert meta["scene"] == "hemisphere" and meta["size"] == 16
    assert len(meta["lighting"]) == 4
    depth = fileio.read_pfm(out / "depth_gt.pfm")
    assert depth.shape == (16, 16)
    assert f"wrote scene 'hemisphere' to {out}" in result.output


def test_synth_rejects_small_size(tmp_path):
    result = runner.invoke(main, ["synth", "hemisphere", "--size", "8", "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "16" in all_output(result)


def test_synth_unknown_scene(tmp_path):
    result = runner.invoke(main, ["synth", "mystery", "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "unknown scene" in all_output(result)


# ---------------------------------------------------------------------------
# run


def test_run_writes_artifacts(completed_run):
    out, result = completed_run
    assert "done: 2 stage(s)" in result.output
    assert "side=" in result.output
    for stage in (0, 1, 2):
        d = out / f"stage_{stage}"
        for name in ("depth.pfm", "normals.pfm", "albedo.png", "recon.png",
                     "state.json", "metrics.json"):
            assert (d / name).exists(), f"stage_{stage}/{name}"
    summary = json.loads((out / "run.json").read_text())
    assert summary["stages"] == 2 and summary["projector"] == "oracle"
    assert summary["final_metrics"]["side"] > 0.0
    normals = fileio.read_pfm(out / "stage_2" / "normals.pfm")
    assert normals.shape == (16, 16, 3)


def test_run_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"stages": 0}))
    result = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "error: stages must be >= 1" in all_output(result)


def test_run_missing_config_exits_2(tmp_path):
    result = runner.invoke(main, ["run", "--config", str(tmp_path / "no.json")])
    assert result.exit_code == 2
    assert "error:" in all_output(result)


def test_run_divergence_exits_3(tmp_path, monkeypatch):
    import photogeo.cli as cli_mod

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(tiny_config()))

    def boom(rc, out_dir=None):
        raise DivergenceError("step 3 diverged at stage 1, iteration 7")

    monkeypatch.setattr(cli_mod, "execute_run", boom)
    result = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert result.exit_code == 3
    assert "diverged" in all_output(result)


def test_run_threads_env(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(tiny_config(stages=1, iters=2, samples=1)))
    before = torch.get_num_threads()
    assert before == 1  # pinned by the test fixture
    result = runner.invoke(
        main,
        ["run", "--config", str(cfg), "--out", str(tmp_path / "o")],
        env={"PHOTOGEO_THREADS": "2"},
    )
    assert result.exit_code == 0, all_output(result)
    assert torch.get_num_threads() == 2


def test_run_threads_must_be_positive(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(tiny_config(stages=1)))
    result = runner.invoke(
        main, ["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "0"]
    )
    assert result.exit_code == 2
    assert "threads" in all_output(result)


# ---------------------------------------------------------------------------
# eval


def test_eval_reports_metrics(tmp_path):
    rng = np.random.default_rng(0)
    gt = 1.0 + 0.05 * rng.uniform(size=(8, 8))
    fileio.write_pfm(tmp_path / "gt.pfm", gt)
    fileio.write_pfm(tmp_path / "pred.pfm", gt * 1.02)
    result = runner.invoke(main, ["eval", str(tmp_path / "pred.pfm"), str(tmp_path / "gt.pfm")])
    assert result.exit_code == 0, all_output(result)
    report = json.loads(result.output)
    # a pure rescale is invisible to the scale-invariant depth error, up to
    # the float32 quantization the PFM roundtrip introduces
    assert report["side"] == pytest.approx(0.0, abs=1e-4)
    assert report["mad"] >= 0.0


def test_eval_shape_mismatch(tmp_path):
    fileio.write_pfm(tmp_path / "a.pfm", np.ones((8, 8)))
    fileio.write_pfm(tmp_path / "b.pfm", np.ones((4, 4)))
    result = runner.invoke(main, ["eval", str(tmp_path / "a.pfm"), str(tmp_path / "b.pfm")])
    assert result.exit_code == 2
    assert "disagree" in all_output(result)


def test_eval_missing_file(tmp_path):
    fileio.write_pfm(tmp_path / "a.pfm", np.ones((8, 8)))
    result = runner.invoke(main, ["eval", str(tmp_path / "a.pfm"), str(tmp_path / "b.pfm")])
    assert result.exit_code == 2
    assert "file not found" in all_output(result)


# ---------------------------------------------------------------------------
# render / rotate / relight from a saved state


def test_render_from_state(completed_run, tmp_path):
    out, _ = completed_run
    dest = tmp_path / "frames"
    result = runner.invoke(
        main, ["render", str(out / "stage_2"), "--out", str(dest), "--ry", "10", "--lx", "0.4"]
    )
    assert result.exit_code == 0, all_output(result)
    assert (dest / "render_000.png").exists()
    img = fileio.read_png(dest / "render_000.png")
    assert img.shape == (16, 16, 3)


def test_rotate_sweep(completed_run, tmp_path):
    out, _ = completed_run
    dest = tmp_path / "frames"
    result = runner.invoke(
        main, ["rotate", str(out / "stage_2"), "--out", str(dest), "--frames", "3",
               "--extent", "10"]
    )
    assert result.exit_code == 0, all_output(result)
    names = sorted(p.name for p in dest.iterdir())
    assert names == ["rotate_000.png", "rotate_001.png", "rotate_002.png"]
    assert "wrote 3 frame(s)" in result.output
    first = fileio.read_png(dest / "rotate_000.png")
    last = fileio.read_png(dest / "rotate_002.png")
    assert not np.allclose(first, last, atol=2 / 255)


def test_relight_sweep(completed_run, tmp_path):
    out, _ = completed_run
    dest = tmp_path / "frames"
    result = runner.invoke(
        main, ["relight", str(out / "stage_2"), "--out", str(dest), "--frames", "2"]
    )
    assert result.exit_code == 0, all_output(result)
    assert (dest / "relight_000.png").exists() and (dest / "relight_001.png").exists()


def test_state_dir_missing_pieces(tmp_path):
    result = runner.invoke(main, ["rotate", str(tmp_path), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "missing depth.pfm" in all_output(result)

import json

import numpy as np
import pytest

from phaseless.cli import main
from phaseless.config import serialize
from phaseless.pipeline import form_images, peak_report, recover_receiver, refine_peak, resolution_cell, simulate
from phaseless.presets import PRESETS, get_preset, place_scene
from phaseless.scene import ImageWindow, ValidationError, grid_points


@pytest.fixture
def h3_config(tmp_path):
    cfg = get_preset("fig_h3").cases()[0].config
    p = tmp_path / "h3.toml"
    p.write_text(serialize(cfg))
    return cfg, p


def test_preset_catalogue():
    assert set(PRESETS) == {"fig_h1", "fig_h2", "fig_h3", "fig_resolution", "fig_stability", "fig_error1",
                            "fig_error2", "masks"}
    with pytest.raises(KeyError, match="valid"):
        get_preset("nope")
    stab = get_preset("fig_stability").cases(seed=5)[0]
    assert stab.seeds == (5, 6, 7)
    full = get_preset("fig_stability").cases(full=True)[0].config
    assert full.geometry.n == 81 and full.freqs.s == 46
    assert full.medium.resolved_sigma() == pytest.approx(2e-4)


def test_place_scene_offgrid():
    w = ImageWindow.centered((0.0, 100.0), (40.0, 20.0), (2.0, 1.0))
    on = place_scene(w, ((0.0, 0.0),), (1.0,))
    off = place_scene(w, ((0.0, 0.0),), (1.0,), offgrid=True)
    assert any(np.allclose(on.positions[0], p) for p in grid_points(w))
    assert np.allclose(off.positions[0] - on.positions[0], [1.0, 0.5])


def test_pipeline_end_to_end(h3_config):
    cfg, _ = h3_config
    P = simulate(cfg, 0)
    Mr = recover_receiver(cfg, P)
    row = P.row(cfg.receiver)
    assert np.allclose(Mr.matrix, np.outer(row.conj(), row))
    imgs = form_images(cfg, P, Mr, ["km", "interf"])
    rep = peak_report(imgs["interf"], cfg.scene.positions, resolution_cell(cfg))
    assert np.all(rep.displacement < 0.5)
    with pytest.raises(ValidationError):
        form_images(cfg, None, Mr, ["km"])
    with pytest.raises(ValidationError):
        form_images(cfg, P, None, ["srint"])


def test_refine_peak_recovers_offgrid_center():
    w = ImageWindow.centered((0.0, 0.0), (40.0, 40.0), (2.0, 2.0))
    pts = grid_points(w)
    c = np.array([0.6, -0.4])
    from phaseless.imaging import ImageMap
    img = ImageMap(np.exp(-np.sum((pts - c) ** 2, axis=1) / 50.0), w, "g")
    p = refine_peak(img, int(np.argmax(img.values)))
    assert np.allclose(p, c, atol=0.05)


def test_resolution_cell():
    cfg = get_preset("fig_h2").cases(full=True)[0].config
    assert resolution_cell(cfg) == pytest.approx((20.0, 15.0))


def _run(argv, monkeypatch=None):
    return main([str(a) for a in argv])


def test_cli_simulate_recover_image(tmp_path, h3_config, capsys):
    _, cfg_path = h3_config
    assert _run(["simulate", "--config", cfg_path, "--out", tmp_path / "sim"]) == 0
    assert (tmp_path / "sim" / "response.bin").exists()
    rc = _run(["recover", "--config", cfg_path, "--records", tmp_path / "sim" / "intensities.csv",
               "--truth", tmp_path / "sim" / "response.bin", "--out", tmp_path / "rec"])
    assert rc == 0
    rep = json.loads((tmp_path / "rec" / "recovery_report.json").read_text())
    assert rep["receivers"]["11"]["max_rel_error"] < 1e-10
    rc = _run(["image", "--config", cfg_path, "--input", tmp_path / "rec" / "Mr_r11.bin",
               "--functional", "interf,srint", "--x-d", "0.25 a", "--omega-d", "0.12 B", "--out", tmp_path / "img"])
    assert rc == 0
    for name in ("interf.csv", "interf.pgm", "interf.json", "srint.csv", "peaks.csv", "fwhm.csv"):
        assert (tmp_path / "img" / name).exists()


def test_cli_outputs_deterministic(tmp_path, h3_config):
    _, cfg_path = h3_config
    for d in ("a", "b"):
        assert _run(["simulate", "--config", cfg_path, "--out", tmp_path / d, "--seed", 3]) == 0
    assert (tmp_path / "a" / "intensities.csv").read_bytes() == (tmp_path / "b" / "intensities.csv").read_bytes()
    assert (tmp_path / "a" / "response.bin").read_bytes() == (tmp_path / "b" / "response.bin").read_bytes()


@pytest.mark.parametrize("argv", [
    ["image", "--config", "{cfg}", "--input", "{sim}/response.bin", "--functional", "bogus"],
    ["recover", "--config", "{cfg}", "--records", "{sim}/intensities.csv", "--full-matrix"],
    ["moments", "--n", "50"],
    ["experiment", "nope"],
    ["simulate"],
    ["simulate", "--config", "{missing}"],
])
def test_cli_validation_exit_code(tmp_path, h3_config, argv):
    _, cfg_path = h3_config
    sim = tmp_path / "sim"
    assert _run(["simulate", "--config", cfg_path, "--out", sim]) == 0
    args = [a.format(cfg=cfg_path, sim=sim, missing=tmp_path / "missing.toml") for a in argv]
    expected = 1 if "{missing}" in argv else 2
    assert _run(args + ["--out", tmp_path / "o"]) == expected


def test_cli_incomplete_records(tmp_path, h3_config):
    _, cfg_path = h3_config
    _run(["simulate", "--config", cfg_path, "--out", tmp_path / "sim"])
    lines = (tmp_path / "sim" / "intensities.csv").read_text().splitlines()
    (tmp_path / "part.csv").write_text("\n".join(lines[:100]) + "\n")
    assert _run(["recover", "--config", cfg_path, "--records", tmp_path / "part.csv", "--out", tmp_path / "o"]) == 2


def test_cli_env_seed(tmp_path, h3_config, monkeypatch):
    _, cfg_path = h3_config
    monkeypatch.setenv("PHASELESS_SEED", "9")
    assert _run(["simulate", "--config", cfg_path, "--out", tmp_path / "s"]) == 0
    assert "seed = 9" in (tmp_path / "s" / "config.toml").read_text()
    assert _run(["simulate", "--config", cfg_path, "--out", tmp_path / "t", "--seed", 2]) == 0
    assert "seed = 2" in (tmp_path / "t" / "config.toml").read_text()
    monkeypatch.setenv("PHASELESS_JOBS", "x")
    assert _run(["moments", "--out", tmp_path / "m"]) == 2


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_cli_presets_fast(tmp_path, preset):
    assert _run(["experiment", preset, "--out", tmp_path, "--jobs", 2]) == 0
    summary = json.loads((tmp_path / preset / "summary.json").read_text())
    assert summary["preset"] == preset and summary["results"]

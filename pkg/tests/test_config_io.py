import numpy as np
import pytest

from phaseless.config import (ConfigError, load_config, parse_experiment_config, parse_frequency, parse_length,
                              serialize)
from phaseless.forward import response_multi
from phaseless.io import (read_complex, read_complex_csv, read_field, read_intensity_records, read_response,
                          write_complex, write_complex_csv, write_field, write_intensity_records, write_response)
from phaseless.medium import FieldSpec, sample_mu_field
from phaseless.presets import PRESETS

BASIC = """
[array]
elements = 21
aperture = "500 lambda0"

[frequencies]
fmin = "580 THz"
fmax = "620 THz"
count = 16

[window]
center = ["0 lambda0", "10000 lambda0"]
extent = ["160 lambda0", "80 lambda0"]
pixel = ["2 lambda0", "1 lambda0"]

[scene]
positions = [["0 lambda0", "10000.5 lambda0"], ["10 um", "5 mm"]]
reflectivities = [1.0, [0.5, -0.5]]

[medium]
kind = "random"
corr_len = "100 lambda0"
epsilon = 0.2

[run]
seed = 4
receiver = 3
x_d = "0.25 a"
omega_d = "0.12 B"
functionals = ["km", "music"]
m_est = 2
"""


def test_parse_basic():
    cfg = parse_experiment_config(BASIC)
    assert cfg.geometry.n == 21
    assert cfg.freqs.s == 16 and cfg.freqs.f0_thz == 600.0
    assert cfg.window.shape == (80, 80)
    lam0 = 299_792_458.0 / 600e12
    assert cfg.scene.positions[1] == pytest.approx([10e-6 / lam0, 5e-3 / lam0])
    assert cfg.scene.reflectivities[1] == 0.5 - 0.5j
    assert cfg.medium.propagation == 10000.0
    assert cfg.medium.resolved_sigma() == pytest.approx(2e-4)
    assert cfg.run.x_d == pytest.approx(125.0)
    assert cfg.run.omega_d == pytest.approx(0.12 * 40 / 600)
    assert cfg.receiver == 2
    assert cfg.run.functionals == ["km", "music"]


def test_roundtrip_is_stable():
    cfg = parse_experiment_config(BASIC)
    text = serialize(cfg)
    again = parse_experiment_config(text)
    assert serialize(again) == text
    assert np.allclose(again.scene.positions, cfg.scene.positions)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_roundtrip(name):
    for case in PRESETS[name].cases():
        text = serialize(case.config)
        assert serialize(parse_experiment_config(text)) == text


@pytest.mark.parametrize("edit, path", [
    (("[medium]", "[mediun]"), "mediun"),
    (('count = 16', 'count = 0'), "frequencies.count"),
    (('"580 THz"', '"580 furlongs"'), "frequencies.fmin"),
    (('"500 lambda0"', '500'), "array.aperture"),
    (('receiver = 3', 'receiver = 99'), "run.receiver"),
    (('"km", "music"', '"km", "nope"'), "run.functionals"),
    (('epsilon = 0.2', 'epsilon = 0.2\nsigma = 1e-4'), "medium"),
    (('seed = 4', 'seed = -1'), "run.seed"),
])
def test_config_errors_name_the_key(edit, path):
    with pytest.raises(ConfigError) as exc:
        parse_experiment_config(BASIC.replace(*edit))
    assert exc.value.path == path


def test_config_syntax_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[array\n")
    with pytest.raises(ConfigError):
        load_config(p)


@pytest.mark.parametrize("text, thz", [("600 THz", 600.0), ("2.5e5 GHz", 250.0), ("6e14 Hz", 600.0)])
def test_frequency_units(text, thz):
    assert parse_frequency(text, "x") == pytest.approx(thz)


def test_length_units():
    lam0_nm = 299_792_458.0 / 600e12 * 1e9
    assert parse_length(f"{lam0_nm} nm", "x", 600.0) == pytest.approx(1.0)
    assert parse_length("3 lambda0", "x", 600.0) == 3.0


def test_response_roundtrip(tmp_path):
    cfg = parse_experiment_config(BASIC)
    P = response_multi(cfg.scene, cfg.geometry, None, cfg.freqs)
    write_response(tmp_path / "p.bin", P)
    Q = read_response(tmp_path / "p.bin")
    assert np.array_equal(P.blocks, Q.blocks)
    assert np.array_equal(P.freqs.freqs_thz, Q.freqs.freqs_thz)


def test_complex_binary_and_csv(tmp_path):
    a = np.arange(6).reshape(2, 3) * (1 - 0.5j)
    write_complex(tmp_path / "a.bin", a, kind="x", receiver=2)
    b, meta = read_complex(tmp_path / "a.bin")
    assert np.array_equal(a, b) and meta["receiver"] == 2
    write_complex_csv(tmp_path / "a.csv", a)
    assert np.array_equal(read_complex_csv(tmp_path / "a.csv"), a)


def test_binary_size_mismatch(tmp_path):
    write_complex(tmp_path / "a.bin", np.ones(4))
    raw = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "a.bin").write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        read_complex(tmp_path / "a.bin")


def test_intensity_records_one_based(tmp_path):
    recs = [("single", 0, None, 0, 1.5), ("sum", 0, 2, 4, 2.25)]
    assert write_intensity_records(tmp_path / "r.csv", recs) == 2
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[1] == "single,1,,1,1.5"
    assert lines[2] == "sum,1,3,5,2.25"
    back = read_intensity_records(tmp_path / "r.csv")
    assert back == {0: {("single", 0, None): 1.5}, 4: {("sum", 0, 2): 2.25}}


def test_intensity_records_malformed(tmp_path):
    (tmp_path / "r.csv").write_text("kind,i,j,receiver,intensity\nsum,x,2,1,3.0\n")
    with pytest.raises(ValueError, match=":2:"):
        read_intensity_records(tmp_path / "r.csv")


def test_field_roundtrip(tmp_path):
    f = sample_mu_field(FieldSpec((1.0, 2.0), (20, 30), 2.0, 10.0), 5)
    write_field(tmp_path / "f.bin", f)
    g = read_field(tmp_path / "f.bin")
    assert np.array_equal(f.samples, g.samples)
    assert g.spec == f.spec and g.seed == 5

import json
import os

import numpy as np
import pytest

from hybridmimo.channel import load_channel
from hybridmimo.cli import (
    ConfigError,
    apply_overrides,
    config_to_sweep,
    load_config,
    main,
    preset_path,
    validate_config,
)


MINI_CFG = """\
system:
  n_tx: 8
  n_rx: 6
  n_rf: 3
  n_streams: 2
channel:
  model: rayleigh
noise:
  model: white
  sigma2: 1.0
design:
  methods: [full-digital, direct-proj]
  objective: capacity
sweep:
  power_db: [0, 10]
  trials: 2
  master_seed: 5
ber:
  modulation: 16QAM
  kinds: [linear, thp, dfd]
  symbols_per_trial: 20
"""


@pytest.fixture()
def mini_config(tmp_path):
    path = tmp_path / "mini.yaml"
    path.write_text(MINI_CFG)
    return path


def test_design_command_json_and_determinism(capsys):
    argv = ["design", "--method", "phase-proj", "--n", "8", "--m", "6",
            "--l", "3", "--d", "2", "--seed", "7", "--channel", "rayleigh"]
    assert main(argv) == 0
    out1 = capsys.readouterr().out
    assert main(argv) == 0
    out2 = capsys.readouterr().out
    assert out1 == out2
    summary = json.loads(out1)
    assert summary["power_used"] <= summary["power_budget"] + 1e-9
    assert summary["modulus_residual"] < 1e-9
    assert len(summary["per_stream_mse"]) == 2


def test_design_command_random_echoes_k(capsys):
    argv = ["design", "--method", "random", "--k", "10", "--n", "8", "--m", "6",
            "--l", "3", "--d", "2", "--seed", "3", "--channel", "rayleigh"]
    assert main(argv) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["random_k"] == 10


def test_design_dump_matrices(tmp_path, capsys):
    prefix = str(tmp_path / "mats")
    argv = ["design", "--method", "direct-proj", "--n", "8", "--m", "6", "--l", "3",
            "--d", "2", "--seed", "1", "--channel", "rayleigh", "--dump", prefix]
    assert main(argv) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    paths = [l for l in lines if l.endswith(".csv")]
    assert len(paths) == 6
    back = load_channel(prefix + "_fa.csv")
    assert back.h.shape == (8, 3)
    np.testing.assert_allclose(np.abs(back.h), 1.0, atol=1e-12)


def test_sweep_se_writes_per_method_and_combined(tmp_path, mini_config, capsys):
    out = tmp_path / "results"
    argv = ["sweep-se", "--config", str(mini_config), "--out", str(out)]
    assert main(argv) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert str(out / "se_full-digital.csv") in printed
    assert str(out / "se_direct-proj.csv") in printed
    assert str(out / "se_combined.csv") in printed
    combined = (out / "se_combined.csv").read_text().splitlines()
    assert combined[0] == "power_db,metric,mean,stderr,trials,failures"
    assert any("se_full-digital" in line for line in combined[1:])
    assert (out / "se_full-digital.csv.meta.json").exists()


def test_sweep_jobs_byte_identical(tmp_path, mini_config):
    out1, out8 = tmp_path / "j1", tmp_path / "j8"
    assert main(["sweep-se", "--config", str(mini_config), "--out", str(out1),
                 "--jobs", "1"]) == 0
    assert main(["sweep-se", "--config", str(mini_config), "--out", str(out8),
                 "--jobs", "8"]) == 0
    for name in ("se_full-digital.csv", "se_direct-proj.csv", "se_combined.csv"):
        assert (out1 / name).read_bytes() == (out8 / name).read_bytes()


def test_sweep_ber_runs(tmp_path, mini_config, capsys):
    out = tmp_path / "ber"
    argv = ["sweep-ber", "--config", str(mini_config), "--out", str(out),
            "--set", "design.methods=[direct-proj]",
            "--set", "sweep.power_db=[30]"]
    assert main(argv) == 0
    rows = (out / "ber_direct-proj.csv").read_text().splitlines()
    metrics = {line.split(",")[1] for line in rows[1:]}
    assert metrics == {"ber_linear", "ber_thp", "ber_dfd"}


def test_env_seed_override(tmp_path, mini_config):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    env = os.environ.copy()
    os.environ["HYBRID_MIMO_SEED"] = "99"
    try:
        assert main(["sweep-se", "--config", str(mini_config), "--out", str(out_a)]) == 0
    finally:
        os.environ.pop("HYBRID_MIMO_SEED", None)
        os.environ.update(env)
    assert main(["sweep-se", "--config", str(mini_config), "--out", str(out_b)]) == 0
    a = (out_a / "se_full-digital.csv").read_text()
    b = (out_b / "se_full-digital.csv").read_text()
    assert a != b  # different master seed changes the draw
    meta = json.loads((out_a / "se_full-digital.csv.meta.json").read_text())
    assert meta["master_seed"] == 99


def test_validate_config_ok_and_errors(tmp_path, mini_config, capsys):
    assert main(["validate-config", "--config", str(mini_config)]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINI_CFG.replace("n_streams: 2", "n_streams: 5"))
    assert main(["validate-config", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "n_streams" in err or "system" in err


def test_validate_config_line_precise_and_suggestion(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINI_CFG.replace("[full-digital, direct-proj]", "[phase-prj]"))
    assert main(["validate-config", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "phase-proj" in err  # nearest-tag suggestion
    assert "line 12" in err


def test_override_must_reference_existing_key(mini_config):
    data, _ = load_config(mini_config)
    with pytest.raises(ConfigError):
        apply_overrides(data, ["sweep.bogus=3"])
    data2, _ = load_config(mini_config)
    out = apply_overrides(data2, ["sweep.trials=7"])
    assert out["sweep"]["trials"] == 7


def test_all_presets_validate():
    for name in ("fig20", "fig21", "fig22", "fig23", "fig24_32", "fig24_64", "fig25"):
        path = preset_path(name)
        data, lines = load_config(path)
        assert validate_config(data, lines) == [], name
        cfg = config_to_sweep(data, data["design"]["methods"][0])
        assert cfg.trials >= 200


def test_preset_fig23_quantizes():
    data, _ = load_config(preset_path("fig23"))
    cfg = config_to_sweep(data, "phase-proj")
    assert cfg.quant_bits == 2


def test_preset_fig25_kinds():
    data, _ = load_config(preset_path("fig25"))
    assert data["ber"]["kinds"] == ["linear", "thp", "dfd"]
    cfg = config_to_sweep(data, "phase-proj")
    assert cfg.modulation_order == 16
    assert cfg.trials * cfg.symbols_per_trial * cfg.n_streams >= 100_000


def test_gen_channel_roundtrip(tmp_path, capsys):
    out = tmp_path / "chan.csv"
    argv = ["gen-channel", "--model", "rayleigh", "--n", "5", "--m", "4",
            "--seed", "11", "--out", str(out)]
    assert main(argv) == 0
    chan = load_channel(out)
    assert chan.h.shape == (4, 5)
    assert chan.seed == 11


def test_unknown_preset_suggestion(capsys):
    assert main(["sweep-se", "--preset", "fig2O", "--out", "/tmp/x"]) == 2
    assert "did you mean" in capsys.readouterr().err


def test_missing_config_is_exit_2(capsys):
    assert main(["sweep-se", "--config", "/nonexistent.yaml", "--out", "/tmp/x"]) == 2

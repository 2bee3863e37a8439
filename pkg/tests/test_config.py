from __future__ import annotations

import pytest

from padc.config import SweepConfig, resolve_config
from padc.errors import ConfigurationError
from padc.schema import config_hash, with_updates


def write_ini(tmp_path, text: str):
    path = tmp_path / "run.ini"
    path.write_text(text, encoding="utf-8")
    return path


def test_default_preset():
    cfg = resolve_config()
    assert cfg.preset == "default-20gs"
    assert cfg.frontend.sample_rate == 20e9
    assert cfg.frontend.n_channels == 2
    assert cfg.frontend.mismatches[1].delay == pytest.approx(7e-12)
    assert cfg.frontend.quant_bits == 8
    assert cfg.dataset.n_pairs == 417
    assert cfg.dataset.stop_bands == [(4e9, 6e9)]


def test_low_noise_preset():
    cfg = resolve_config("low-noise-100ms")
    assert cfg.frontend.sample_rate == 100e6
    assert cfg.frontend.n_channels == 1
    assert cfg.frontend.quant_bits == 12
    assert (cfg.dataset.f_min, cfg.dataset.f_max) == (400e6, 450e6)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        resolve_config("no-such-preset")


def test_ini_layers_over_preset_and_overrides_win(tmp_path):
    path = write_ini(
        tmp_path,
        "[train]\ntotal_steps = 10\nvalidation_every = 5\noptimizer = adagrad\n"
        "[frontend]\nmzm.v_pi = 4.0\n",
    )
    cfg = resolve_config(config_path=path)
    assert cfg.train.total_steps == 10
    assert cfg.train.optimizer.value == "adagrad"
    assert cfg.frontend.mzm.v_pi == 4.0
    assert cfg.frontend.n_channels == 2
    cfg = resolve_config(config_path=path, overrides={"train": {"total_steps": 20}})
    assert (cfg.train.total_steps, cfg.train.validation_every) == (20, 5)


def test_channel_override_resets_preset_mismatches():
    cfg = resolve_config(overrides={"frontend": {"n_channels": 4}})
    assert len(cfg.frontend.mismatches) == 4
    assert all(p.delay == 0.0 and p.gain == 1.0 for p in cfg.frontend.mismatches)


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigurationError):
        resolve_config(config_path=write_ini(tmp_path, "[nonsense]\na = 1\n"))
    with pytest.raises(ConfigurationError):
        resolve_config(config_path=write_ini(tmp_path, "[train]\nno_such_key = 1\n"))
    with pytest.raises(ConfigurationError):
        resolve_config(config_path=write_ini(tmp_path, "not an ini file"))


def test_preset_can_come_from_the_file(tmp_path):
    cfg = resolve_config(config_path=write_ini(tmp_path, "[run]\npreset = low-noise-100ms\nseed = 3\n"))
    assert cfg.preset == "low-noise-100ms"
    assert cfg.seed == 3


def test_config_hash_tracks_content():
    assert config_hash(resolve_config()) == config_hash(resolve_config())
    assert config_hash(resolve_config()) != config_hash(resolve_config(overrides={"run": {"seed": 1}}))


def test_output_directory_stays_out_of_the_hash_and_manifest():
    a = resolve_config(overrides={"run": {"out": "runs/a"}})
    b = resolve_config(overrides={"run": {"out": "runs/b"}})
    assert config_hash(a) == config_hash(b) == config_hash(resolve_config())
    assert a.manifest() == b.manifest()
    assert "out" not in a.manifest()["config"]
    assert str(a.out_dir) == "runs/a"
    assert str(resolve_config().out_dir) == "padc-out"
    assert with_updates(a, seed=3).out == "runs/a"


def test_sweep_length_must_split_across_channels():
    assert SweepConfig().channels == [2, 3, 4, 5, 6, 7, 8]
    with pytest.raises(ConfigurationError):
        SweepConfig(channels=[7], total_length=1000)
    with pytest.raises(ConfigurationError):
        SweepConfig(channels=[1])

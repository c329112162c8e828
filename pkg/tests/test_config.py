import json

import pytest

from hormander_lab.config import DEFAULT_SETTINGS, THREADS_ENV, LabSettings, load_settings, thread_cap
from hormander_lab.errors import InputError


def test_defaults():
    assert DEFAULT_SETTINGS.rho == 0.5
    assert DEFAULT_SETTINGS.k_max == 6
    assert DEFAULT_SETTINGS.grid % 2 == 1
    assert load_settings(None) is DEFAULT_SETTINGS


def test_toml_overrides(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("grid = 17\nseed = 7\n")
    settings = load_settings(path)
    assert settings.grid == 17
    assert settings.seed == 7
    assert settings.rank_tol == DEFAULT_SETTINGS.rank_tol


def test_json_settings_block(tmp_path):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps({"settings": {"rho": 0.25}}))
    assert load_settings(path).rho == 0.25


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("gird = 17\n")
    with pytest.raises(InputError, match="gird"):
        load_settings(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        load_settings(tmp_path / "nope.toml")


@pytest.mark.parametrize("bad", [{"rho": 1.5}, {"s_max": 0}, {"flow_integrator": "euler"}])
def test_validation(bad):
    with pytest.raises(InputError):
        LabSettings(**bad)


def test_replace_keeps_other_fields():
    settings = DEFAULT_SETTINGS.replace(grid=9)
    assert settings.grid == 9
    assert settings.rho == DEFAULT_SETTINGS.rho


def test_thread_cap(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_cap() == 3
    monkeypatch.setenv(THREADS_ENV, "0")
    assert thread_cap() == 1
    monkeypatch.setenv(THREADS_ENV, "many")
    assert thread_cap() >= 1

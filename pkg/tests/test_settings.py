from __future__ import annotations
from gyroburst.core.settings import Settings


def test_settings_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("GYROBURST_VERBOSE", "1")
    monkeypatch.setenv("GYROBURST_WORKERS", "4")
    monkeypatch.setenv("GYROBURST_OUTPUT", str(tmp_path / "out"))
    s = Settings.load()
    assert s.verbose
    assert s.workers == 4
    assert s.output_dir == str(tmp_path / "out")


def test_settings_defaults_on_bad_values(monkeypatch):
    monkeypatch.setenv("GYROBURST_WORKERS", "many")
    monkeypatch.setenv("GYROBURST_OUTPUT", "  ")
    monkeypatch.delenv("GYROBURST_VERBOSE", raising=False)
    s = Settings.from_env()
    assert s.workers == 1
    assert s.output_dir == "gyroburst_out"
    assert not s.verbose

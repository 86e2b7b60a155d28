from __future__ import annotations

import pytest

from ecoinfer.errors import ConfigurationError
from ecoinfer.services.env_loader import get_env_float, get_env_int, get_env_variable_value


def test_environment_overrides_default(monkeypatch):
    monkeypatch.setenv("EI_TEST_THREADS", " 4 ")
    assert get_env_int("EI_TEST_THREADS", 1) == 4
    monkeypatch.setenv("EI_TEST_SCALE", "0.25")
    assert get_env_float("EI_TEST_SCALE", 1.0) == 0.25


def test_default_when_unset(monkeypatch):
    monkeypatch.delenv("EI_TEST_UNSET", raising=False)
    assert get_env_int("EI_TEST_UNSET", 7) == 7
    assert get_env_variable_value("EI_TEST_UNSET", "x") == "x"


def test_malformed_values(monkeypatch):
    monkeypatch.setenv("EI_TEST_THREADS", "four")
    with pytest.raises(ConfigurationError, match="integer"):
        get_env_int("EI_TEST_THREADS", 1)
    monkeypatch.setenv("EI_TEST_SCALE", "1,5")
    with pytest.raises(ConfigurationError, match="number"):
        get_env_float("EI_TEST_SCALE", 1.0)


def test_required_value(monkeypatch):
    monkeypatch.setenv("EI_TEST_REQUIRED", "  ")
    with pytest.raises(ConfigurationError, match="EI_TEST_REQUIRED"):
        get_env_variable_value("EI_TEST_REQUIRED", required=True)

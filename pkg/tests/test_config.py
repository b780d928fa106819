#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置測試
========
"""

import pytest

from config.settings import ENV_MAPPINGS, Config
from engine.errors import ConfigError


@pytest.fixture
def clean_env(monkeypatch):
    for name in ENV_MAPPINGS:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


class TestConfig:
    """配置載入與覆蓋"""

    def test_defaults_are_valid(self):
        config = Config(load_env=False)
        assert config.validate()
        assert config.get('decode.lam') == 0.5
        assert config.get('decode.mode') == 'nonar+mmi'
        assert config.get('missing.key', 'fallback') == 'fallback'

    def test_flat_text_round_trip(self):
        config = Config(load_env=False)
        config.update({'decode.lam': 0.25, 'train.steps': 7, 'train.train_ar': False})
        restored = Config.from_flat_text(config.to_flat_text())
        assert restored.to_dict() == config.to_dict()

    def test_flat_file(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text('# 實驗設定\ndecode.lam = 0.4\n\ntask.name=reverse\n', encoding='utf-8')
        config = Config(str(path), load_env=False)
        assert config.get('decode.lam') == 0.4
        assert config.get('task.name') == 'reverse'

    def test_yaml_file(self, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text('decode:\n  lam: 0.8\n  beam: 4\nmodel:\n  n_blocks: 3\n', encoding='utf-8')
        config = Config(str(path), load_env=False)
        assert config.get('decode.lam') == 0.8
        assert config.get('decode.beam') == 4
        assert config.get('model.n_blocks') == 3

    def test_yaml_unknown_key(self, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text('decode:\n  temperature: 0.8\n', encoding='utf-8')
        with pytest.raises(ConfigError):
            Config(str(path), load_env=False)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            Config(str(tmp_path / 'nope.cfg'), load_env=False)

    def test_flat_line_without_equals(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text('decode.lam 0.4\n', encoding='utf-8')
        with pytest.raises(ConfigError, match=':1:'):
            Config(str(path), load_env=False)

    def test_environment_overrides(self, clean_env):
        clean_env.setenv('MMI_LAMBDA', '0.3')
        clean_env.setenv('MMI_WORKERS', '4')
        config = Config()
        assert config.get('decode.lam') == 0.3
        assert config.get('performance.workers') == 4

    def test_set_coerces_type(self):
        config = Config(load_env=False)
        config.set('train.steps', '12')
        config.set('train.progress', 'yes')
        config.set('decode.lam', 1)
        assert config.get('train.steps') == 12
        assert config.get('train.progress') is True
        assert isinstance(config.get('decode.lam'), float)

    @pytest.mark.parametrize('key, value', [
        ('decode.temperature', '1'),
        ('decode', '1'),
        ('train.steps', 'many'),
    ])
    def test_set_rejects(self, key, value):
        with pytest.raises(ConfigError):
            Config(load_env=False).set(key, value)

    def test_update_skips_none(self):
        config = Config(load_env=False)
        config.update({'decode.lam': None, 'decode.beam': 3})
        assert config.get('decode.lam') == 0.5
        assert config.get('decode.beam') == 3

    @pytest.mark.parametrize('overrides', [
        {'decode.lam': 1.5},
        {'decode.mode': 'sampling'},
        {'decode.tie_break': 'random'},
        {'model.d_model': 30, 'model.n_heads': 4},
        {'task.len_min': 5, 'task.len_max': 2},
        {'performance.workers': 0},
        {'task.name': 'file'},
    ])
    def test_validate_rejects(self, overrides):
        config = Config(load_env=False)
        config.update(overrides)
        with pytest.raises(ConfigError):
            config.validate()

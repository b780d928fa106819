#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非自迴歸 MMI 生成配置設定
=========================

此文件包含所有配置選項與預設值。
自定義配置可使用 YAML（.yaml / .yml）或扁平的 key=value 文字檔，
例如 ``decode.lam=0.4``；之後再由環境變數（MMI_*）與命令列參數覆蓋。
"""

import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import yaml
from dotenv import load_dotenv

from engine.errors import ConfigError

# 獲取項目根目錄
PROJECT_ROOT = Path(__file__).parent.parent
CONFIG_DIR = PROJECT_ROOT / 'config'

TASKS = ('copy', 'reverse', 'keyed-dialog', 'file')
DECODE_MODES = ('nonar', 'nonar+mmi', 'nonar+mmi+npd', 'ar', 'ar+mmi', 'ar+mmi+diverse')
TIE_BREAKS = ('lowest', 'highest')

# 環境變數對應的配置節點
ENV_MAPPINGS = {
    'MMI_SEED': 'train.seed',
    'MMI_STEPS': 'train.steps',
    'MMI_LAMBDA': 'decode.lam',
    'MMI_MODE': 'decode.mode',
    'MMI_WORKERS': 'performance.workers',
    'MMI_LOG_LEVEL': 'logging.level',
    'MMI_LOG_FILE': 'logging.file',
    'MMI_OUTPUT_DIR': 'output.directory',
}


def _coerce(value: Any, default: Any, key: str) -> Any:
    """把字串值轉成與預設值相同的型別"""
    if not isinstance(value, str):
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    try:
        if isinstance(default, bool):
            lowered = value.strip().lower()
            if lowered in ('true', '1', 'yes', 'on'):
                return True
            if lowered in ('false', '0', 'no', 'off'):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value.strip())
        if isinstance(default, float):
            return float(value.strip())
    except ValueError:
        raise ConfigError(f"配置項目 {key} 的值 {value!r} 無法轉成 {type(default).__name__}") from None
    return value


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)


class Config:
    """配置管理類別"""

    def __init__(self, config_file: Optional[str] = None, load_env: bool = True):
        """
        初始化配置

        Args:
            config_file: 自定義配置文件路徑（YAML 或 key=value 文字檔）
            load_env: 是否讀取 .env 與 MMI_* 環境變數
        """
        self._config = self._load_default_config()

        if config_file:
            self._load_custom_config(config_file)

        if load_env:
            self._load_from_environment()

    def _load_default_config(self) -> Dict[str, Any]:
        """載入默認配置"""
        return {
            # 任務與語料
            "task": {
                "name": "copy",  # copy, reverse, keyed-dialog, file
                "train_path": "",
                "dev_path": "",
                "test_path": "",
                "vocab_size": 20,
                "n_train": 500,
                "n_dev": 100,
                "n_test": 100,
                "len_min": 1,
                "len_max": 8,
                "max_len": 18,
                "dull_fraction": 0.5,
                "n_keys": 0,  # 0 代表 vocab_size // 4
                "response_len": 0,  # 0 代表自動
                "min_freq": 1,
                "seed": 7
            },

            # 模型形狀
            "model": {
                "d_model": 32,
                "n_heads": 4,
                "d_ff": 64,
                "n_blocks": 2,
                "rel_clip": 4,
                "dropout": 0.0,
                "max_positions": 64,
                "init_std": 0.02
            },

            # 訓練設定
            "train": {
                "lr": 0.003,
                "steps": 200,
                "batch_tokens": 512,
                "seed": 1234,
                "beta1": 0.9,
                "beta2": 0.98,
                "eps": 1e-8,
                "checkpoint_every": 100,
                "backward_positions": 0,  # 0 代表使用全部目標位置
                "train_ar": True,
                "progress": False
            },

            # 解碼設定
            "decode": {
                "mode": "nonar+mmi",
                "lam": 0.5,
                "n_best": 10,
                "length_candidates": 4,
                "token_candidates": 5,
                "beam": 10,
                "sibling_penalty": 1.0,
                "tie_break": "lowest",
                "split": "test"
            },

            # 評估設定
            "eval": {
                "stopwords": str(CONFIG_DIR / "stopwords.txt"),
                "dull_response": "",  # 空字串時由 keyed-dialog 任務推得
                "sweep_step": 0.1,
                "bootstrap_samples": 1000
            },

            # 驗證器設定
            "oracle": {
                "n_sources": 20,
                "max_target_len": 3,
                "lam": 0.5,
                "kbest": 10,
                "guard": 1000000
            },

            # 輸出設定
            "output": {
                "directory": str(PROJECT_ROOT / "output"),
                "run_name": "run"
            },

            # 日誌設定
            "logging": {
                "level": "INFO",
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                "file": "",
                "max_bytes": 10485760,  # 10MB
                "backup_count": 5
            },

            # 效能設定
            "performance": {
                "workers": 1  # 解碼與評估的並發數量
            }
        }

    def _load_custom_config(self, config_file: str):
        """載入自定義配置文件"""
        path = Path(config_file)
        if not path.exists():
            raise FileNotFoundError(f"配置文件不存在: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"無法讀取配置文件 {path}: {e}") from e

        if path.suffix in ('.yaml', '.yml'):
            try:
                custom_config = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"配置文件 {path} 不是合法的 YAML: {e}") from e
            if not isinstance(custom_config, dict):
                raise ConfigError(f"配置文件 {path} 的頂層必須是映射")
            self._merge_config(self._config, custom_config, prefix='')
        else:
            for key, value in self._parse_flat_text(text, str(path)):
                self.set(key, value)

    def _load_from_environment(self):
        """從 .env 與環境變數載入配置"""
        load_dotenv()
        for env_var, key in ENV_MAPPINGS.items():
            value = os.getenv(env_var)
            if value:
                self.set(key, value)

    def _merge_config(self, base: Dict, custom: Dict, prefix: str):
        """遞歸合併配置字典；未知的節點視為錯誤"""
        for key, value in custom.items():
            dotted = f"{prefix}{key}"
            if key not in base:
                raise ConfigError(f"未知的配置項目: {dotted}")
            if isinstance(base[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"配置節點 {dotted} 必須是映射")
                self._merge_config(base[key], value, prefix=f"{dotted}.")
            else:
                base[key] = _coerce(value, base[key], dotted)

    @staticmethod
    def _parse_flat_text(text: str, source: str = '<text>') -> List[Tuple[str, str]]:
        entries = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ConfigError(f"{source}:{line_no}: 缺少 '='")
            key, value = line.split('=', 1)
            entries.append((key.strip(), value.strip()))
        return entries

    def get(self, section: str, default=None) -> Any:
        """
        獲取配置值

        Args:
            section: 配置節點路徑，支持點分隔符（如 'decode.lam'）
            default: 默認值

        Returns:
            配置值
        """
        keys = section.split('.')
        value = self._config

        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default

        return value

    def set(self, section: str, value: Any):
        """
        設置配置值（字串會依預設值型別轉換）

        Args:
            section: 配置節點路徑，必須是已存在的葉節點
            value: 配置值
        """
        keys = section.split('.')
        config = self._config

        for key in keys[:-1]:
            if not isinstance(config.get(key), dict):
                raise ConfigError(f"未知的配置項目: {section}")
            config = config[key]

        if keys[-1] not in config or isinstance(config[keys[-1]], dict):
            raise ConfigError(f"未知的配置項目: {section}")
        config[keys[-1]] = _coerce(value, config[keys[-1]], section)

    def update(self, overrides: Dict[str, Any]):
        """套用一組點分隔的覆蓋值（值為 None 的項目略過）"""
        for key, value in overrides.items():
            if value is not None:
                self.set(key, value)

    def validate(self) -> bool:
        """
        驗證配置的有效性

        Returns:
            True；任何問題都以 ConfigError 回報
        """
        problems = []
        if self.get('task.name') not in TASKS:
            problems.append(f"task.name 必須是 {', '.join(TASKS)} 之一")
        if self.get('task.name') == 'file' and not self.get('task.train_path'):
            problems.append("task.name=file 時必須設置 task.train_path")
        if not 0.0 <= self.get('decode.lam') <= 1.0:
            problems.append(f"decode.lam 必須在 [0, 1]，目前為 {self.get('decode.lam')}")
        if self.get('decode.mode') not in DECODE_MODES:
            problems.append(f"decode.mode 必須是 {', '.join(DECODE_MODES)} 之一")
        if self.get('decode.tie_break') not in TIE_BREAKS:
            problems.append(f"decode.tie_break 必須是 {', '.join(TIE_BREAKS)} 之一")
        if self.get('model.d_model') % max(1, self.get('model.n_heads')) != 0:
            problems.append("model.d_model 必須能被 model.n_heads 整除")
        for key in ('model.n_blocks', 'model.n_heads', 'decode.n_best', 'decode.beam',
                    'decode.length_candidates', 'decode.token_candidates', 'performance.workers',
                    'train.batch_tokens', 'task.len_min'):
            if self.get(key) < 1:
                problems.append(f"{key} 必須 >= 1")
        if self.get('task.len_min') > self.get('task.len_max'):
            problems.append("task.len_min 不可大於 task.len_max")
        if self.get('train.steps') < 0:
            problems.append("train.steps 不可為負")

        if problems:
            raise ConfigError("配置無效: " + '; '.join(problems))
        return True

    def items(self) -> Iterable[Tuple[str, Any]]:
        """依節點順序列出所有 (點分隔鍵, 值)"""
        for section, values in self._config.items():
            for key, value in values.items():
                yield f"{section}.{key}", value

    def to_flat_text(self) -> str:
        """序列化為扁平的 key=value 文字（可由 from_flat_text 還原）"""
        return ''.join(f"{key}={_format_value(value)}\n" for key, value in self.items())

    @classmethod
    def from_flat_text(cls, text: str) -> 'Config':
        config = cls(load_env=False)
        for key, value in cls._parse_flat_text(text):
            config.set(key, value)
        return config

    def to_dict(self) -> Dict[str, Any]:
        """返回完整配置字典（深拷貝）"""
        return {section: dict(values) for section, values in self._config.items()}

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
日誌處理模組
============

提供統一的日誌記錄功能，支持彩色輸出和文件記錄。
"""

import logging
import logging.handlers
from pathlib import Path
from typing import Any, Dict, Optional

import colorlog

LOGGER_NAME = 'nonar_mmi'


def setup_logger(config: Dict[str, Any]) -> logging.Logger:
    """
    設置日誌記錄器

    Args:
        config: 日誌配置字典（level / format / file / max_bytes / backup_count）

    Returns:
        配置好的日誌記錄器
    """
    log_level = str(config.get('level', 'INFO')).upper()
    log_format = config.get('format', '%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    log_file = config.get('file')
    max_bytes = int(config.get('max_bytes', 10485760))  # 10MB
    backup_count = int(config.get('backup_count', 5))

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, log_level))

    # 清除現有的處理器
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    console_handler = colorlog.StreamHandler()
    console_handler.setLevel(getattr(logging, log_level))
    console_handler.setFormatter(colorlog.ColoredFormatter(
        '%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s%(reset)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        log_colors={
            'DEBUG': 'cyan',
            'INFO': 'green',
            'WARNING': 'yellow',
            'ERROR': 'red',
            'CRITICAL': 'red,bg_white',
        }
    ))
    logger.addHandler(console_handler)

    # 文件處理器（輪轉日誌）；file 為空時只輸出到終端
    if log_file:
        log_file_path = Path(log_file)
        log_file_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file_path,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding='utf-8'
        )
        file_handler.setLevel(getattr(logging, log_level))
        file_handler.setFormatter(logging.Formatter(log_format, datefmt='%Y-%m-%d %H:%M:%S'))
        logger.addHandler(file_handler)

    logger.propagate = False

    logger.debug(f"日誌系統初始化完成 - 級別: {log_level}, 文件: {log_file or '(無)'}")

    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    獲取日誌記錄器

    Args:
        name: 子記錄器名稱

    Returns:
        日誌記錄器
    """
    if name:
        return logging.getLogger(f'{LOGGER_NAME}.{name}')
    return logging.getLogger(LOGGER_NAME)


class LoggingMixin:
    """日誌記錄混入類別"""

    @property
    def logger(self) -> logging.Logger:
        """獲取類別專用的日誌記錄器；建構時傳入的 logger 優先"""
        injected = self.__dict__.get('_logger')
        if injected is not None:
            return injected
        return get_logger(self.__class__.__name__)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置模組
========

提供非自迴歸 MMI 生成的配置管理功能。
"""

from .settings import DECODE_MODES, TASKS, Config

__all__ = ['Config', 'DECODE_MODES', 'TASKS']

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Adam 最佳化器
=============

帶偏差校正的 Adam，預設 β1=0.9、β2=0.98、ε=1e-8。
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    """Adam 的超參數與每個參數的一、二階動量"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def zero_grad(params: Mapping[str, Tensor]):
    for p in params.values():
        p.grad = None


def adam_step(params: Mapping[str, Tensor], state: AdamState) -> AdamState:
    """
    對所有參數套用一次 Adam 更新（原地修改 data）

    Args:
        params: 名稱到參數張量的映射；共享的張量只能出現一次
        state: 最佳化器狀態，step 會加一

    Returns:
        更新後的狀態（同一物件）
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ContractError(f"以下參數缺少梯度: {', '.join(missing[:5])}")

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step

    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        if m.shape != p.shape:
            raise ContractError(f"參數 {name} 的動量形狀 {m.shape} 與參數 {p.shape} 不符")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        p.data -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)

    return state

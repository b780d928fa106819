#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MMI 分數
========

把前向與反向對數機率組合成可分解的 MMI 目標：

    L = Σ_t [ (1 - λ) · log p(y_t | x) + (λ / L_y) · Σ_{t'} log p(x_{t'} | y_t) ]

全部在對數空間計算。
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from engine.errors import ConfigError, SequenceLengthError

from models.backward_model import BackwardModel
from models.forward_model import ForwardModel

Number = Union[float, np.ndarray]


def check_lambda(lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"λ 必須在 [0, 1]，目前為 {lam}")
    return float(lam)


def per_token_mmi(fwd_t: Number, bwd_t: Number, lam: float, target_len: int) -> Number:
    """
    單一位置的 MMI 分數 (1 - λ)·fwd_t + (λ / L_y)·bwd_t（可對陣列逐元素計算）

    Args:
        fwd_t: log p(y_t | x)
        bwd_t: Σ_{t'} log p(x_{t'} | y_t)
        lam: λ ∈ [0, 1]
        target_len: L_y
    """
    check_lambda(lam)
    if target_len < 1:
        raise SequenceLengthError(f"L_y 必須 >= 1，目前為 {target_len}")
    return (1.0 - lam) * fwd_t + (lam / target_len) * bwd_t


def two_term_total(fwd: Sequence[float], bwd: Sequence[float], lam: float) -> float:
    """(1 - λ)·Σ_t fwd_t + (λ / L_y)·Σ_t bwd_t"""
    check_lambda(lam)
    return (1.0 - lam) * float(np.sum(fwd)) + (lam / len(fwd)) * float(np.sum(bwd))


@dataclass
class MmiScoreBreakdown:
    """
    每個位置的前向、反向分數與總分

    backward_scored 為 False 時反向欄位沒有計算（λ = 0 的分數表），一律為 0。
    """
    forward: np.ndarray
    backward: np.ndarray
    lam: float
    total: float
    backward_scored: bool = True

    @classmethod
    def from_terms(cls, forward: np.ndarray, backward: np.ndarray, lam: float,
                   backward_scored: bool = True) -> 'MmiScoreBreakdown':
        forward = np.asarray(forward, dtype=np.float64)
        backward = np.asarray(backward, dtype=np.float64)
        per_token = per_token_mmi(forward, backward, lam, len(forward))
        return cls(forward, backward, float(lam), float(np.sum(per_token)), backward_scored)

    @property
    def length(self) -> int:
        return len(self.forward)

    @property
    def per_token(self) -> np.ndarray:
        return per_token_mmi(self.forward, self.backward, self.lam, self.length)


def mmi_objective(x: Sequence[int], y: Sequence[int], lam: float, forward: ForwardModel,
                  backward: BackwardModel) -> MmiScoreBreakdown:
    """
    計算一組 (x, y) 的 MMI 分數明細

    Args:
        x: 來源序列
        y: 候選回覆
        lam: λ
        forward: 前向模型
        backward: 反向模型

    Returns:
        MmiScoreBreakdown
    """
    check_lambda(lam)
    if len(y) == 0:
        raise SequenceLengthError("候選回覆不可為空")
    y = np.asarray(y, dtype=np.int64)
    positions = np.arange(len(y))
    fwd = forward.forward_logprobs(x, len(y))[positions, y]

    sums = backward.backward_sums(x, y, len(y))
    bwd = sums[positions, positions]
    return MmiScoreBreakdown.from_terms(fwd, bwd, lam)


@dataclass
class ScoreTable:
    """固定長度下所有 (位置, 內容 token) 的分數表，形狀 [L_y, |V|]"""
    token_ids: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    mmi: np.ndarray
    lam: float
    backward_scored: bool = True

    @property
    def length(self) -> int:
        return self.mmi.shape[0]

    def breakdown(self, columns: Sequence[int]) -> MmiScoreBreakdown:
        """以各位置選定的欄位（token 在 token_ids 中的索引）組出分數明細"""
        rows = np.arange(self.length)
        columns = np.asarray(columns, dtype=np.int64)
        return MmiScoreBreakdown.from_terms(self.forward[rows, columns], self.backward[rows, columns], self.lam,
                                            self.backward_scored)


def score_table(x: Sequence[int], target_len: int, lam: float, forward: ForwardModel,
                backward: BackwardModel, token_ids: Sequence[int]) -> ScoreTable:
    """
    建立長度 target_len 的逐位置分數表

    λ = 0 時不需要反向模型：反向欄位填 0 並標記 backward_scored=False，
    由此表組出的分數明細也帶著這個標記；需要真實反向分數時改用 mmi_objective。
    """
    check_lambda(lam)
    token_ids = np.asarray(token_ids, dtype=np.int64)
    fwd = forward.forward_logprobs(x, target_len)[:, token_ids]
    if lam > 0.0:
        bwd = backward.backward_sums(x, token_ids, target_len)
    else:
        bwd = np.zeros_like(fwd)
    return ScoreTable(token_ids, fwd, bwd, per_token_mmi(fwd, bwd, lam, target_len), lam, lam > 0.0)

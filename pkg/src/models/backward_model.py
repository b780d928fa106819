#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非自迴歸反向模型
================

對單一目標 token y_t：把它放在長度 L_y 的序列第 t 個位置、其餘位置填 <dummy>，
再平行重建整個來源 x，得到 p(x_{t'} | y_t)，t' = 1..L_x。

序列分數為各 y_t 重建機率的幾何平均（對數空間）：
    (1 / L_y) · Σ_t Σ_{t'} log p(x_{t'} | y_t)
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from engine.errors import SequenceLengthError, TokenIndexError
from engine.optim import AdamState, adam_step, zero_grad
from engine.tensor import Tensor, log_softmax, no_grad

from utils.corpus_handler import DUMMY, SourceTargetPair

from .forward_model import NonARModel, stack_batch


def backward_encoder_input(token: int, t: int, target_len: int) -> Tuple[int, ...]:
    """
    反向模型的編碼器輸入

    Args:
        token: 目標 token y_t
        t: 位置（1 起算）
        target_len: 目標長度 L_y

    Returns:
        長度 L_y 的序列，第 t 個位置為 token，其餘為 <dummy>
    """
    if not 1 <= t <= target_len:
        raise TokenIndexError(f"位置 t={t} 超出 [1, {target_len}]")
    seq = [DUMMY] * target_len
    seq[t - 1] = int(token)
    return tuple(seq)


def expand_instances(batch: Sequence[SourceTargetPair], positions: int = 0,
                     rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    每組句對的每個目標位置各展開成一個訓練樣本

    Args:
        batch: 同形狀的句對
        positions: >0 時每組句對只抽樣這麼多個位置
        rng: 位置抽樣用的亂數產生器

    Returns:
        (編碼器輸入 [N, L_y], 重建目標 [N, L_x])
    """
    src, tgt = stack_batch(batch)
    target_len = tgt.shape[1]
    inputs, targets = [], []
    for row in range(len(batch)):
        ts = np.arange(1, target_len + 1)
        if 0 < positions < target_len:
            ts = np.sort(rng.choice(ts, size=positions, replace=False))
        for t in ts:
            inputs.append(backward_encoder_input(tgt[row, t - 1], int(t), target_len))
            targets.append(src[row])
    return np.asarray(inputs, dtype=np.int64), np.asarray(targets, dtype=np.int64)


class BackwardModel(NonARModel):
    """p(x | y_t) = Π_{t'} p(x_{t'} | y_t)"""

    prefix = 'bwd'

    def logprobs_batch(self, encoder_inputs: np.ndarray, source_len: int) -> np.ndarray:
        """
        一批反向編碼器輸入的重建對數機率

        Args:
            encoder_inputs: [N, L_y]
            source_len: 要重建的來源長度 L_x

        Returns:
            [N, L_x, V]
        """
        if source_len < 1:
            raise SequenceLengthError(f"來源長度必須 >= 1，目前為 {source_len}")
        with no_grad():
            encoded = self.encode(encoder_inputs)
            return log_softmax(self.decode(encoded, source_len), axis=-1).data

    def backward_logprobs(self, token: int, t: int, target_len: int, source_len: int) -> np.ndarray:
        """[L_x, V]，第 t' 列為 log p(x_{t'} = · | y_t)"""
        encoder_input = np.asarray([backward_encoder_input(token, t, target_len)])
        return self.logprobs_batch(encoder_input, source_len)[0]

    def backward_sums(self, x: Sequence[int], tokens: Sequence[int], target_len: int) -> np.ndarray:
        """
        所有 (位置, 候選 token) 組合的來源重建對數機率總和

        Args:
            x: 來源序列
            tokens: 候選 token id
            target_len: 目標長度 L_y

        Returns:
            [L_y, len(tokens)]，元素 (t-1, j) 為 Σ_{t'} log p(x_{t'} | tokens[j] 位於 t)
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        inputs = np.full((target_len, len(tokens), target_len), DUMMY, dtype=np.int64)
        for t in range(target_len):
            inputs[t, :, t] = tokens
        logp = self.logprobs_batch(inputs.reshape(-1, target_len), len(x))
        picked = logp[:, np.arange(len(x)), x].sum(axis=1)
        return picked.reshape(target_len, len(tokens))

    def backward_sequence_score(self, x: Sequence[int], y: Sequence[int]) -> float:
        """(1 / L_y) · Σ_t Σ_{t'} log p(x_{t'} | y_t)"""
        if len(x) == 0 or len(y) == 0:
            raise SequenceLengthError("來源與目標都不可為空")
        inputs = np.asarray([backward_encoder_input(tok, t, len(y)) for t, tok in enumerate(y, start=1)])
        logp = self.logprobs_batch(inputs, len(x))
        return float(logp[:, np.arange(len(x)), np.asarray(x)].sum() / len(y))

    def instance_losses(self, batch: Sequence[SourceTargetPair], rng: Optional[np.random.Generator] = None,
                        positions: int = 0,
                        position_rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        """
        展開後的重建交叉熵與（僅為對稱而訓練的）反向長度交叉熵

        Returns:
            (token 損失, 長度損失)
        """
        inputs, targets = expand_instances(batch, positions, position_rng)
        return self.batch_losses(inputs, targets, rng)


def train_step_backward(batch: Sequence[SourceTargetPair], model: BackwardModel, state: AdamState,
                        rng: Optional[np.random.Generator] = None) -> float:
    """反向模型單獨的一步訓練，回傳損失值"""
    params = model.parameters()
    zero_grad(params)
    token_loss, length_loss = model.instance_losses(batch, rng)
    loss = token_loss + length_loss
    loss.backward()
    adam_step(params, state)
    return loss.item()

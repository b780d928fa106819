#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非自迴歸前向模型
================

平行計算 p(y_t | x)，t = 1..m，並以長度分類器預測 Δm = L_y - L_x。
前向與反向模型共用同一個 token 嵌入張量（參數字典中的 ``embed``）。
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from engine.errors import ContractError, SequenceLengthError
from engine.optim import AdamState, adam_step, zero_grad
from engine.tensor import Tensor, cross_entropy, log_softmax, no_grad

from utils.corpus_handler import SourceTargetPair
from utils.logger import LoggingMixin

from .transformer import (MAX_LENGTH_DELTA, BlockConfig, EncoderOutput, Params, copy_decoder_inputs,
                          decode_stack, encode, init_decoder_params, init_embedding, init_encoder_params,
                          init_length_params, length_class, length_logits)

EMBED_NAME = 'embed'


def init_nonar_params(vocab_size: int, cfg: BlockConfig, seed: int) -> Params:
    """
    初始化前向（fwd.*）與反向（bwd.*）模型參數，兩者共用 ``embed``

    Args:
        vocab_size: 含保留 token 的詞彙量
        cfg: 區塊設定
        seed: 初始化種子

    Returns:
        參數字典
    """
    rng = np.random.default_rng(seed)
    params: Params = {EMBED_NAME: init_embedding(vocab_size, cfg, rng, EMBED_NAME)}
    for direction in ('fwd', 'bwd'):
        params.update(init_encoder_params(cfg, rng, f"{direction}.enc"))
        params.update(init_decoder_params(cfg, rng, f"{direction}.dec"))
        params.update(init_length_params(cfg, rng, f"{direction}.len"))
    return params


class NonARModel(LoggingMixin):
    """編碼器 + 長度分類器 + 詞彙注意力解碼器，前向與反向模型的共同骨架"""

    prefix = 'fwd'

    def __init__(self, params: Params, cfg: BlockConfig, logger=None):
        """
        Args:
            params: 參數字典（可同時包含其他模型的參數）
            cfg: 區塊設定
            logger: 日誌記錄器
        """
        self.params = params
        self.cfg = cfg
        if logger:
            self._logger = logger
        self._validate_params()

    def _validate_params(self):
        required = [EMBED_NAME, f"{self.prefix}.enc.pos", f"{self.prefix}.dec.pos", f"{self.prefix}.len.w"]
        missing = [name for name in required if name not in self.params]
        if missing:
            raise ContractError(f"{self.__class__.__name__} 缺少參數: {', '.join(missing)}")

    @property
    def embed(self) -> Tensor:
        return self.params[EMBED_NAME]

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    def parameters(self) -> Params:
        """本模型會用到的參數（含共用嵌入）"""
        head = f"{self.prefix}."
        return {name: p for name, p in self.params.items() if name == EMBED_NAME or name.startswith(head)}

    def encode(self, src_ids, rng: Optional[np.random.Generator] = None) -> EncoderOutput:
        return encode(src_ids, self.params, f"{self.prefix}.enc", self.embed, self.cfg, rng)

    def decode(self, encoded: EncoderOutput, m: int, rng: Optional[np.random.Generator] = None,
               trace: Optional[List[np.ndarray]] = None) -> Tensor:
        if m < 1:
            raise SequenceLengthError(f"目標長度必須 >= 1，目前為 {m}")
        inputs = copy_decoder_inputs(encoded, m)
        return decode_stack(inputs, encoded, self.embed, self.params, f"{self.prefix}.dec", self.cfg,
                            rng=rng, trace=trace)

    def length_logits(self, encoded: EncoderOutput) -> Tensor:
        return length_logits(encoded, self.params, f"{self.prefix}.len")

    def batch_losses(self, src_ids: np.ndarray, tgt_ids: np.ndarray,
                     rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        """
        一批等長句對的 token 交叉熵與長度分類交叉熵

        Args:
            src_ids: [B, L_src]
            tgt_ids: [B, L_tgt]，以真實長度 L_tgt 解碼
            rng: dropout 亂數產生器

        Returns:
            (token 損失, 長度損失)
        """
        encoded = self.encode(src_ids, rng)
        logits = self.decode(encoded, tgt_ids.shape[1], rng)
        token_loss = cross_entropy(logits, tgt_ids)
        delta = length_class(tgt_ids.shape[1] - src_ids.shape[1])
        length_loss = cross_entropy(self.length_logits(encoded), np.full(src_ids.shape[0], delta))
        return token_loss, length_loss


class ForwardModel(NonARModel):
    """p(y | x) = Π_t p(y_t | x)"""

    prefix = 'fwd'

    def forward_logprobs(self, x: Sequence[int], m: int) -> np.ndarray:
        """
        每個目標位置的對數機率

        Args:
            x: 來源 id 序列
            m: 目標長度

        Returns:
            [m, V]，第 t 列為 log p(y_t = · | x)
        """
        with no_grad():
            encoded = self.encode(np.asarray([x]))
            return log_softmax(self.decode(encoded, m), axis=-1).data[0]

    def sequence_logprob(self, x: Sequence[int], y: Sequence[int]) -> float:
        rows = self.forward_logprobs(x, len(y))
        return float(rows[np.arange(len(y)), np.asarray(y)].sum())

    def length_logprobs(self, x: Sequence[int]) -> np.ndarray:
        """[41] 對數機率，第 c 項對應 Δm = c - 20"""
        with no_grad():
            return log_softmax(self.length_logits(self.encode(np.asarray([x]))), axis=-1).data[0]

    def candidate_lengths(self, x: Sequence[int], top: int) -> List[Tuple[int, float]]:
        """
        機率最高的 top 個合法目標長度

        Returns:
            [(m, log p(Δm))]，依機率遞減排序，同分時較短者優先；
            m = L_x + Δm 夾在 [1, max_positions]，夾到同一長度的類別取最大者
        """
        logp = self.length_logprobs(x)
        best = {}
        for c in range(len(logp)):
            m = int(np.clip(len(x) + c - MAX_LENGTH_DELTA, 1, self.cfg.max_positions))
            if m not in best or logp[c] > best[m]:
                best[m] = float(logp[c])
        candidates = sorted(best.items(), key=lambda item: (-item[1], item[0]))
        return candidates[:max(1, top)]


def stack_batch(batch: Sequence[SourceTargetPair]) -> Tuple[np.ndarray, np.ndarray]:
    """把同形狀的句對堆成 [B, L_x] 與 [B, L_y]"""
    if not batch:
        raise ContractError("批次不可為空")
    shapes = {pair.shape for pair in batch}
    if len(shapes) != 1:
        raise ContractError(f"批次內句對形狀不一致: {sorted(shapes)}")
    return (np.asarray([p.source for p in batch], dtype=np.int64),
            np.asarray([p.target for p in batch], dtype=np.int64))


def train_step_forward(batch: Sequence[SourceTargetPair], model: ForwardModel, state: AdamState,
                       rng: Optional[np.random.Generator] = None) -> float:
    """
    前向模型單獨的一步訓練：token 交叉熵 + 長度交叉熵，再做一次 Adam 更新

    Returns:
        該步的損失值
    """
    params = model.parameters()
    zero_grad(params)
    src, tgt = stack_batch(batch)
    token_loss, length_loss = model.batch_losses(src, tgt, rng)
    loss = token_loss + length_loss
    loss.backward()
    adam_step(params, state)
    return loss.item()

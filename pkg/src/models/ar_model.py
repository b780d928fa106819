#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
自迴歸基準模型
==============

標準的編碼器 + 因果遮罩解碼器，用於 p(y|x) 與 p(x|y)。
解碼器輸入以 <bos> 開頭，訓練目標以 <eos> 結尾；輸出層綁定各自的嵌入矩陣。
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from engine.errors import ContractError
from engine.optim import AdamState, adam_step, zero_grad
from engine.tensor import Tensor, cross_entropy, embedding, index_select, log_softmax, no_grad

from utils.corpus_handler import BOS, EOS, NUM_RESERVED, SourceTargetPair
from utils.logger import LoggingMixin

from .forward_model import stack_batch
from .transformer import (BlockConfig, EncoderOutput, Params, decode_stack, encode, init_decoder_params,
                          init_embedding, init_encoder_params)

AR_PREFIXES = ('ar_fwd', 'ar_bwd')


def init_ar_params(vocab_size: int, cfg: BlockConfig, seed: int) -> Params:
    """初始化 ar_fwd.*（p(y|x)）與 ar_bwd.*（p(x|y)）兩個模型的參數"""
    rng = np.random.default_rng([seed, 1])
    params: Params = {}
    for prefix in AR_PREFIXES:
        params[f"{prefix}.embed"] = init_embedding(vocab_size, cfg, rng, f"{prefix}.embed")
        params.update(init_encoder_params(cfg, rng, f"{prefix}.enc"))
        params.update(init_decoder_params(cfg, rng, f"{prefix}.dec", vocab_attention=False))
    return params


def allowed_mask(vocab_size: int, step: int) -> np.ndarray:
    """第 step 步（1 起算）可輸出的 token：內容 token，以及第 2 步起的 <eos>"""
    mask = np.zeros(vocab_size, dtype=bool)
    mask[NUM_RESERVED:] = True
    mask[EOS] = step > 1
    return mask


class ArModel(LoggingMixin):
    """單一方向的自迴歸 Transformer"""

    def __init__(self, params: Params, cfg: BlockConfig, prefix: str = 'ar_fwd', logger=None):
        self.params = params
        self.cfg = cfg
        self.prefix = prefix
        if logger:
            self._logger = logger
        if f"{prefix}.embed" not in params:
            raise ContractError(f"ArModel 缺少參數: {prefix}.embed")

    @property
    def embed(self) -> Tensor:
        return self.params[f"{self.prefix}.embed"]

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    def parameters(self) -> Params:
        head = f"{self.prefix}."
        return {name: p for name, p in self.params.items() if name.startswith(head)}

    def encode(self, src_ids, rng: Optional[np.random.Generator] = None) -> EncoderOutput:
        return encode(src_ids, self.params, f"{self.prefix}.enc", self.embed, self.cfg, rng)

    def logits(self, encoded: EncoderOutput, prefix_ids: np.ndarray,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        教師強制下每個前綴位置的下一個 token logits

        Args:
            encoded: 編碼器輸出 [B, L_src, d]
            prefix_ids: [B, L_prefix]，以 <bos> 開頭
            rng: dropout 亂數產生器

        Returns:
            [B, L_prefix, V]
        """
        inputs = embedding(self.embed, prefix_ids)
        return decode_stack(inputs, encoded, self.embed, self.params, f"{self.prefix}.dec", self.cfg,
                            rng=rng, vocab_attention=False, causal=True)

    def batch_loss(self, src_ids: np.ndarray, tgt_ids: np.ndarray,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
        batch = tgt_ids.shape[0]
        decoder_in = np.concatenate([np.full((batch, 1), BOS), tgt_ids], axis=1)
        decoder_out = np.concatenate([tgt_ids, np.full((batch, 1), EOS)], axis=1)
        return cross_entropy(self.logits(self.encode(src_ids, rng), decoder_in, rng), decoder_out)

    def sequence_logprob(self, src: Sequence[int], tgt: Sequence[int]) -> float:
        """教師強制的 log p(tgt | src)，包含結尾的 <eos>"""
        tgt = list(tgt)
        with no_grad():
            logp = log_softmax(self.logits(self.encode(np.asarray([src])), np.asarray([[BOS] + tgt])),
                               axis=-1).data[0]
        return float(logp[np.arange(len(tgt) + 1), np.asarray(tgt + [EOS])].sum())

    def step_logprobs(self, encoded: EncoderOutput, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        """
        一批等長前綴的下一步對數機率

        Args:
            encoded: 單一來源的編碼器輸出（B=1），會對每個前綴重複使用
            prefixes: 以 <bos> 開頭、長度相同的前綴

        Returns:
            [len(prefixes), V]
        """
        prefix_ids = np.asarray(prefixes, dtype=np.int64)
        with no_grad():
            states = index_select(encoded.states, np.zeros(len(prefix_ids), dtype=np.int64), axis=0)
            logits = self.logits(EncoderOutput(states), prefix_ids)
            return log_softmax(logits, axis=-1).data[:, -1, :]

    def greedy_decode(self, src: Sequence[int], max_len: int) -> Tuple[List[int], List[float]]:
        """
        逐步取機率最高的 token（同分取最小 id），直到 <eos> 或 max_len

        達到 max_len 而截斷時，最後一項是在該處補上 <eos> 的對數機率，
        因此 steps 的總和等於教師強制的 sequence_logprob。

        Returns:
            (不含 <eos> 的輸出, 每一步選中 token 的對數機率)
        """
        with no_grad():
            encoded = self.encode(np.asarray([src]))
        prefix = [BOS]
        steps: List[float] = []
        for step in range(1, max_len + 1):
            logp = self.step_logprobs(encoded, [prefix])[0]
            masked = np.where(allowed_mask(self.vocab_size, step), logp, -np.inf)
            token = int(np.argmax(masked))
            steps.append(float(logp[token]))
            if token == EOS:
                break
            prefix.append(token)
        else:
            steps.append(float(self.step_logprobs(encoded, [prefix])[0, EOS]))
        return prefix[1:], steps


def train_step_ar(batch: Sequence[SourceTargetPair], model: ArModel, state: AdamState,
                  rng: Optional[np.random.Generator] = None) -> float:
    """自迴歸模型單獨的一步訓練；ar_bwd 模型以目標為輸入、來源為輸出"""
    params = model.parameters()
    zero_grad(params)
    src, tgt = stack_batch(batch)
    if model.prefix == 'ar_bwd':
        src, tgt = tgt, src
    loss = model.batch_loss(src, tgt, rng)
    loss.backward()
    adam_step(params, state)
    return loss.item()

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
自迴歸解碼
==========

Beam search（可加兄弟懲罰的多樣化版本）以及用 p(x|y) 對 N-best 重新排序。
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from engine.errors import ContractError
from engine.tensor import no_grad

from models.ar_model import ArModel, allowed_mask
from utils.corpus_handler import BOS, EOS

from .mmi_scoring import check_lambda

# 長度分類器可預測的最大長度差
AR_LENGTH_MARGIN = 20


@dataclass
class BeamHypothesis:
    """
    Beam 中的一個假設

    log_prob 是真實的累積對數機率；score 是排序用分數（扣除兄弟懲罰），γ = 0 時兩者相同。
    finished 表示在搜尋中選到 <eos>；達到長度上限而截斷的假設為 False，
    但其 log_prob、score 與 steps 已補上在該處結束的 <eos> 對數機率，與教師強制的分數一致。
    """
    tokens: List[int]
    log_prob: float
    score: float
    parent: int = -1
    finished: bool = False
    steps: List[float] = field(default_factory=list)


@dataclass
class RerankedHypothesis:
    hypothesis: BeamHypothesis
    forward: float
    backward: float
    score: float

    @property
    def tokens(self) -> List[int]:
        return self.hypothesis.tokens


def default_max_len(x: Sequence[int], ar_model: ArModel) -> int:
    """L_x + 20，且解碼器輸入（含 <bos>）不超過位置上限"""
    return max(1, min(len(x) + AR_LENGTH_MARGIN, ar_model.cfg.max_positions - 1))


def _close_truncated(encoded, live: List[BeamHypothesis], ar_model: ArModel) -> List[BeamHypothesis]:
    """達到 max_len 的假設補上 <eos> 一步"""
    eos = ar_model.step_logprobs(encoded, [[BOS] + h.tokens for h in live])[:, EOS]
    return [BeamHypothesis(h.tokens, h.log_prob + float(value), h.score + float(value), h.parent, False,
                           h.steps + [float(value)])
            for h, value in zip(live, eos)]


def ar_beam_search(x: Sequence[int], beam: int, max_len: int, sibling_penalty: float,
                   ar_model: ArModel) -> List[BeamHypothesis]:
    """
    從 <bos> 開始的 beam search

    每個父假設最多展開 beam 個子節點，第 r 名（0 起算）的子節點排序分數扣掉 γ·r。
    <eos> 不能是第一個 token；已結束的假設達到 beam 個或所有假設達到 max_len 時停止。

    Args:
        x: 來源序列
        beam: beam 大小
        max_len: 最大輸出長度（不含 <eos>）
        sibling_penalty: γ，0 即為一般 beam search
        ar_model: p(y|x) 模型

    Returns:
        依排序分數遞減的假設，最多 beam 個
    """
    if beam < 1:
        raise ContractError(f"beam 必須 >= 1，目前為 {beam}")
    if max_len < 1:
        raise ContractError(f"max_len 必須 >= 1，目前為 {max_len}")

    with no_grad():
        encoded = ar_model.encode(np.asarray([x]))
    live = [BeamHypothesis([], 0.0, 0.0)]
    finished: List[BeamHypothesis] = []

    for step in range(1, max_len + 1):
        logp = ar_model.step_logprobs(encoded, [[BOS] + h.tokens for h in live])
        mask = allowed_mask(ar_model.vocab_size, step)
        allowed = np.flatnonzero(mask)

        expansions = []
        for parent_index, parent in enumerate(live):
            row = logp[parent_index, allowed]
            order = np.lexsort((allowed, -row))[:beam]
            for rank, col in enumerate(order):
                token = int(allowed[col])
                value = float(row[col])
                expansions.append((parent.score + value - sibling_penalty * rank, parent_index, rank,
                                   token, parent.log_prob + value, value))
        expansions.sort(key=lambda e: (-e[0], e[1], e[2]))

        live_next = []
        for score, parent_index, _, token, log_prob, value in expansions[:beam]:
            parent = live[parent_index]
            steps = parent.steps + [value]
            if token == EOS:
                finished.append(BeamHypothesis(list(parent.tokens), log_prob, score, parent_index, True, steps))
            else:
                live_next.append(BeamHypothesis(parent.tokens + [token], log_prob, score, parent_index,
                                                steps=steps))
        live = live_next
        if len(finished) >= beam or not live:
            break

    if len(finished) < beam and live:
        finished.extend(_close_truncated(encoded, live, ar_model))
    finished.sort(key=lambda h: -h.score)
    return finished[:beam]


def ar_greedy_decode(x: Sequence[int], max_len: int, ar_model: ArModel) -> BeamHypothesis:
    tokens, steps = ar_model.greedy_decode(x, max_len)
    log_prob = 0.0
    for value in steps:
        log_prob += value
    return BeamHypothesis(tokens, log_prob, log_prob, finished=len(tokens) < max_len, steps=steps)


def ar_mmi_rerank(nbest: Sequence[BeamHypothesis], lam: float, x: Sequence[int],
                  ar_backward: ArModel) -> List[RerankedHypothesis]:
    """
    以 (1 - λ)·log p(y|x) + λ·log p(x|y) 穩定排序 N-best

    log p(y|x) 取 beam search 記錄的真實累積對數機率，log p(x|y) 以教師強制計算。
    """
    check_lambda(lam)
    if not nbest:
        raise ContractError("N-best 清單不可為空")
    reranked = []
    for hyp in nbest:
        backward = ar_backward.sequence_logprob(hyp.tokens, x) if hyp.tokens else -np.inf
        score = (1.0 - lam) * hyp.log_prob + (lam * backward if lam > 0.0 else 0.0)
        reranked.append(RerankedHypothesis(hyp, hyp.log_prob, backward, score))
    return sorted(reranked, key=lambda r: -r.score)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非自迴歸解碼
============

MMI 分數對固定長度可逐位置分解，因此全域最佳序列就是各位置的 argmax；
N-best 則以優先佇列在各位置的排序清單上惰性列舉。
"""

import heapq
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from engine.errors import ConfigError, ContractError

from models.ar_model import ArModel
from models.backward_model import BackwardModel
from models.forward_model import ForwardModel

from utils.corpus_handler import NUM_RESERVED

from .mmi_scoring import MmiScoreBreakdown, ScoreTable, check_lambda, score_table


@dataclass
class Candidate:
    """解碼候選：token、分數明細與來源（長度排名 / 列舉排名）"""
    tokens: Tuple[int, ...]
    breakdown: MmiScoreBreakdown
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def score(self) -> float:
        return self.breakdown.total


def select_column(scores: np.ndarray, tie_break: str = 'lowest') -> int:
    """一列分數的 argmax；lowest 取最小索引，highest 取最大索引"""
    if tie_break == 'lowest':
        return int(np.argmax(scores))
    if tie_break == 'highest':
        return len(scores) - 1 - int(np.argmax(scores[::-1]))
    raise ConfigError(f"未知的 tie_break: {tie_break}")


def content_token_ids(vocab_size: int) -> np.ndarray:
    return np.arange(NUM_RESERVED, vocab_size, dtype=np.int64)


def _target_lengths(x: Sequence[int], forward: ForwardModel, top: int,
                    target_length: Optional[int]) -> List[Tuple[int, float]]:
    if target_length is not None:
        return [(int(target_length), 0.0)]
    return forward.candidate_lengths(x, top)


def decode_table(table: ScoreTable, tie_break: str = 'lowest') -> Tuple[Tuple[int, ...], MmiScoreBreakdown]:
    columns = [select_column(row, tie_break) for row in table.mmi]
    return tuple(int(table.token_ids[c]) for c in columns), table.breakdown(columns)


def nonar_mmi_decode(x: Sequence[int], lam: float, forward: ForwardModel, backward: BackwardModel,
                     target_length: Optional[int] = None, tie_break: str = 'lowest') -> Candidate:
    """
    非自迴歸 MMI 解碼

    Args:
        x: 來源序列
        lam: λ；0 時等同純前向的非自迴歸解碼
        forward: 前向模型
        backward: 反向模型
        target_length: 指定目標長度；None 時取長度分類器的 argmax
        tie_break: 同分時選最小（lowest）或最大（highest）token id

    Returns:
        最佳候選
    """
    check_lambda(lam)
    length, length_logp = _target_lengths(x, forward, 1, target_length)[0]
    table = score_table(x, length, lam, forward, backward, content_token_ids(forward.vocab_size))
    tokens, breakdown = decode_table(table, tie_break)
    return Candidate(tokens, breakdown, {'length_rank': 0, 'length_logprob': length_logp, 'rank': 0})


def nonar_decode(x: Sequence[int], forward: ForwardModel, backward: BackwardModel,
                 target_length: Optional[int] = None, tie_break: str = 'lowest') -> Candidate:
    """純前向的非自迴歸解碼（λ = 0）"""
    return nonar_mmi_decode(x, 0.0, forward, backward, target_length, tie_break)


def kbest_table(table: ScoreTable, k: int, token_candidates: int) -> List[Tuple[float, Tuple[int, ...]]]:
    """
    可分解分數下的精確 k-best

    每個位置的 token 依分數遞減（同分取較小 id）排序並截到 token_candidates 個；
    從全部取第一名開始，以「只遞增最右側非零排名及其右邊位置」的後繼規則展開，
    每個排名向量恰好被產生一次。

    Returns:
        [(總分, 各位置欄位)]，依總分遞減
    """
    length = table.length
    width = min(token_candidates, table.mmi.shape[1])
    order = np.stack([np.lexsort((np.arange(len(row)), -row))[:width] for row in table.mmi])
    rows = np.arange(length)

    def total(ranks: Tuple[int, ...]) -> float:
        return float(np.sum(table.mmi[rows, order[rows, list(ranks)]]))

    start = (0,) * length
    heap = [(-total(start), start)]
    results = []
    while heap and len(results) < k:
        neg_score, ranks = heapq.heappop(heap)
        results.append((-neg_score, tuple(int(c) for c in order[rows, list(ranks)])))
        nonzero = [j for j, r in enumerate(ranks) if r > 0]
        first = nonzero[-1] if nonzero else 0
        for j in range(first, length):
            if ranks[j] + 1 < width:
                successor = ranks[:j] + (ranks[j] + 1,) + ranks[j + 1:]
                heapq.heappush(heap, (-total(successor), successor))
    return results


def nonar_nbest(x: Sequence[int], lam: float, n_best: int, length_candidates: int, token_candidates: int,
                forward: ForwardModel, backward: BackwardModel,
                target_length: Optional[int] = None) -> List[Candidate]:
    """
    非自迴歸 MMI N-best

    Args:
        x: 來源序列
        lam: λ
        n_best: 最多回傳幾個
        length_candidates: 取機率最高的幾個長度
        token_candidates: 每個位置保留幾個 token
        forward: 前向模型
        backward: 反向模型
        target_length: 指定單一目標長度

    Returns:
        依 MMI 總分遞減的候選，無重複
    """
    check_lambda(lam)
    if n_best < 1:
        raise ContractError(f"N 必須 >= 1，目前為 {n_best}")
    token_ids = content_token_ids(forward.vocab_size)

    pooled = []
    for length_rank, (length, length_logp) in enumerate(
            _target_lengths(x, forward, length_candidates, target_length)):
        table = score_table(x, length, lam, forward, backward, token_ids)
        for rank, (_, columns) in enumerate(kbest_table(table, n_best, token_candidates)):
            tokens = tuple(int(table.token_ids[c]) for c in columns)
            candidate = Candidate(tokens, table.breakdown(columns),
                                  {'length_rank': length_rank, 'length_logprob': length_logp, 'rank': rank})
            pooled.append(candidate)

    pooled.sort(key=lambda c: (-c.score, c.provenance['length_rank'], c.provenance['rank']))
    return pooled[:n_best]


def npd_mmi_select(candidates: Sequence[Candidate], lam: float, x: Sequence[int],
                   ar_forward: ArModel, ar_backward: ArModel) -> Candidate:
    """
    以自迴歸 MMI 分數 (1 - λ)·log p_AR(y|x) + λ·log p_AR(x|y) 從候選中挑一個

    同分時保留清單中較前面的候選。
    """
    check_lambda(lam)
    if not candidates:
        raise ContractError("候選清單不可為空")
    best, best_score = None, -np.inf
    for candidate in candidates:
        fwd = ar_forward.sequence_logprob(x, candidate.tokens)
        bwd = ar_backward.sequence_logprob(candidate.tokens, x) if lam > 0.0 else 0.0
        score = (1.0 - lam) * fwd + lam * bwd
        if best is None or score > best_score:
            best, best_score = candidate, score
    return best

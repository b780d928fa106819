#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
自動評估指標
============

BLEU-4、distinct-1/2、平均長度、停用詞比例，
以及 dull 回覆比例、首 token 集中度與成對 bootstrap 顯著性檢定。

所有函式的輸入都是以空白分隔 token 的字串列表。
"""

from collections import Counter
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from nltk.translate.bleu_score import SmoothingFunction, corpus_bleu
from nltk.util import ngrams

from engine.errors import AlignmentError, ContractError

REPORT_KEYS = ('bleu', 'distinct1', 'distinct2', 'avg_len', 'stopword_pct')


def _require(responses: Sequence[str], name: str):
    if not responses:
        raise ContractError(f"{name}: 輸入不可為空")


def _tokens(line: str) -> List[str]:
    return line.split()


def bleu(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """
    語料層級 BLEU-4（含 brevity penalty），二元以上的精確率做加一平滑

    Args:
        hypotheses: 系統輸出
        references: 參考答案（每個輸出一個）

    Returns:
        [0, 1] 之間的分數
    """
    _require(hypotheses, 'bleu')
    if len(hypotheses) != len(references):
        raise AlignmentError(f"輸出 {len(hypotheses)} 行，參考答案 {len(references)} 行")
    return float(corpus_bleu([[_tokens(r)] for r in references], [_tokens(h) for h in hypotheses],
                             smoothing_function=SmoothingFunction().method2))


def distinct_n(responses: Sequence[str], n: int) -> float:
    """整個回覆集合中不重複的 n-gram 數除以 n-gram 總數"""
    _require(responses, 'distinct_n')
    if n not in (1, 2):
        raise ContractError(f"distinct_n 只支援 n = 1 或 2，目前為 {n}")
    all_ngrams = []
    for response in responses:
        all_ngrams.extend(ngrams(_tokens(response), n))
    if not all_ngrams:
        return 0.0
    return len(set(all_ngrams)) / len(all_ngrams)


def avg_length(responses: Sequence[str]) -> float:
    _require(responses, 'avg_length')
    return float(np.mean([len(_tokens(r)) for r in responses]))


def stopword_pct(responses: Sequence[str], stopwords: frozenset) -> float:
    """停用詞或標點 token 佔全部 token 的百分比"""
    _require(responses, 'stopword_pct')
    tokens = [tok for r in responses for tok in _tokens(r)]
    if not tokens:
        return 0.0
    return 100.0 * sum(tok in stopwords for tok in tokens) / len(tokens)


def dull_rate(responses: Sequence[str], dull_response: str) -> float:
    """與給定 dull 回覆完全相同的輸出比例"""
    _require(responses, 'dull_rate')
    target = _tokens(dull_response)
    return sum(_tokens(r) == target for r in responses) / len(responses)


def first_token_share(responses: Sequence[str]) -> float:
    """以最常見首 token 開頭的回覆比例"""
    _require(responses, 'first_token_share')
    firsts = Counter(_tokens(r)[0] for r in responses if _tokens(r))
    if not firsts:
        return 0.0
    return firsts.most_common(1)[0][1] / len(responses)


def evaluate_responses(hypotheses: Sequence[str], references: Sequence[str],
                       stopwords: frozenset) -> Dict[str, float]:
    """
    計算固定鍵集合的評估報告

    Returns:
        {bleu, distinct1, distinct2, avg_len, stopword_pct}
    """
    if len(hypotheses) != len(references):
        raise AlignmentError(f"輸出 {len(hypotheses)} 行，參考答案 {len(references)} 行")
    return {
        'bleu': bleu(hypotheses, references),
        'distinct1': distinct_n(hypotheses, 1),
        'distinct2': distinct_n(hypotheses, 2),
        'avg_len': avg_length(hypotheses),
        'stopword_pct': stopword_pct(hypotheses, stopwords),
    }


def paired_bootstrap(system_a: Sequence[str], system_b: Sequence[str], references: Sequence[str],
                     metric: Optional[Callable[[Sequence[str], Sequence[str]], float]] = None,
                     n_samples: int = 1000, seed: int = 0) -> Dict[str, float]:
    """
    成對 bootstrap：以相同的重抽樣索引比較兩個系統

    Args:
        system_a: 系統 A 的輸出
        system_b: 系統 B 的輸出
        references: 參考答案
        metric: (輸出, 參考答案) -> 分數，預設 BLEU
        n_samples: 重抽樣次數
        seed: 亂數種子

    Returns:
        {delta: A - B 的原始差, p_value: 重抽樣中 A 不優於 B 的比例, win_rate: A 優於 B 的比例}
    """
    if not len(system_a) == len(system_b) == len(references):
        raise AlignmentError("兩個系統與參考答案的行數必須相同")
    _require(references, 'paired_bootstrap')
    metric = metric or bleu
    rng = np.random.default_rng(seed)
    size = len(references)

    wins = 0
    for _ in range(n_samples):
        idx = rng.integers(0, size, size)
        a = metric([system_a[i] for i in idx], [references[i] for i in idx])
        b = metric([system_b[i] for i in idx], [references[i] for i in idx])
        wins += a > b
    return {
        'delta': metric(system_a, references) - metric(system_b, references),
        'p_value': 1.0 - wins / n_samples,
        'win_rate': wins / n_samples,
    }

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
窮舉驗證器
==========

以最直接的方式重新計算 MMI 分數並窮舉所有序列，用來驗證逐位置解碼與 k-best 的正確性。
這裡只使用 forward_logprobs 的逐列加總與 backward_logprobs（每個 (y_t, t) 各算一次），
與解碼路徑上的批次分數表不共用程式碼。
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from engine.errors import OracleGuardError

from models.ar_model import ArModel
from models.backward_model import BackwardModel
from models.forward_model import ForwardModel
from utils.logger import LoggingMixin

from .ar_decoder import ar_beam_search, ar_mmi_rerank
from .mmi_scoring import check_lambda, mmi_objective, two_term_total
from .nonar_decoder import content_token_ids, nonar_mmi_decode, nonar_nbest

DEFAULT_GUARD = 10 ** 6


def _check_guard(size: int, guard: int):
    if size > guard:
        raise OracleGuardError(size, guard)


class BruteForceOracle(LoggingMixin):
    """固定長度的 MMI 窮舉器，快取前向列與每個 (token, t, L_y) 的反向重建總和"""

    def __init__(self, forward: ForwardModel, backward: BackwardModel, guard: int = DEFAULT_GUARD,
                 token_ids: Optional[Sequence[int]] = None, logger=None):
        self.forward = forward
        self.backward = backward
        self.guard = guard
        self.token_ids = [int(t) for t in (token_ids if token_ids is not None
                                           else content_token_ids(forward.vocab_size))]
        if logger:
            self._logger = logger
        self._forward_rows: Dict[Tuple[Tuple[int, ...], int], np.ndarray] = {}
        self._backward_sums: Dict[Tuple[Tuple[int, ...], int, int, int], float] = {}

    def _rows(self, x: Tuple[int, ...], target_len: int) -> np.ndarray:
        key = (x, target_len)
        if key not in self._forward_rows:
            self._forward_rows[key] = self.forward.forward_logprobs(x, target_len)
        return self._forward_rows[key]

    def _backward(self, x: Tuple[int, ...], token: int, t: int, target_len: int) -> float:
        key = (x, token, t, target_len)
        if key not in self._backward_sums:
            logp = self.backward.backward_logprobs(token, t, target_len, len(x))
            self._backward_sums[key] = float(sum(logp[i, x[i]] for i in range(len(x))))
        return self._backward_sums[key]

    def sequence_score(self, x: Sequence[int], y: Sequence[int], lam: float) -> float:
        """(1 - λ)·Σ_t log p(y_t|x) + (λ / L_y)·Σ_t Σ_{t'} log p(x_{t'}|y_t)"""
        x = tuple(int(i) for i in x)
        rows = self._rows(x, len(y))
        fwd = [rows[t, token] for t, token in enumerate(y)]
        if lam == 0.0:
            return two_term_total(fwd, [0.0] * len(y), lam)
        bwd = [self._backward(x, int(token), t, len(y)) for t, token in enumerate(y, start=1)]
        return two_term_total(fwd, bwd, lam)

    def _enumerate(self, x: Sequence[int], target_len: int, lam: float):
        check_lambda(lam)
        _check_guard(len(self.token_ids) ** target_len, self.guard)
        for y in itertools.product(self.token_ids, repeat=target_len):
            yield y, self.sequence_score(x, y, lam)

    def mmi_argmax(self, x: Sequence[int], target_len: int, lam: float) -> Tuple[Tuple[int, ...], float]:
        """
        窮舉長度 target_len 的所有序列，回傳 MMI 分數最高者

        同分時保留字典序最小的序列。
        """
        best, best_score = None, -np.inf
        for y, score in self._enumerate(x, target_len, lam):
            if best is None or score > best_score:
                best, best_score = y, score
        return best, best_score

    def kbest(self, x: Sequence[int], target_len: int, lam: float, k: int) -> List[Tuple[Tuple[int, ...], float]]:
        """窮舉後依分數遞減排序（同分依字典序）取前 k 個"""
        scored = list(self._enumerate(x, target_len, lam))
        scored.sort(key=lambda item: -item[1])
        return scored[:k]


def brute_force_mmi_argmax(x: Sequence[int], target_len: int, lam: float, forward: ForwardModel,
                           backward: BackwardModel, guard: int = DEFAULT_GUARD) -> Tuple[Tuple[int, ...], float]:
    return BruteForceOracle(forward, backward, guard).mmi_argmax(x, target_len, lam)


def brute_force_kbest(x: Sequence[int], target_len: int, lam: float, k: int, forward: ForwardModel,
                      backward: BackwardModel, guard: int = DEFAULT_GUARD) -> List[Tuple[Tuple[int, ...], float]]:
    return BruteForceOracle(forward, backward, guard).kbest(x, target_len, lam, k)


# ---------------------------------------------------------------------------
# 自迴歸 MMI 的全域最佳
# ---------------------------------------------------------------------------

def ar_mmi_score(x: Sequence[int], y: Sequence[int], lam: float, ar_forward: ArModel,
                 ar_backward: ArModel) -> float:
    return (1.0 - lam) * ar_forward.sequence_logprob(x, y) + lam * ar_backward.sequence_logprob(y, x)


def ar_exhaustive_mmi_argmax(x: Sequence[int], lam: float, ar_forward: ArModel, ar_backward: ArModel,
                             max_len: int, token_ids: Optional[Sequence[int]] = None,
                             guard: int = DEFAULT_GUARD) -> Tuple[Tuple[int, ...], float]:
    """
    窮舉長度 1..max_len 的所有序列，回傳自迴歸 MMI 分數最高者（同分取先列舉到的）
    """
    check_lambda(lam)
    token_ids = [int(t) for t in (token_ids if token_ids is not None
                                  else content_token_ids(ar_forward.vocab_size))]
    _check_guard(sum(len(token_ids) ** n for n in range(1, max_len + 1)), guard)
    best, best_score = None, -np.inf
    for length in range(1, max_len + 1):
        for y in itertools.product(token_ids, repeat=length):
            score = ar_mmi_score(x, y, lam, ar_forward, ar_backward)
            if best is None or score > best_score:
                best, best_score = y, score
    return best, best_score


@dataclass
class NonGlobalInstance:
    """beam + 重排序找到的最佳解嚴格劣於窮舉最佳解的案例"""
    source: Tuple[int, ...]
    beam_best: Tuple[int, ...]
    beam_score: float
    global_best: Tuple[int, ...]
    global_score: float


def find_nonglobal_instances(sources: Sequence[Sequence[int]], lam: float, beam: int, max_len: int,
                             ar_forward: ArModel, ar_backward: ArModel,
                             guard: int = DEFAULT_GUARD) -> List[NonGlobalInstance]:
    """
    對每個來源比較「beam N-best + p(x|y) 重排序」與窮舉的自迴歸 MMI 最佳解

    Returns:
        重排序結果嚴格較差的來源
    """
    found = []
    for x in sources:
        x = tuple(int(i) for i in x)
        nbest = ar_beam_search(x, beam, max_len, 0.0, ar_forward)
        top = ar_mmi_rerank(nbest, lam, x, ar_backward)[0]
        beam_score = ar_mmi_score(x, top.tokens, lam, ar_forward, ar_backward)
        global_best, global_score = ar_exhaustive_mmi_argmax(x, lam, ar_forward, ar_backward, max_len,
                                                             guard=guard)
        if beam_score < global_score - 1e-9:
            found.append(NonGlobalInstance(x, tuple(top.tokens), beam_score, global_best, global_score))
    return found


# ---------------------------------------------------------------------------
# 恆等式與整體驗證
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''


def check_factorization(x: Sequence[int], y: Sequence[int], lam: float, forward: ForwardModel,
                        backward: BackwardModel) -> List[CheckResult]:
    """
    檢查分解恆等式：
    MMI 逐位置加總與兩項式相等、幾何平均的反向分數與逐項巢狀計算相等、
    前向序列機率等於逐 token 機率的乘積
    """
    x = tuple(int(i) for i in x)
    y = tuple(int(i) for i in y)
    results = []

    breakdown = mmi_objective(x, y, lam, forward, backward)
    two_term = two_term_total(breakdown.forward, breakdown.backward, lam)
    diff = abs(two_term - breakdown.total)
    results.append(CheckResult('mmi_two_term', diff <= 1e-12 * max(1.0, abs(two_term)), f"diff={diff:.3e}"))

    nested = 0.0
    for t, token in enumerate(y, start=1):
        logp = backward.backward_logprobs(token, t, len(y), len(x))
        nested += sum(logp[i, x[i]] for i in range(len(x)))
    geometric = backward.backward_sequence_score(x, y)
    diff = abs(nested / len(y) - geometric)
    results.append(CheckResult('backward_geometric_mean', diff <= 1e-9 * max(1.0, abs(geometric)),
                               f"diff={diff:.3e}"))

    rows = forward.forward_logprobs(x, len(y))
    product = float(np.prod([np.exp(rows[t, token]) for t, token in enumerate(y)]))
    direct = float(np.exp(forward.sequence_logprob(x, y)))
    rel = abs(product - direct) / max(direct, 1e-300)
    results.append(CheckResult('forward_factorization', rel <= 1e-9, f"rel={rel:.3e}"))
    return results


@dataclass
class OracleReport:
    """驗證報告；mismatches 依發現順序排列"""
    passed: bool
    n_checks: int
    mismatches: List[str] = field(default_factory=list)

    @property
    def first_mismatch(self) -> Optional[str]:
        return self.mismatches[0] if self.mismatches else None


class OracleSuite(LoggingMixin):
    """對一組來源執行逐位置解碼 vs 窮舉、N-best vs 窮舉 k-best 與分解恆等式檢查"""

    def __init__(self, forward: ForwardModel, backward: BackwardModel, config: Dict, logger=None):
        """
        Args:
            forward: 前向模型
            backward: 反向模型
            config: 完整配置字典（使用 oracle 與 decode 節點）
            logger: 日誌記錄器
        """
        self.forward = forward
        self.backward = backward
        if logger:
            self._logger = logger
        oracle_config = config.get('oracle', {})
        self.lam = float(oracle_config.get('lam', 0.5))
        self.max_target_len = int(oracle_config.get('max_target_len', 3))
        self.kbest = int(oracle_config.get('kbest', 10))
        self.guard = int(oracle_config.get('guard', DEFAULT_GUARD))
        self.tie_break = config.get('decode', {}).get('tie_break', 'lowest')
        self.oracle = BruteForceOracle(forward, backward, self.guard)

    def run(self, sources: Sequence[Sequence[int]]) -> OracleReport:
        """
        執行全部檢查

        Raises:
            OracleGuardError: 詞彙量與長度使窮舉空間超過上限
        """
        _check_guard(len(self.oracle.token_ids) ** self.max_target_len, self.guard)
        mismatches: List[str] = []
        n_checks = 0
        vocab_width = len(self.oracle.token_ids)

        for x in sources:
            x = tuple(int(i) for i in x)
            for length in range(1, self.max_target_len + 1):
                expected, expected_score = self.oracle.mmi_argmax(x, length, self.lam)
                got = nonar_mmi_decode(x, self.lam, self.forward, self.backward, target_length=length,
                                       tie_break=self.tie_break)
                n_checks += 1
                if got.tokens != expected:
                    mismatches.append(f"argmax x={list(x)} L_y={length}: 解碼 {list(got.tokens)} "
                                      f"窮舉 {list(expected)} (分數 {got.score:.6f} vs {expected_score:.6f})")

                reference = self.oracle.kbest(x, length, self.lam, self.kbest)
                nbest = nonar_nbest(x, self.lam, self.kbest, 1, vocab_width, self.forward, self.backward,
                                    target_length=length)
                n_checks += 1
                ref_scores = np.array([s for _, s in reference])
                got_scores = np.array([c.score for c in nbest])
                if len(ref_scores) != len(got_scores) or not np.allclose(ref_scores, got_scores, atol=1e-9):
                    mismatches.append(f"kbest x={list(x)} L_y={length}: 分數序列不一致")
                elif [tuple(c.tokens) for c in nbest] != [y for y, _ in reference]:
                    mismatches.append(f"kbest x={list(x)} L_y={length}: 序列不一致")

            for check in check_factorization(x, expected, self.lam, self.forward, self.backward):
                n_checks += 1
                if not check.passed:
                    mismatches.append(f"{check.name} x={list(x)}: {check.detail}")

        report = OracleReport(not mismatches, n_checks, mismatches)
        if report.passed:
            self.logger.info(f"驗證通過 - 來源: {len(sources)}, 檢查: {n_checks}")
        else:
            self.logger.error(f"驗證失敗 - {len(mismatches)}/{n_checks} 項不一致，第一項: {report.first_mismatch}")
        return report

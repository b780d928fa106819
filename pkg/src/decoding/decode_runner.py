#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
批次解碼
========

依解碼模式把一批來源轉成解碼結果，以 asyncio 在有限的 worker 數量內並發執行，
結果依輸入順序排列。
"""

import asyncio
from asyncio import Semaphore
from typing import Any, Dict, List, Optional, Sequence

from engine.errors import ConfigError

from models.bundle import ModelBundle
from utils.corpus_handler import Vocabulary
from utils.logger import LoggingMixin
from utils.report_generator import DumpRecord

from .ar_decoder import ar_beam_search, ar_mmi_rerank, default_max_len
from .mmi_scoring import check_lambda
from .nonar_decoder import nonar_decode, nonar_mmi_decode, nonar_nbest, npd_mmi_select

NONAR_MODES = ('nonar', 'nonar+mmi', 'nonar+mmi+npd')
AR_MODES = ('ar', 'ar+mmi', 'ar+mmi+diverse')
FORWARD_ONLY_MODES = ('nonar', 'ar')


class DecodeRunner(LoggingMixin):
    """把解碼模式對應到解碼流程並處理並發"""

    def __init__(self, bundle: ModelBundle, vocab: Vocabulary, config: Dict[str, Any], logger=None):
        """
        初始化解碼器

        Args:
            bundle: 已載入的模型
            vocab: 詞彙表（輸出解碼結果用）
            config: 完整配置字典（使用 decode 與 performance 節點）
            logger: 日誌記錄器
        """
        self.bundle = bundle
        self.vocab = vocab
        self.config = config
        if logger:
            self._logger = logger

        self.decode_config = config.get('decode', {})
        self.mode = self.decode_config.get('mode', 'nonar+mmi')
        self.lam = float(self.decode_config.get('lam', 0.5))
        self.n_best = int(self.decode_config.get('n_best', 10))
        self.length_candidates = int(self.decode_config.get('length_candidates', 4))
        self.token_candidates = int(self.decode_config.get('token_candidates', 5))
        self.beam = int(self.decode_config.get('beam', 10))
        self.sibling_penalty = float(self.decode_config.get('sibling_penalty', 1.0))
        self.tie_break = self.decode_config.get('tie_break', 'lowest')
        self.workers = int(config.get('performance', {}).get('workers', 1))

        self._validate_config()

    def _validate_config(self):
        """驗證解碼配置"""
        if self.mode not in NONAR_MODES + AR_MODES:
            raise ConfigError(f"未知的解碼模式: {self.mode}")
        check_lambda(self.lam)
        if self.mode in AR_MODES or self.mode == 'nonar+mmi+npd':
            if not self.bundle.has_ar:
                raise ConfigError(f"解碼模式 {self.mode} 需要自迴歸模型，但檢查點中沒有")
        if self.workers < 1:
            raise ConfigError("performance.workers 必須 >= 1")
        if self.mode in FORWARD_ONLY_MODES and self.lam > 0.0:
            self.logger.warning(f"解碼模式 {self.mode} 只使用前向模型，λ={self.lam} 將被忽略")

    def decode_one(self, x: Sequence[int], lam: Optional[float] = None) -> DumpRecord:
        """
        解碼單一來源

        Args:
            x: 來源 id 序列
            lam: 覆蓋配置中的 λ

        Returns:
            解碼結果
        """
        lam = self.lam if lam is None else check_lambda(lam)
        b = self.bundle
        source = self.vocab.decode_line(x)

        if self.mode in NONAR_MODES:
            if self.mode == 'nonar':
                candidate = nonar_decode(x, b.forward, b.backward, tie_break=self.tie_break)
            elif self.mode == 'nonar+mmi':
                candidate = nonar_mmi_decode(x, lam, b.forward, b.backward, tie_break=self.tie_break)
            else:
                nbest = nonar_nbest(x, lam, self.n_best, self.length_candidates, self.token_candidates,
                                    b.forward, b.backward)
                candidate = npd_mmi_select(nbest, lam, x, b.ar_forward, b.ar_backward)
            return DumpRecord(source, self.vocab.decode_line(candidate.tokens), candidate.score,
                              [float(s) for s in candidate.breakdown.per_token])

        max_len = default_max_len(x, b.ar_forward)
        penalty = self.sibling_penalty if self.mode == 'ar+mmi+diverse' else 0.0
        nbest = ar_beam_search(x, self.beam, max_len, penalty, b.ar_forward)
        if self.mode == 'ar':
            best = nbest[0]
            return DumpRecord(source, self.vocab.decode_line(best.tokens), best.log_prob, best.steps)
        top = ar_mmi_rerank(nbest, lam, x, b.ar_backward)[0]
        return DumpRecord(source, self.vocab.decode_line(top.tokens), top.score, top.hypothesis.steps)

    async def decode_all(self, sources: Sequence[Sequence[int]], lam: Optional[float] = None) -> List[DumpRecord]:
        """
        並發解碼所有來源

        Args:
            sources: 來源 id 序列
            lam: 覆蓋配置中的 λ

        Returns:
            與輸入順序相同的解碼結果
        """
        if not sources:
            self.logger.warning("沒有來源可供解碼")
            return []

        semaphore = Semaphore(self.workers)

        async def decode_with_semaphore(index: int, x: Sequence[int]):
            async with semaphore:
                return index, await asyncio.to_thread(self.decode_one, x, lam)

        self.logger.info(f"開始解碼 - 模式: {self.mode}, 來源: {len(sources)}, 並發: {self.workers}")
        tasks = [decode_with_semaphore(i, x) for i, x in enumerate(sources)]
        completed = await asyncio.gather(*tasks)

        records: List[Optional[DumpRecord]] = [None] * len(sources)
        for index, record in completed:
            records[index] = record
        self.logger.info(f"解碼完成 - {len(records)} 行")
        return records

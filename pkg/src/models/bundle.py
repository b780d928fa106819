#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模型組合
========

把共用參數字典包成前向、反向非自迴歸模型與兩個自迴歸模型，並負責檢查點的存取。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

from engine.errors import CheckpointError

from utils.checkpoint import load_checkpoint, restore_params, save_checkpoint
from utils.corpus_handler import Vocabulary, load_vocab

from .ar_model import ArModel, init_ar_params
from .backward_model import BackwardModel
from .forward_model import ForwardModel, init_nonar_params
from .transformer import BlockConfig, Params

VOCAB_FILE = 'vocab.txt'


@dataclass
class ModelBundle:
    """一次實驗用到的所有模型與詞彙表"""
    cfg: BlockConfig
    params: Params
    vocab: Optional[Vocabulary] = None

    def __post_init__(self):
        self.forward = ForwardModel(self.params, self.cfg)
        self.backward = BackwardModel(self.params, self.cfg)
        self.has_ar = 'ar_fwd.embed' in self.params
        self.ar_forward = ArModel(self.params, self.cfg, 'ar_fwd') if self.has_ar else None
        self.ar_backward = ArModel(self.params, self.cfg, 'ar_bwd') if self.has_ar else None

    @classmethod
    def create(cls, vocab_size: int, cfg: BlockConfig, seed: int, with_ar: bool = True,
               vocab: Optional[Vocabulary] = None) -> 'ModelBundle':
        params = init_nonar_params(vocab_size, cfg, seed)
        if with_ar:
            params.update(init_ar_params(vocab_size, cfg, seed))
        return cls(cfg, params, vocab)

    @property
    def vocab_size(self) -> int:
        return self.forward.vocab_size

    def save(self, path, dtype: str = 'f4', meta: Optional[Dict[str, str]] = None, optimizer=None):
        """寫入檢查點，詞彙表放在同一目錄的 vocab.txt"""
        meta = dict(meta or {})
        meta.update({f"model.{k}": repr(v) for k, v in self.cfg.__dict__.items()})
        meta['vocab_size'] = str(self.vocab_size)
        meta['with_ar'] = str(self.has_ar).lower()
        save_checkpoint(path, self.params, meta=meta, dtype=dtype, optimizer=optimizer)
        if self.vocab is not None:
            self.vocab.save(Path(path).parent / VOCAB_FILE)

    @classmethod
    def load(cls, path, cfg: BlockConfig) -> 'ModelBundle':
        """
        依目前的模型設定建立參數，再以檢查點覆蓋

        Raises:
            CheckpointError: 參數名稱或形狀與設定不符
        """
        checkpoint = load_checkpoint(path)
        try:
            vocab_size = int(checkpoint.meta['vocab_size'])
        except (KeyError, ValueError):
            raise CheckpointError("檢查點缺少 vocab_size") from None
        with_ar = checkpoint.meta.get('with_ar', 'true') == 'true'

        vocab_path = Path(path).parent / VOCAB_FILE
        vocab = load_vocab(vocab_path) if vocab_path.exists() else None
        if vocab is not None and len(vocab) != vocab_size:
            raise CheckpointError(f"詞彙檔大小 {len(vocab)} 與檢查點 {vocab_size} 不符", parameter='embed')

        bundle = cls.create(vocab_size, cfg, seed=0, with_ar=with_ar, vocab=vocab)
        restore_params(checkpoint, bundle.params)
        return bundle

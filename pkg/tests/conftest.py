#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
測試共用設定
============

極小的模型設定、詞彙表與語料，讓所有測試都能在單核 CPU 上快速完成。
"""

import numpy as np
import pytest

from config.settings import Config
from models.bundle import ModelBundle
from models.transformer import BlockConfig
from utils.corpus_handler import NUM_RESERVED, Corpus, SourceTargetPair, synthetic_vocabulary

TINY = BlockConfig(d_model=8, n_heads=2, d_ff=16, n_blocks=1, rel_clip=2, dropout=0.0,
                   max_positions=16, init_std=0.3)


def zero_last_combine(bundle: ModelBundle) -> ModelBundle:
    """把前向與反向解碼器最後一層的 combine 歸零，輸出 logits 全為 0（完全均勻）"""
    last = bundle.cfg.n_blocks - 1
    for prefix in ('fwd', 'bwd'):
        for suffix in ('w', 'b'):
            bundle.params[f"{prefix}.dec.{last}.combine.{suffix}"].data[...] = 0.0
    return bundle


@pytest.fixture
def tiny_cfg() -> BlockConfig:
    return TINY


@pytest.fixture
def tiny_vocab():
    """4 個內容 token（w0..w3，id 5..8）"""
    return synthetic_vocabulary(4)


@pytest.fixture
def tiny_bundle(tiny_vocab) -> ModelBundle:
    return ModelBundle.create(len(tiny_vocab), TINY, seed=3, with_ar=True, vocab=tiny_vocab)


@pytest.fixture
def uniform_bundle(tiny_vocab) -> ModelBundle:
    return zero_last_combine(ModelBundle.create(len(tiny_vocab), TINY, seed=3, with_ar=True, vocab=tiny_vocab))


@pytest.fixture
def tiny_corpus() -> Corpus:
    c = NUM_RESERVED
    pairs = [
        SourceTargetPair((c, c + 1), (c + 2,)),
        SourceTargetPair((c + 1, c + 2), (c + 3,)),
        SourceTargetPair((c + 3, c), (c + 1, c + 2)),
        SourceTargetPair((c + 2, c + 2), (c + 3, c)),
    ]
    return Corpus(pairs, split='train')


@pytest.fixture
def sources():
    """25 個長度 1..3 的隨機來源"""
    rng = np.random.default_rng(11)
    return [tuple(int(i) for i in rng.integers(NUM_RESERVED, NUM_RESERVED + 4, size=int(n)))
            for n in rng.integers(1, 4, size=25)]


@pytest.fixture
def tiny_config(tmp_path) -> Config:
    """可以直接跑完整流程的小配置，輸出寫到 tmp_path"""
    config = Config(load_env=False)
    config.update({
        'task.name': 'copy',
        'task.vocab_size': 4,
        'task.n_train': 40,
        'task.n_dev': 6,
        'task.n_test': 6,
        'task.len_min': 1,
        'task.len_max': 3,
        'model.d_model': 8,
        'model.n_heads': 2,
        'model.d_ff': 16,
        'model.n_blocks': 1,
        'model.rel_clip': 2,
        'model.max_positions': 16,
        'train.steps': 3,
        'train.batch_tokens': 32,
        'train.checkpoint_every': 2,
        'decode.beam': 3,
        'decode.n_best': 3,
        'oracle.n_sources': 3,
        'oracle.max_target_len': 2,
        'oracle.kbest': 5,
        'output.directory': str(tmp_path),
        'output.run_name': 'run',
        'logging.level': 'WARNING',
    })
    return config

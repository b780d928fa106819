#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
檢查點測試
==========
"""

from dataclasses import replace

import numpy as np
import pytest

from engine.errors import CheckpointError
from engine.optim import AdamState
from models.bundle import VOCAB_FILE, ModelBundle
from utils.checkpoint import MAGIC, load_checkpoint, restore_optimizer, save_checkpoint
from utils.corpus_handler import synthetic_vocabulary


class TestCheckpointFormat:
    """檔案格式"""

    def test_save_load_save_is_byte_identical(self, tiny_bundle, tmp_path):
        first = tmp_path / 'a' / 'model.ckpt'
        second = tmp_path / 'b' / 'model.ckpt'
        tiny_bundle.save(first)
        ModelBundle.load(first, tiny_bundle.cfg).save(second)
        assert first.read_bytes() == second.read_bytes()
        assert (second.parent / VOCAB_FILE).read_text(encoding='utf-8') == \
            (first.parent / VOCAB_FILE).read_text(encoding='utf-8')

    def test_header(self, tmp_path):
        path = tmp_path / 'x.ckpt'
        save_checkpoint(path, {'w': np.arange(6.0).reshape(2, 3), 's': np.float64(2.5)}, meta={'note': 'hi'})
        header = path.read_bytes().split(b'\nend\n')[0].decode('utf-8').split('\n')
        assert header[0] == MAGIC
        assert 'meta note hi' in header
        assert 'param s f4 - 0 4' in header
        assert 'param w f4 2x3 4 24' in header

    def test_float64_keeps_values_exactly(self, tmp_path):
        path = tmp_path / 'x.ckpt'
        value = np.random.default_rng(0).normal(size=(3, 4))
        save_checkpoint(path, {'w': value}, dtype='f8')
        np.testing.assert_array_equal(load_checkpoint(path).arrays['w'], value)

    def test_optimizer_round_trip(self, tmp_path):
        state = AdamState(lr=0.01, step=7)
        state.m['w'] = np.full((2,), 0.5)
        state.v['w'] = np.full((2,), 0.25)
        path = tmp_path / 'x.ckpt'
        save_checkpoint(path, {'w': np.zeros(2)}, dtype='f8', optimizer=state)
        checkpoint = load_checkpoint(path)
        assert set(checkpoint.params()) == {'w'}
        restored = restore_optimizer(checkpoint)
        assert restored.step == 7 and restored.lr == 0.01
        np.testing.assert_array_equal(restored.m['w'], state.m['w'])
        np.testing.assert_array_equal(restored.v['w'], state.v['w'])

    def test_no_optimizer(self, tmp_path):
        path = tmp_path / 'x.ckpt'
        save_checkpoint(path, {'w': np.zeros(2)})
        assert restore_optimizer(load_checkpoint(path)) is None

    def test_bad_dtype(self, tmp_path):
        with pytest.raises(CheckpointError):
            save_checkpoint(tmp_path / 'x.ckpt', {'w': np.zeros(2)}, dtype='f2')


class TestCheckpointErrors:
    """不相容的檢查點"""

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / 'missing.ckpt')

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / 'x.ckpt'
        path.write_bytes(b'hello\n')
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_body(self, tmp_path):
        path = tmp_path / 'x.ckpt'
        save_checkpoint(path, {'w': np.zeros(8)})
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CheckpointError) as exc_info:
            load_checkpoint(path)
        assert exc_info.value.parameter == 'w'

    def test_shape_mismatch_names_parameter(self, tiny_bundle, tmp_path):
        path = tmp_path / 'model.ckpt'
        tiny_bundle.save(path)
        with pytest.raises(CheckpointError) as exc_info:
            ModelBundle.load(path, replace(tiny_bundle.cfg, d_ff=32))
        assert exc_info.value.parameter is not None
        assert exc_info.value.parameter in str(exc_info.value)
        assert '.ffn.' in exc_info.value.parameter

    def test_missing_parameter(self, tiny_bundle, tmp_path):
        path = tmp_path / 'model.ckpt'
        tiny_bundle.save(path)
        with pytest.raises(CheckpointError) as exc_info:
            ModelBundle.load(path, replace(tiny_bundle.cfg, n_blocks=2))
        assert '.1.' in exc_info.value.parameter

    def test_vocabulary_size_mismatch(self, tiny_bundle, tmp_path):
        path = tmp_path / 'model.ckpt'
        tiny_bundle.save(path)
        synthetic_vocabulary(6).save(path.parent / VOCAB_FILE)
        with pytest.raises(CheckpointError) as exc_info:
            ModelBundle.load(path, tiny_bundle.cfg)
        assert exc_info.value.parameter == 'embed'

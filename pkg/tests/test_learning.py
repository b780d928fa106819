#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
訓練流程測試
============

續跑與一次跑完必須逐位元相同；桌面規模的學習測試標記為 slow。
"""

import numpy as np
import pytest

from config.settings import Config
from decoding.nonar_decoder import nonar_decode, nonar_mmi_decode
from models.trainer import RESUME_CHECKPOINT, Trainer
from models.transformer import length_class
from utils.corpus_handler import CorpusHandler
from utils.metrics import dull_rate, first_token_share


def prepare(config: Config):
    settings = config.to_dict()
    splits, vocab = CorpusHandler(settings).prepare()
    return settings, splits, vocab


class TestResume:
    """續跑"""

    def test_resume_matches_uninterrupted_run(self, tiny_config, tmp_path):
        settings, splits, vocab = prepare(tiny_config)

        straight = Trainer(settings, splits['train'], vocab)
        straight_history = straight.train(steps=4).history

        first = Trainer(settings, splits['train'], vocab)
        first.train(steps=2, output_dir=tmp_path / 'a')
        resumed = Trainer(settings, splits['train'], vocab)
        resumed.resume(tmp_path / 'a' / RESUME_CHECKPOINT)
        assert resumed.step == 2
        resumed_history = resumed.train(steps=4).history

        assert [r.to_row() for r in resumed_history] == [r.to_row() for r in straight_history[2:]]
        for name, param in straight.bundle.params.items():
            np.testing.assert_array_equal(resumed.bundle.params[name].data, param.data, err_msg=name)

    def test_log_keeps_rows_before_resume_point(self, tiny_config, tmp_path):
        settings, splits, vocab = prepare(tiny_config)
        first = Trainer(settings, splits['train'], vocab)
        first.train(steps=2, output_dir=tmp_path)
        resumed = Trainer(settings, splits['train'], vocab)
        resumed.resume(tmp_path / RESUME_CHECKPOINT)
        result = resumed.train(steps=3, output_dir=tmp_path)
        rows = [line for line in result.log_path.read_text(encoding='utf-8').splitlines()
                if line and not line.startswith('#')]
        assert [row.split('\t')[0] for row in rows[1:]] == ['1', '2', '3']


@pytest.mark.slow
class TestDeskScale:
    """桌面規模的學習測試"""

    def test_copy_task_is_learned(self):
        config = Config(load_env=False)
        config.update({'task.name': 'copy', 'task.vocab_size': 20, 'task.n_train': 500, 'task.n_dev': 50,
                       'task.n_test': 50, 'train.steps': 200, 'train.train_ar': False,
                       'logging.level': 'WARNING'})
        settings, splits, vocab = prepare(config)
        trainer = Trainer(settings, splits['train'], vocab)
        result = trainer.train()
        assert result.history[-1].fwd_loss < 0.1

        bundle = trainer.bundle
        # copy 任務的長度差恆為 0
        length_hits = sum(int(np.argmax(bundle.forward.length_logprobs(x))) == length_class(0)
                          for x in splits['test'].sources)
        assert length_hits / len(splits['test']) >= 0.95

        correct = sum(nonar_decode(x, bundle.forward, bundle.backward).tokens == tuple(y)
                      for x, y in zip(splits['test'].sources, splits['test'].targets))
        assert correct / len(splits['test']) >= 0.9

    def test_keyed_dialog_mmi_demotes_dull_response(self):
        config = Config(load_env=False)
        config.update({'task.name': 'keyed-dialog', 'task.vocab_size': 48, 'task.n_keys': 12,
                       'task.dull_fraction': 0.6, 'task.len_min': 3, 'task.len_max': 3, 'task.n_train': 2000,
                       'task.n_dev': 50, 'task.n_test': 200, 'train.steps': 300, 'train.train_ar': False,
                       'logging.level': 'WARNING'})
        settings, splits, vocab = prepare(config)
        trainer = Trainer(settings, splits['train'], vocab)
        trainer.train()
        forward, backward = trainer.bundle.forward, trainer.bundle.backward

        dull = tuple(splits['test'].metadata['dull_response'])
        keyed = {x[0]: tuple(y) for x, y in zip(splits['train'].sources, splits['train'].targets)
                 if tuple(y) != dull}
        test_sources = splits['test'].sources

        # 反向模型：dull 回覆幾乎無法還原來源的 key
        lower = [backward.backward_sequence_score(x, dull) < backward.backward_sequence_score(x, keyed[x[0]])
                 for x in test_sources]
        assert sum(lower) / len(lower) >= 0.9

        plain = [vocab.decode_line(nonar_decode(x, forward, backward, target_length=3).tokens)
                 for x in test_sources]
        mmi = [vocab.decode_line(nonar_mmi_decode(x, 0.4, forward, backward, target_length=3).tokens)
               for x in test_sources]
        dull_line = vocab.decode_line(dull)
        assert dull_rate(mmi, dull_line) < dull_rate(plain, dull_line)
        assert first_token_share(mmi) < first_token_share(plain)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令列測試
==========

以極小配置跑完整的 train → decode → eval → oracle 流程，並檢查結束碼。
"""

import pytest

import nonar_mmi
from config.settings import ENV_MAPPINGS
from utils.metrics import REPORT_KEYS


@pytest.fixture
def config_file(tiny_config, tmp_path, monkeypatch):
    for name in ENV_MAPPINGS:
        monkeypatch.delenv(name, raising=False)
    path = tmp_path / 'tiny.cfg'
    path.write_text(tiny_config.to_flat_text(), encoding='utf-8')
    return str(path)


@pytest.fixture
def trained(config_file, tmp_path):
    assert nonar_mmi.main(['train', '--config', config_file]) == nonar_mmi.EXIT_OK
    return tmp_path / 'run'


class TestPipeline:
    """完整流程"""

    def test_train_outputs(self, trained):
        for name in ('model.ckpt', 'checkpoint.ckpt', 'train_log.tsv', 'vocab.txt', 'train.tsv', 'dev.tsv',
                     'test.tsv', 'train_summary.json'):
            assert (trained / name).exists(), name
        lines = (trained / 'train_log.tsv').read_text(encoding='utf-8').splitlines()
        assert '# train.steps=3' in lines
        rows = [line for line in lines if not line.startswith('#')]
        assert rows[0].split('\t')[0] == 'step'
        assert [row.split('\t')[0] for row in rows[1:]] == ['1', '2', '3']

    def test_decode_and_eval(self, trained, config_file):
        assert nonar_mmi.main(['decode', '--config', config_file]) == nonar_mmi.EXIT_OK
        dump = (trained / 'decode.tsv').read_text(encoding='utf-8').splitlines()
        assert len(dump) == 6
        assert all(len(line.split('\t')) == 4 for line in dump)

        assert nonar_mmi.main(['eval', '--config', config_file]) == nonar_mmi.EXIT_OK
        report = (trained / 'metrics.txt').read_text(encoding='utf-8').splitlines()
        assert [line.split('=')[0] for line in report] == list(REPORT_KEYS)

    def test_decode_autoregressive_mode(self, trained, config_file):
        out = trained / 'ar.tsv'
        code = nonar_mmi.main(['decode', '--config', config_file, '--mode', 'ar+mmi', '--lambda', '0.3',
                               '--out', str(out)])
        assert code == nonar_mmi.EXIT_OK
        assert len(out.read_text(encoding='utf-8').splitlines()) == 6

    def test_eval_with_reference_file(self, trained, config_file, tmp_path):
        assert nonar_mmi.main(['decode', '--config', config_file]) == nonar_mmi.EXIT_OK
        code = nonar_mmi.main(['eval', '--config', config_file, '--references', str(trained / 'test.tsv'),
                               '--out', str(tmp_path / 'ref_metrics.txt')])
        assert code == nonar_mmi.EXIT_OK
        assert (tmp_path / 'ref_metrics.txt').exists()

    def test_sweep_and_table(self, trained, config_file):
        code = nonar_mmi.main(['eval', '--config', config_file, '--sweep', '--table'])
        assert code == nonar_mmi.EXIT_OK
        sweep = (trained / 'sweep.tsv').read_text(encoding='utf-8').splitlines()
        assert len(sweep) == 12
        table = (trained / 'table.tsv').read_text(encoding='utf-8').splitlines()
        systems = [line.split('\t')[0] for line in table[1:]]
        assert systems == ['Human', 'NonAR', 'NonAR+MMI', 'NonAR+MMI+NPD', 'AR', 'AR+MMI', 'AR+MMI+diverse']

    def test_oracle_with_checkpoint(self, trained, config_file):
        code = nonar_mmi.main(['oracle', '--config', config_file, '--checkpoint', str(trained / 'model.ckpt')])
        assert code == nonar_mmi.EXIT_OK
        assert (trained / 'oracle.txt').read_text(encoding='utf-8').startswith('passed=true')

    def test_rerun_is_byte_identical(self, config_file, tmp_path):
        run = tmp_path / 'run'
        outputs = []
        for _ in range(2):
            for command in ('train', 'decode', 'eval'):
                assert nonar_mmi.main([command, '--config', config_file]) == nonar_mmi.EXIT_OK
            outputs.append({name: (run / name).read_bytes()
                            for name in ('train_log.tsv', 'model.ckpt', 'decode.tsv', 'metrics.txt')})
        assert outputs[0] == outputs[1]

    def test_resume_at_final_step(self, trained, config_file):
        code = nonar_mmi.main(['train', '--config', config_file, '--checkpoint',
                               str(trained / 'checkpoint.ckpt')])
        assert code == nonar_mmi.EXIT_OK


class TestExitCodes:
    """結束碼"""

    def test_oracle_without_checkpoint(self, config_file):
        assert nonar_mmi.main(['oracle', '--config', config_file]) == nonar_mmi.EXIT_OK

    def test_oracle_failure(self, config_file, monkeypatch, capsys):
        def failing_oracle(self, checkpoint=None, out=None):
            return {'command': 'oracle', 'passed': False, 'first_mismatch': 'argmax x=[5]'}

        monkeypatch.setattr(nonar_mmi.NonARMMIRunner, 'oracle', failing_oracle)
        assert nonar_mmi.main(['oracle', '--config', config_file]) == nonar_mmi.EXIT_ORACLE
        assert 'argmax x=[5]' in capsys.readouterr().err

    @pytest.mark.parametrize('argv', [
        [],
        ['fly'],
        ['decode', '--bogus'],
        ['decode', '--mode', 'sampling'],
    ])
    def test_usage_errors(self, argv):
        assert nonar_mmi.main(argv) == nonar_mmi.EXIT_USAGE

    def test_invalid_lambda(self, config_file):
        assert nonar_mmi.main(['decode', '--config', config_file, '--lambda', '1.5']) == nonar_mmi.EXIT_USAGE

    def test_guard_exceeded(self, config_file, tmp_path):
        path = tmp_path / 'guard.cfg'
        path.write_text(open(config_file, encoding='utf-8').read() + 'oracle.guard=10\n', encoding='utf-8')
        assert nonar_mmi.main(['oracle', '--config', str(path)]) == nonar_mmi.EXIT_USAGE

    def test_missing_checkpoint(self, config_file, tmp_path):
        code = nonar_mmi.main(['decode', '--config', config_file, '--checkpoint', str(tmp_path / 'none.ckpt')])
        assert code == nonar_mmi.EXIT_DATA

    def test_malformed_corpus(self, config_file, tmp_path):
        corpus = tmp_path / 'bad.tsv'
        corpus.write_text('a b\tc\nno tab here\n', encoding='utf-8')
        path = tmp_path / 'file.cfg'
        path.write_text(open(config_file, encoding='utf-8').read()
                        + f'task.name=file\ntask.train_path={corpus}\n', encoding='utf-8')
        assert nonar_mmi.main(['train', '--config', str(path)]) == nonar_mmi.EXIT_DATA

    def test_misaligned_references(self, trained, config_file, tmp_path):
        assert nonar_mmi.main(['decode', '--config', config_file]) == nonar_mmi.EXIT_OK
        refs = tmp_path / 'refs.txt'
        refs.write_text('w0\n', encoding='utf-8')
        code = nonar_mmi.main(['eval', '--config', config_file, '--references', str(refs)])
        assert code == nonar_mmi.EXIT_DATA

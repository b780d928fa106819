#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
報告生成測試
============
"""

import json
import math

import pytest

from engine.errors import CorpusParseError
from utils.metrics import REPORT_KEYS
from utils.report_generator import DumpRecord, ReportGenerator, format_metrics, parse_metrics, read_dump

METRICS = {'bleu': 0.0123, 'distinct1': 0.25, 'distinct2': 0.5, 'avg_len': 3.0, 'stopword_pct': 70.0}


@pytest.fixture
def generator(tmp_path):
    return ReportGenerator({'output': {'directory': str(tmp_path), 'run_name': 'exp'}})


class TestDump:
    """解碼結果檔"""

    def test_line_format(self):
        record = DumpRecord('w0 w1', 'w2', -1.5, [-0.5, -1.0])
        assert record.to_line() == 'w0 w1\tw2\t-1.500000\t-0.500000,-1.000000'

    def test_write_and_read(self, generator):
        records = [DumpRecord('w0', 'w1 w2', -2.0, [-1.0, -1.0]), DumpRecord('w3', 'w3', -0.25, [-0.25])]
        path = generator.write_dump(records)
        assert path == generator.output_dir / 'decode.tsv'
        assert read_dump(path) == records

    def test_bad_line(self, tmp_path):
        path = tmp_path / 'decode.tsv'
        path.write_text('w0\tw1\t-1.0\t-1.0\nw0\tw1\n', encoding='utf-8')
        with pytest.raises(CorpusParseError) as exc_info:
            read_dump(path)
        assert exc_info.value.line_no == 2

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_dump(tmp_path / 'none.tsv')


class TestMetricsReport:
    """key=value 評估報告"""

    def test_fixed_key_order(self):
        text = format_metrics(METRICS)
        assert [line.split('=')[0] for line in text.splitlines()] == list(REPORT_KEYS)
        assert 'bleu=0.0123\n' in text
        assert parse_metrics(text) == pytest.approx(METRICS)

    def test_write(self, generator):
        path = generator.write_metrics_report(METRICS)
        assert path.name == 'metrics.txt'
        assert path.read_text(encoding='utf-8').startswith('bleu=0.0123\n')


class TestTables:
    """比較表、掃描表與摘要"""

    def test_comparison_table(self, generator):
        human = dict(METRICS, bleu=math.nan)
        df = generator.comparison_table([('Human', human), ('NonAR+MMI', METRICS)])
        assert list(df.columns) == ['System', 'BLEU', 'distinct-1', 'distinct-2', 'Avg. length', 'Stopword%']
        assert df.loc[1, 'distinct-1'] == 25.0
        assert df.loc[1, 'Stopword%'] == 70.0
        assert math.isnan(df.loc[0, 'BLEU'])

    def test_sweep_table_marks_best(self, generator):
        results = [(0.5, dict(METRICS, bleu=0.3)), (0.0, dict(METRICS, bleu=0.2)), (0.2, dict(METRICS, bleu=0.3))]
        df = generator.sweep_table(results)
        assert list(df['lambda']) == [0.0, 0.2, 0.5]
        assert list(df['best']) == [False, True, False]

    def test_write_table(self, generator):
        df = generator.sweep_table([(0.0, METRICS)])
        path = generator.write_table(df, generator.output_dir / 'sweep.tsv')
        assert path.read_text(encoding='utf-8').splitlines()[0].split('\t')[0] == 'lambda'
        assert path.with_suffix('.txt').exists()

    def test_summary(self, generator):
        path = generator.write_summary({'command': 'eval', 'lam': 0.4})
        data = json.loads(path.read_text(encoding='utf-8'))
        assert data['command'] == 'eval'
        assert 'generated_at' in data

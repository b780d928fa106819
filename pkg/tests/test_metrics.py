#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
評估指標測試
============
"""

import pytest

from engine.errors import AlignmentError, ContractError
from utils.metrics import (REPORT_KEYS, avg_length, bleu, distinct_n, dull_rate, evaluate_responses,
                           first_token_share, paired_bootstrap, stopword_pct)

# 三組手算的 BLEU 範例
#   輸出長度 5 + 4 + 4 = 13，參考長度 5 + 4 + 6 = 15，BP = exp(1 - 15/13)
#   1-gram: 5/5 + 3/4 + 4/4 = 12/13
#   2-gram: 4/4 + 2/3 + 3/3 = 9/10  -> 平滑後 10/11
#   3-gram: 3/3 + 1/2 + 2/2 = 6/7   -> 平滑後 7/8
#   4-gram: 2/2 + 0/1 + 1/1 = 3/4   -> 平滑後 4/5
#   BLEU = BP * (12/13 * 10/11 * 7/8 * 4/5) ** 0.25 = 0.7506219783
BLEU_HYPOTHESES = ['a b c d e', 'f g h x', 'j k l m']
BLEU_REFERENCES = ['a b c d e', 'f g h i', 'j k l m n o']
BLEU_EXPECTED = 0.7506219783


class TestBleu:
    """語料層級 BLEU"""

    def test_identical(self):
        lines = ['a b c d', 'e f g h i', 'j k l m']
        assert bleu(lines, lines) == pytest.approx(1.0)

    def test_no_overlap(self):
        assert bleu(['a b c d'] * 3, ['w x y z'] * 3) == pytest.approx(0.0, abs=1e-9)

    def test_hand_computed_fixture(self):
        assert bleu(BLEU_HYPOTHESES, BLEU_REFERENCES) == pytest.approx(BLEU_EXPECTED, abs=1e-9)

    def test_misaligned(self):
        with pytest.raises(AlignmentError):
            bleu(['a b'], ['a b', 'c d'])

    def test_empty(self):
        with pytest.raises(ContractError):
            bleu([], [])


class TestDiversity:
    """distinct-n、長度與停用詞"""

    def test_distinct_one_repeated(self):
        assert distinct_n(['a a a a'], 1) == 0.25

    def test_distinct_identical_responses(self):
        assert distinct_n(['ok'] * 8, 1) == pytest.approx(1 / 8)

    def test_distinct_two(self):
        # a b, b a, a b -> 2 種 / 3 個
        assert distinct_n(['a b a b'], 2) == pytest.approx(2 / 3)

    def test_distinct_two_without_bigrams(self):
        assert distinct_n(['a', 'b'], 2) == 0.0

    def test_distinct_invalid_order(self):
        with pytest.raises(ContractError):
            distinct_n(['a b c'], 3)

    @pytest.mark.parametrize('responses, expected', [
        (['a b', 'c d e f'], 3.0),
        (['a b c d e f g'] * 4, 7.0),
    ])
    def test_avg_length(self, responses, expected):
        assert avg_length(responses) == expected

    def test_stopword_pct(self):
        stopwords = frozenset({'the', 'a', 'of', 'i', '.'})
        responses = ['the cat of a', 'i . dog cow of .']
        assert stopword_pct(responses, stopwords) == pytest.approx(70.0)
        assert stopword_pct(['the a'], stopwords) == 100.0
        assert stopword_pct(['cat dog'], stopwords) == 0.0

    def test_dull_rate_and_first_token_share(self):
        responses = ['i don t know', 'i don t know', 'i see', 'yes']
        assert dull_rate(responses, 'i don t know') == 0.5
        assert first_token_share(responses) == 0.75


class TestReport:
    """整體評估報告與顯著性檢定"""

    def test_report_keys(self):
        report = evaluate_responses(BLEU_HYPOTHESES, BLEU_REFERENCES, frozenset({'a'}))
        assert tuple(report) == REPORT_KEYS
        assert report['bleu'] == pytest.approx(BLEU_EXPECTED, abs=1e-9)
        assert report['avg_len'] == pytest.approx(13 / 3)
        assert report['stopword_pct'] == pytest.approx(100 / 13)

    def test_report_misaligned(self):
        with pytest.raises(AlignmentError):
            evaluate_responses(['a'], [], frozenset())

    def test_paired_bootstrap(self):
        references = ['a b c d', 'e f g h', 'i j k l', 'm n o p']
        noise = ['w x y z'] * 4
        result = paired_bootstrap(references, noise, references, n_samples=50, seed=1)
        assert result['delta'] == pytest.approx(1.0)
        assert result['win_rate'] == 1.0
        assert result['p_value'] == 0.0

    def test_paired_bootstrap_misaligned(self):
        with pytest.raises(AlignmentError):
            paired_bootstrap(['a'], ['a', 'b'], ['a'])

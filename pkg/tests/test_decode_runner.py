#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
批次解碼測試
============
"""

import pytest

from engine.errors import ConfigError
from decoding.decode_runner import AR_MODES, NONAR_MODES, DecodeRunner
from decoding.nonar_decoder import nonar_mmi_decode
from models.bundle import ModelBundle


def runner_config(mode='nonar+mmi', lam=0.5, workers=2, tie_break='lowest'):
    return {'decode': {'mode': mode, 'lam': lam, 'n_best': 3, 'length_candidates': 2, 'token_candidates': 3,
                       'beam': 3, 'sibling_penalty': 1.0, 'tie_break': tie_break},
            'performance': {'workers': workers}}


class TestDecodeRunner:
    """解碼模式與並發"""

    @pytest.mark.parametrize('mode', NONAR_MODES + AR_MODES)
    def test_every_mode_decodes(self, tiny_bundle, tiny_vocab, mode):
        runner = DecodeRunner(tiny_bundle, tiny_vocab, runner_config(mode))
        record = runner.decode_one((5, 6))
        assert record.source == 'w0 w1'
        assert record.output
        assert all(token.startswith('w') for token in record.output.split())
        assert len(record.per_token) >= len(record.output.split())

    def test_matches_direct_decode(self, tiny_bundle, tiny_vocab):
        runner = DecodeRunner(tiny_bundle, tiny_vocab, runner_config())
        x = (7, 5, 8)
        candidate = nonar_mmi_decode(x, 0.5, tiny_bundle.forward, tiny_bundle.backward)
        record = runner.decode_one(x)
        assert record.output == tiny_vocab.decode_line(candidate.tokens)
        assert record.total == pytest.approx(candidate.score)

    @pytest.mark.parametrize('mode', ['nonar', 'nonar+mmi'])
    @pytest.mark.parametrize('tie_break, token', [('lowest', 'w0'), ('highest', 'w3')])
    def test_tie_break_applies_to_every_position_mode(self, uniform_bundle, tiny_vocab, mode, tie_break, token):
        runner = DecodeRunner(uniform_bundle, tiny_vocab, runner_config(mode, tie_break=tie_break))
        record = runner.decode_one((5, 6))
        assert set(record.output.split()) == {token}

    def test_lambda_override(self, tiny_bundle, tiny_vocab):
        runner = DecodeRunner(tiny_bundle, tiny_vocab, runner_config(lam=0.9))
        x = (6, 6)
        expected = nonar_mmi_decode(x, 0.2, tiny_bundle.forward, tiny_bundle.backward)
        assert runner.decode_one(x, lam=0.2).total == pytest.approx(expected.score)

    @pytest.mark.asyncio
    async def test_decode_all_preserves_order(self, tiny_bundle, tiny_vocab, sources):
        runner = DecodeRunner(tiny_bundle, tiny_vocab, runner_config(workers=3))
        records = await runner.decode_all(sources)
        assert [r.source for r in records] == [tiny_vocab.decode_line(x) for x in sources]
        assert records == [runner.decode_one(x) for x in sources]

    @pytest.mark.asyncio
    async def test_decode_all_empty(self, tiny_bundle, tiny_vocab):
        runner = DecodeRunner(tiny_bundle, tiny_vocab, runner_config())
        assert await runner.decode_all([]) == []

    @pytest.mark.parametrize('mode', ['ar', 'ar+mmi', 'ar+mmi+diverse', 'nonar+mmi+npd'])
    def test_autoregressive_modes_need_ar_params(self, tiny_cfg, tiny_vocab, mode):
        bundle = ModelBundle.create(len(tiny_vocab), tiny_cfg, seed=3, with_ar=False, vocab=tiny_vocab)
        with pytest.raises(ConfigError):
            DecodeRunner(bundle, tiny_vocab, runner_config(mode))

    @pytest.mark.parametrize('config', [
        runner_config(mode='sampling'),
        runner_config(lam=1.2),
        runner_config(workers=0),
    ])
    def test_invalid_config(self, tiny_bundle, tiny_vocab, config):
        with pytest.raises(ConfigError):
            DecodeRunner(tiny_bundle, tiny_vocab, config)

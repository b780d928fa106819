#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
解碼模組
========

MMI 分數、非自迴歸與自迴歸解碼器，以及窮舉驗證器。
"""

from .ar_decoder import BeamHypothesis, ar_beam_search, ar_greedy_decode, ar_mmi_rerank
from .decode_runner import DecodeRunner
from .mmi_scoring import MmiScoreBreakdown, mmi_objective, per_token_mmi
from .nonar_decoder import Candidate, nonar_decode, nonar_mmi_decode, nonar_nbest, npd_mmi_select
from .oracle import (BruteForceOracle, OracleSuite, brute_force_kbest, brute_force_mmi_argmax,
                     check_factorization, find_nonglobal_instances)

__all__ = [
    'BeamHypothesis',
    'BruteForceOracle',
    'Candidate',
    'DecodeRunner',
    'MmiScoreBreakdown',
    'OracleSuite',
    'ar_beam_search',
    'ar_greedy_decode',
    'ar_mmi_rerank',
    'brute_force_kbest',
    'brute_force_mmi_argmax',
    'check_factorization',
    'find_nonglobal_instances',
    'mmi_objective',
    'nonar_decode',
    'nonar_mmi_decode',
    'nonar_nbest',
    'npd_mmi_select',
    'per_token_mmi',
]

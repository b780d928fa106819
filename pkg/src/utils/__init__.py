#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
工具模組
========

日誌、語料、檢查點、評估指標與報告。
"""

from .corpus_handler import Corpus, CorpusHandler, SourceTargetPair, Vocabulary, gen_synthetic, load_corpus
from .logger import LoggingMixin, get_logger, setup_logger
from .report_generator import DumpRecord, ReportGenerator

__all__ = [
    'Corpus',
    'CorpusHandler',
    'DumpRecord',
    'LoggingMixin',
    'ReportGenerator',
    'SourceTargetPair',
    'Vocabulary',
    'gen_synthetic',
    'get_logger',
    'load_corpus',
    'setup_logger',
]

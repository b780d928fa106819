#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
張量引擎
========

自動微分張量、基本運算與 Adam 最佳化器。
"""

from .errors import (AlignmentError, CheckpointError, ConfigError, ContractError,
                     CorpusParseError, NumericError, OracleGuardError,
                     SequenceLengthError, ShapeError, TokenIndexError)
from .optim import AdamState, adam_step, zero_grad
from .tensor import Tensor, no_grad

__all__ = [
    'Tensor', 'no_grad', 'AdamState', 'adam_step', 'zero_grad',
    'AlignmentError', 'CheckpointError', 'ConfigError', 'ContractError',
    'CorpusParseError', 'NumericError', 'OracleGuardError',
    'SequenceLengthError', 'ShapeError', 'TokenIndexError',
]

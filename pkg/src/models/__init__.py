#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模型模組
========

Transformer 元件、前向 / 反向非自迴歸模型、自迴歸基準模型與聯合訓練器。
"""

from .ar_model import ArModel, init_ar_params, train_step_ar
from .backward_model import BackwardModel, backward_encoder_input, train_step_backward
from .bundle import ModelBundle
from .forward_model import ForwardModel, init_nonar_params, train_step_forward
from .trainer import LossRecord, Trainer, TrainingResult
from .transformer import BlockConfig, EncoderOutput

__all__ = [
    'ArModel',
    'BackwardModel',
    'BlockConfig',
    'EncoderOutput',
    'ForwardModel',
    'LossRecord',
    'ModelBundle',
    'Trainer',
    'TrainingResult',
    'backward_encoder_input',
    'init_ar_params',
    'init_nonar_params',
    'train_step_ar',
    'train_step_backward',
    'train_step_forward',
]

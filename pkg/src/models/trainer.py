#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
聯合訓練
========

前向、反向非自迴歸模型（共用嵌入）與兩個自迴歸基準模型在同一步內計算損失、
加總後做一次 Adam 更新。批次順序、dropout 與反向位置抽樣都只由 (seed, step) 決定，
因此同一種子的兩次訓練會產生逐位元相同的損失紀錄，並可從任一檢查點續跑。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from engine.errors import ConfigError
from engine.optim import AdamState, adam_step, zero_grad
from engine.tensor import Tensor

from utils.checkpoint import load_checkpoint, restore_optimizer, restore_params
from utils.corpus_handler import BatchSchedule, Corpus, Vocabulary
from utils.logger import LoggingMixin

from .bundle import ModelBundle
from .forward_model import stack_batch
from .transformer import BlockConfig

LOG_COLUMNS = ('step', 'fwd_loss', 'bwd_loss', 'len_loss', 'bwd_len_loss', 'ar_fwd_loss', 'ar_bwd_loss')
RESUME_CHECKPOINT = 'checkpoint.ckpt'
EXPORT_CHECKPOINT = 'model.ckpt'
TRAIN_LOG = 'train_log.tsv'

# dropout / 抽樣亂數流的編號
_FWD, _BWD, _AR_FWD, _AR_BWD, _POSITIONS = range(5)


@dataclass
class LossRecord:
    """單步的各項損失"""
    step: int
    fwd_loss: float
    bwd_loss: float
    len_loss: float
    bwd_len_loss: float
    ar_fwd_loss: Optional[float] = None
    ar_bwd_loss: Optional[float] = None

    @property
    def total(self) -> float:
        extra = (self.ar_fwd_loss or 0.0) + (self.ar_bwd_loss or 0.0)
        return self.fwd_loss + self.bwd_loss + self.len_loss + self.bwd_len_loss + extra

    def to_row(self) -> str:
        values = [str(self.step)]
        for column in LOG_COLUMNS[1:]:
            value = getattr(self, column)
            values.append('-' if value is None else f"{value:.6f}")
        return '\t'.join(values)


@dataclass
class TrainingResult:
    """訓練結束後的摘要"""
    steps: int
    history: List[LossRecord]
    checkpoint_path: Optional[Path]
    export_path: Optional[Path]
    log_path: Optional[Path]


class TrainingLog:
    """機器可讀的 TSV 損失紀錄；開頭是完整配置，沒有時間戳"""

    def __init__(self, path, config: Dict[str, Any], start_step: int = 0):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        header = [f"# {section}.{key}={value}" for section, values in config.items()
                  for key, value in values.items()]
        header.append('\t'.join(LOG_COLUMNS))

        rows: List[str] = []
        if start_step > 0 and self.path.exists():
            for line in self.path.read_text(encoding='utf-8').splitlines():
                if line.startswith('#') or line.startswith(LOG_COLUMNS[0]):
                    continue
                if line and int(line.split('\t', 1)[0]) <= start_step:
                    rows.append(line)
        self.path.write_text(''.join(f"{line}\n" for line in header + rows), encoding='utf-8')

    def append(self, record: LossRecord):
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(record.to_row() + '\n')


class Trainer(LoggingMixin):
    """非自迴歸與自迴歸模型的聯合訓練器"""

    def __init__(self, config: Dict[str, Any], corpus: Corpus, vocab: Vocabulary, logger=None):
        """
        初始化訓練器

        Args:
            config: 完整配置字典（使用 model / train / output 節點）
            corpus: 訓練語料
            vocab: 詞彙表
            logger: 日誌記錄器
        """
        self.config = config
        if logger:
            self._logger = logger

        self.train_config = config.get('train', {})
        self.cfg = BlockConfig.from_dict(config.get('model', {}))
        self._validate_config()

        self.seed = int(self.train_config.get('seed', 1234))
        self.backward_positions = int(self.train_config.get('backward_positions', 0))
        self.bundle = ModelBundle.create(len(vocab), self.cfg, self.seed,
                                         with_ar=bool(self.train_config.get('train_ar', True)), vocab=vocab)
        self.state = AdamState(lr=float(self.train_config.get('lr', 0.003)),
                               beta1=float(self.train_config.get('beta1', 0.9)),
                               beta2=float(self.train_config.get('beta2', 0.98)),
                               eps=float(self.train_config.get('eps', 1e-8)))
        self.schedule = BatchSchedule(corpus, int(self.train_config.get('batch_tokens', 512)), self.seed)
        self.step = 0

        self.logger.info(f"訓練器初始化完成 - 參數張量: {len(self.bundle.params)}, "
                         f"參數量: {sum(p.data.size for p in self.bundle.params.values())}, "
                         f"語料: {len(corpus)} 組")

    def _validate_config(self):
        """驗證訓練配置"""
        if float(self.train_config.get('lr', 0.003)) <= 0:
            raise ConfigError("train.lr 必須 > 0")
        if int(self.train_config.get('batch_tokens', 512)) < 1:
            raise ConfigError("train.batch_tokens 必須 >= 1")
        if int(self.train_config.get('backward_positions', 0)) < 0:
            raise ConfigError("train.backward_positions 不可為負")

    def _rng(self, step: int, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, step, stream])

    def train_step(self) -> LossRecord:
        """
        執行下一個訓練步

        Returns:
            該步的損失紀錄
        """
        step = self.step + 1
        batch = self.schedule.batch_at(step - 1)
        src, tgt = stack_batch(batch)
        bundle = self.bundle

        zero_grad(bundle.params)
        fwd_loss, len_loss = bundle.forward.batch_losses(src, tgt, self._rng(step, _FWD))
        bwd_loss, bwd_len_loss = bundle.backward.instance_losses(
            batch, self._rng(step, _BWD), self.backward_positions, self._rng(step, _POSITIONS))
        terms: List[Tensor] = [fwd_loss, len_loss, bwd_loss, bwd_len_loss]

        ar_fwd_loss = ar_bwd_loss = None
        if bundle.has_ar:
            ar_fwd_loss = bundle.ar_forward.batch_loss(src, tgt, self._rng(step, _AR_FWD))
            ar_bwd_loss = bundle.ar_backward.batch_loss(tgt, src, self._rng(step, _AR_BWD))
            terms += [ar_fwd_loss, ar_bwd_loss]

        total = terms[0]
        for term in terms[1:]:
            total = total + term
        total.backward()
        adam_step(bundle.params, self.state)
        self.step = step

        return LossRecord(step, fwd_loss.item(), bwd_loss.item(), len_loss.item(), bwd_len_loss.item(),
                          ar_fwd_loss.item() if ar_fwd_loss is not None else None,
                          ar_bwd_loss.item() if ar_bwd_loss is not None else None)

    def save(self, directory) -> Path:
        """寫入供續跑的 f8 檢查點"""
        path = Path(directory) / RESUME_CHECKPOINT
        self.bundle.save(path, dtype='f8', meta={'train.step': str(self.step), 'train.seed': str(self.seed)},
                         optimizer=self.state)
        return path

    def resume(self, path):
        """從訓練檢查點還原參數、Adam 狀態與步數"""
        checkpoint = load_checkpoint(path)
        restore_params(checkpoint, self.bundle.params)
        state = restore_optimizer(checkpoint)
        if state is not None:
            self.state = state
        self.step = int(checkpoint.meta.get('train.step', self.state.step))
        self.logger.info(f"已從檢查點續跑 - 路徑: {path}, 步數: {self.step}")

    def train(self, steps: Optional[int] = None, output_dir=None) -> TrainingResult:
        """
        訓練到指定步數

        Args:
            steps: 目標總步數，預設 train.steps
            output_dir: 檢查點與損失紀錄的目錄；None 時不寫檔

        Returns:
            訓練摘要
        """
        steps = int(self.train_config.get('steps', 200)) if steps is None else steps
        every = int(self.train_config.get('checkpoint_every', 100))
        directory = Path(output_dir) if output_dir is not None else None
        log = TrainingLog(directory / TRAIN_LOG, self.config, self.step) if directory else None

        history: List[LossRecord] = []
        progress = tqdm(range(self.step, steps), desc='訓練', unit='step',
                        disable=not self.train_config.get('progress', False))
        for _ in progress:
            record = self.train_step()
            history.append(record)
            if log:
                log.append(record)
            progress.set_postfix(fwd=f"{record.fwd_loss:.3f}", bwd=f"{record.bwd_loss:.3f}")
            if directory and every > 0 and record.step % every == 0:
                self.save(directory)
                self.logger.info(f"檢查點已保存 - 步數: {record.step}, 總損失: {record.total:.4f}")

        checkpoint_path = export_path = None
        if directory:
            checkpoint_path = self.save(directory)
            export_path = directory / EXPORT_CHECKPOINT
            self.bundle.save(export_path, dtype='f4', meta={'train.step': str(self.step)})
        if history:
            last = history[-1]
            self.logger.info(f"訓練完成 - 步數: {last.step}, fwd_loss={last.fwd_loss:.4f}, "
                             f"bwd_loss={last.bwd_loss:.4f}, len_loss={last.len_loss:.4f}")

        return TrainingResult(self.step, history, checkpoint_path, export_path,
                              log.path if log else None)

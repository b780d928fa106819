#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
檢查點讀寫
==========

單一檔案：純文字清單在前、little-endian row-major 二進位資料在後。

    NONAR-MMI-CKPT v1
    meta <key> <value>
    param <name> <dtype> <shape> <offset> <nbytes>
    end
    <blobs>

shape 以 ``x`` 連接（純量為 ``-``），offset 從 ``end`` 行之後起算。
匯出的模型用 f4；供續跑的訓練檢查點用 f8，並包含 Adam 動量（``adam.m.*`` / ``adam.v.*``）。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from engine.errors import CheckpointError
from engine.optim import AdamState
from engine.tensor import Tensor

MAGIC = 'NONAR-MMI-CKPT v1'
DTYPES = {'f4': '<f4', 'f8': '<f8'}


@dataclass
class Checkpoint:
    """已載入的檢查點：中繼資料與名稱到陣列的映射"""
    meta: Dict[str, str] = field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def params(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if not k.startswith('adam.')}


def _shape_text(shape) -> str:
    return 'x'.join(str(n) for n in shape) if shape else '-'


def _parse_shape(text: str):
    return () if text == '-' else tuple(int(n) for n in text.split('x'))


def save_checkpoint(path, arrays: Mapping[str, Union[Tensor, np.ndarray]], meta: Optional[Dict[str, str]] = None,
                    dtype: str = 'f4', optimizer: Optional[AdamState] = None):
    """
    寫入檢查點

    Args:
        path: 輸出路徑
        arrays: 參數名稱到張量或陣列
        meta: 中繼資料（值不可含換行）
        dtype: f4（匯出）或 f8（續跑）
        optimizer: 若提供，一併寫入 Adam 動量與步數
    """
    if dtype not in DTYPES:
        raise CheckpointError(f"不支援的 dtype: {dtype}")
    entries = {name: (value.data if isinstance(value, Tensor) else np.asarray(value))
               for name, value in arrays.items()}
    meta = dict(meta or {})
    if optimizer is not None:
        meta.update({'adam.step': str(optimizer.step), 'adam.lr': repr(optimizer.lr),
                     'adam.beta1': repr(optimizer.beta1), 'adam.beta2': repr(optimizer.beta2),
                     'adam.eps': repr(optimizer.eps)})
        for name, m in optimizer.m.items():
            entries[f"adam.m.{name}"] = m
            entries[f"adam.v.{name}"] = optimizer.v[name]

    lines = [MAGIC]
    for key in sorted(meta):
        value = str(meta[key])
        if '\n' in value or ' ' in key:
            raise CheckpointError(f"中繼資料 {key} 含有不合法字元")
        lines.append(f"meta {key} {value}")

    blobs = []
    offset = 0
    for name in sorted(entries):
        blob = np.ascontiguousarray(entries[name], dtype=DTYPES[dtype]).tobytes()
        lines.append(f"param {name} {dtype} {_shape_text(entries[name].shape)} {offset} {len(blob)}")
        blobs.append(blob)
        offset += len(blob)
    lines.append('end')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(('\n'.join(lines) + '\n').encode('utf-8'))
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    """讀取檢查點；格式錯誤時拋出 CheckpointError"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"檢查點不存在: {path}")
    raw = path.read_bytes()

    header_end = raw.find(b'\nend\n')
    if not raw.startswith(MAGIC.encode('utf-8') + b'\n') or header_end < 0:
        raise CheckpointError(f"{path} 不是有效的檢查點（缺少標頭或 end 行）")
    header = raw[:header_end].decode('utf-8').split('\n')[1:]
    body = raw[header_end + len(b'\nend\n'):]

    checkpoint = Checkpoint()
    for line in header:
        kind, _, rest = line.partition(' ')
        if kind == 'meta':
            key, _, value = rest.partition(' ')
            checkpoint.meta[key] = value
        elif kind == 'param':
            parts = rest.split(' ')
            if len(parts) != 5 or parts[1] not in DTYPES:
                raise CheckpointError(f"無法解析的參數行: {line}")
            name, dtype, shape_text, offset, nbytes = parts
            offset, nbytes = int(offset), int(nbytes)
            if offset + nbytes > len(body):
                raise CheckpointError("資料區長度不足", parameter=name)
            array = np.frombuffer(body[offset:offset + nbytes], dtype=DTYPES[dtype])
            try:
                checkpoint.arrays[name] = array.reshape(_parse_shape(shape_text)).copy()
            except ValueError:
                raise CheckpointError(f"形狀 {shape_text} 與資料長度不符", parameter=name) from None
        else:
            raise CheckpointError(f"無法解析的標頭行: {line}")
    return checkpoint


def restore_params(checkpoint: Checkpoint, params: Mapping[str, Tensor]):
    """
    把檢查點的值寫回參數（原地），名稱與形狀必須完全一致

    Raises:
        CheckpointError: 缺少、多出或形狀不符的參數，訊息會指出參數名稱
    """
    stored = checkpoint.params()
    for name in sorted(params):
        if name not in stored:
            raise CheckpointError("檢查點缺少參數", parameter=name)
        if stored[name].shape != params[name].shape:
            raise CheckpointError(f"形狀不符: 檢查點 {stored[name].shape}，模型 {params[name].shape}",
                                  parameter=name)
    extra = sorted(set(stored) - set(params))
    if extra:
        raise CheckpointError("檢查點含有模型沒有的參數", parameter=extra[0])
    for name, p in params.items():
        p.data[...] = stored[name]


def restore_optimizer(checkpoint: Checkpoint) -> Optional[AdamState]:
    """從檢查點還原 Adam 狀態；沒有存時回傳 None"""
    if 'adam.step' not in checkpoint.meta:
        return None
    state = AdamState(lr=float(checkpoint.meta['adam.lr']), beta1=float(checkpoint.meta['adam.beta1']),
                      beta2=float(checkpoint.meta['adam.beta2']), eps=float(checkpoint.meta['adam.eps']),
                      step=int(checkpoint.meta['adam.step']))
    for name, array in checkpoint.arrays.items():
        if name.startswith('adam.m.'):
            key = name[len('adam.m.'):]
            state.m[key] = array.astype(np.float64)
            state.v[key] = checkpoint.arrays[f"adam.v.{key}"].astype(np.float64)
    return state

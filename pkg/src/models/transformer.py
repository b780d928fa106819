#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Transformer 元件
================

前向與反向非自迴歸模型共用的結構：
相對位置多頭注意力、編碼器堆疊、長度分類器、
複製式解碼器輸入，以及逐層的詞彙注意力解碼堆疊。

所有參數存放在 Dict[str, Tensor]，名稱以前綴區分模型（如 ``fwd.enc.0.attn.q.w``）。
批次張量形狀一律為 [B, L, d]；同一批次內長度相同，不需要遮罩。
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from engine.errors import ConfigError, SequenceLengthError, ShapeError
from engine.tensor import (Tensor, concat, dropout, embedding, einsum, index_select,
                           layer_norm, matmul, max_pool, relu, softmax)

Params = Dict[str, Tensor]

MAX_LENGTH_DELTA = 20
NUM_LENGTH_CLASSES = 2 * MAX_LENGTH_DELTA + 1
CAUSAL_MASK_VALUE = -1e9


@dataclass(frozen=True)
class BlockConfig:
    """Transformer 堆疊的形狀設定"""
    d_model: int = 32
    n_heads: int = 4
    d_ff: int = 64
    n_blocks: int = 2
    rel_clip: int = 4
    dropout: float = 0.0
    max_positions: int = 64
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model ({self.d_model}) 必須能被 n_heads ({self.n_heads}) 整除")
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks 必須 >= 1，目前為 {self.n_blocks}")
        if self.rel_clip < 0:
            raise ConfigError(f"rel_clip 必須 >= 0，目前為 {self.rel_clip}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout 必須在 [0, 1)，目前為 {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @classmethod
    def from_dict(cls, model_config: Dict) -> 'BlockConfig':
        fields = cls.__dataclass_fields__
        return cls(**{k: fields[k].type(v) if isinstance(fields[k].type, type) else v
                      for k, v in model_config.items() if k in fields})


@dataclass
class EncoderOutput:
    """最後一層編碼器的上下文表示 H，形狀 [B, L, d]"""
    states: Tensor

    @property
    def length(self) -> int:
        return self.states.shape[1]


# ---------------------------------------------------------------------------
# 參數初始化
# ---------------------------------------------------------------------------

def _normal(rng: np.random.Generator, shape, std: float, name: str) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)


def _constant(value: float, shape, name: str) -> Tensor:
    return Tensor(np.full(shape, value), requires_grad=True, name=name)


def _init_linear(params: Params, name: str, n_in: int, n_out: int, cfg: BlockConfig,
                 rng: np.random.Generator):
    params[f"{name}.w"] = _normal(rng, (n_in, n_out), cfg.init_std, f"{name}.w")
    params[f"{name}.b"] = _constant(0.0, (n_out,), f"{name}.b")


def _init_layer_norm(params: Params, name: str, cfg: BlockConfig):
    params[f"{name}.g"] = _constant(1.0, (cfg.d_model,), f"{name}.g")
    params[f"{name}.b"] = _constant(0.0, (cfg.d_model,), f"{name}.b")


def _init_attention(params: Params, name: str, cfg: BlockConfig, rng: np.random.Generator, relative: bool):
    for proj in ('q', 'k', 'v', 'o'):
        _init_linear(params, f"{name}.{proj}", cfg.d_model, cfg.d_model, cfg, rng)
    if relative:
        params[f"{name}.rel"] = _normal(rng, (2 * cfg.rel_clip + 1, cfg.head_dim), cfg.init_std, f"{name}.rel")


def _init_ffn(params: Params, name: str, cfg: BlockConfig, rng: np.random.Generator):
    _init_linear(params, f"{name}.1", cfg.d_model, cfg.d_ff, cfg, rng)
    _init_linear(params, f"{name}.2", cfg.d_ff, cfg.d_model, cfg, rng)


def init_embedding(vocab_size: int, cfg: BlockConfig, rng: np.random.Generator, name: str = 'embed') -> Tensor:
    return _normal(rng, (vocab_size, cfg.d_model), cfg.init_std, name)


def init_encoder_params(cfg: BlockConfig, rng: np.random.Generator, prefix: str) -> Params:
    params: Params = {f"{prefix}.pos": _normal(rng, (cfg.max_positions, cfg.d_model), cfg.init_std, f"{prefix}.pos")}
    for i in range(cfg.n_blocks):
        block = f"{prefix}.{i}"
        _init_attention(params, f"{block}.attn", cfg, rng, relative=True)
        _init_layer_norm(params, f"{block}.ln1", cfg)
        _init_ffn(params, f"{block}.ffn", cfg, rng)
        _init_layer_norm(params, f"{block}.ln2", cfg)
    return params


def init_decoder_params(cfg: BlockConfig, rng: np.random.Generator, prefix: str,
                        vocab_attention: bool = True) -> Params:
    params: Params = {f"{prefix}.pos": _normal(rng, (cfg.max_positions, cfg.d_model), cfg.init_std, f"{prefix}.pos")}
    for i in range(cfg.n_blocks):
        block = f"{prefix}.{i}"
        _init_attention(params, f"{block}.self", cfg, rng, relative=True)
        _init_layer_norm(params, f"{block}.ln1", cfg)
        _init_attention(params, f"{block}.cross", cfg, rng, relative=False)
        _init_layer_norm(params, f"{block}.ln2", cfg)
        _init_ffn(params, f"{block}.ffn", cfg, rng)
        _init_layer_norm(params, f"{block}.ln3", cfg)
        if vocab_attention:
            _init_linear(params, f"{block}.combine", 2 * cfg.d_model, cfg.d_model, cfg, rng)
    return params


def init_length_params(cfg: BlockConfig, rng: np.random.Generator, prefix: str) -> Params:
    params: Params = {}
    _init_linear(params, prefix, cfg.d_model, NUM_LENGTH_CLASSES, cfg, rng)
    return params


# ---------------------------------------------------------------------------
# 注意力
# ---------------------------------------------------------------------------

def linear(x: Tensor, params: Params, name: str) -> Tensor:
    return matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def relative_positions(n_queries: int, n_keys: int, clip: int) -> np.ndarray:
    """相對位置索引 clip(j - i, -k, k) + k，形狀 [n_queries, n_keys]"""
    offsets = np.arange(n_keys)[None, :] - np.arange(n_queries)[:, None]
    return np.clip(offsets, -clip, clip) + clip


def causal_mask(n: int) -> np.ndarray:
    return np.triu(np.full((n, n), CAUSAL_MASK_VALUE), k=1)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def relative_attention(queries: Tensor, keys: Tensor, values: Tensor, params: Params, name: str,
                       cfg: BlockConfig, causal: bool = False,
                       rng: Optional[np.random.Generator] = None,
                       weights_out: Optional[List[np.ndarray]] = None) -> Tensor:
    """
    多頭縮放點積注意力；若參數中有 ``{name}.rel``，key 分數加上相對位置項

    Args:
        queries: [B, Lq, d]
        keys: [B, Lk, d]
        values: [B, Lk, d]
        params: 參數字典
        name: 參數名稱前綴
        cfg: 區塊設定
        causal: 是否遮住未來位置（僅自注意力使用）
        rng: 訓練時 dropout 的亂數產生器；None 代表推論
        weights_out: 若提供，附加注意力權重 [B, h, Lq, Lk]

    Returns:
        [B, Lq, d]
    """
    if keys.shape[:2] != values.shape[:2] or queries.shape[0] != keys.shape[0]:
        raise ShapeError('relative_attention', queries.shape, keys.shape, values.shape)
    batch, n_q, d = queries.shape
    n_k = keys.shape[1]

    q = _split_heads(linear(queries, params, f"{name}.q"), cfg.n_heads)
    k = _split_heads(linear(keys, params, f"{name}.k"), cfg.n_heads)
    v = _split_heads(linear(values, params, f"{name}.v"), cfg.n_heads)

    scores = matmul(q, k.transpose(0, 1, 3, 2))
    rel_name = f"{name}.rel"
    if rel_name in params:
        rel = index_select(params[rel_name], relative_positions(n_q, n_k, cfg.rel_clip), axis=0)
        scores = scores + einsum('bhid,ijd->bhij', q, rel)
    scores = scores * (1.0 / np.sqrt(cfg.head_dim))
    if causal:
        scores = scores + causal_mask(n_q)

    weights = softmax(scores, axis=-1)
    if weights_out is not None:
        weights_out.append(weights.data)
    weights = dropout(weights, cfg.dropout, rng, training=rng is not None)

    context = matmul(weights, v).transpose(0, 2, 1, 3).reshape(batch, n_q, d)
    return linear(context, params, f"{name}.o")


def _feed_forward(x: Tensor, params: Params, name: str) -> Tensor:
    return linear(relu(linear(x, params, f"{name}.1")), params, f"{name}.2")


def _residual(x: Tensor, sub: Tensor, params: Params, ln_name: str, cfg: BlockConfig,
              rng: Optional[np.random.Generator]) -> Tensor:
    sub = dropout(sub, cfg.dropout, rng, training=rng is not None)
    return layer_norm(x + sub, params[f"{ln_name}.g"], params[f"{ln_name}.b"])


def _add_positions(x: Tensor, params: Params, prefix: str, cfg: BlockConfig) -> Tensor:
    length = x.shape[1]
    if length > cfg.max_positions:
        raise SequenceLengthError(f"序列長度 {length} 超過位置上限 {cfg.max_positions}")
    return x + index_select(params[f"{prefix}.pos"], np.arange(length), axis=0)


# ---------------------------------------------------------------------------
# 編碼器與長度分類器
# ---------------------------------------------------------------------------

def encode(ids, params: Params, prefix: str, embed: Tensor, cfg: BlockConfig,
           rng: Optional[np.random.Generator] = None) -> EncoderOutput:
    """
    編碼一批等長序列

    Args:
        ids: [B, L] 整數 id
        params: 參數字典
        prefix: 編碼器參數前綴
        embed: token 嵌入矩陣 [V, d]
        cfg: 區塊設定
        rng: 訓練時 dropout 的亂數產生器

    Returns:
        EncoderOutput，states 形狀 [B, L, d]
    """
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    if ids.shape[1] < 1:
        raise SequenceLengthError("編碼器輸入不可為空")
    if ids.shape[1] > cfg.max_positions:
        raise SequenceLengthError(f"輸入長度 {ids.shape[1]} 超過位置上限 {cfg.max_positions}")

    x = _add_positions(embedding(embed, ids), params, prefix, cfg)
    x = dropout(x, cfg.dropout, rng, training=rng is not None)
    for i in range(cfg.n_blocks):
        block = f"{prefix}.{i}"
        x = _residual(x, relative_attention(x, x, x, params, f"{block}.attn", cfg, rng=rng),
                      params, f"{block}.ln1", cfg, rng)
        x = _residual(x, _feed_forward(x, params, f"{block}.ffn"), params, f"{block}.ln2", cfg, rng)
    return EncoderOutput(x)


def length_class(delta: int) -> int:
    """長度差 Δm 轉成類別索引；超出 [-20, 20] 時夾到最近的類別"""
    return int(np.clip(delta, -MAX_LENGTH_DELTA, MAX_LENGTH_DELTA)) + MAX_LENGTH_DELTA


def length_logits(encoded: EncoderOutput, params: Params, prefix: str) -> Tensor:
    """max-pool 後的線性分類，[B, 41]"""
    return linear(max_pool(encoded.states, axis=1), params, prefix)


def predict_length(encoded: EncoderOutput, params: Params, prefix: str) -> np.ndarray:
    """
    長度差分布

    Returns:
        [B, 41] 機率，第 c 欄對應 Δm = c - 20
    """
    return softmax(length_logits(encoded, params, prefix), axis=-1).data


# ---------------------------------------------------------------------------
# 解碼器
# ---------------------------------------------------------------------------

def copy_indices(n: int, m: int) -> np.ndarray:
    """第 i 個解碼位置複製 h_{round(n·i/m)}（1 起算、四捨五入、夾在 [1, n]），回傳 0 起算索引"""
    if n < 1 or m < 1:
        raise SequenceLengthError(f"copy_decoder_inputs 需要 n >= 1 且 m >= 1（n={n}, m={m}）")
    i = np.arange(1, m + 1)
    return np.clip((2 * n * i + m) // (2 * m), 1, n) - 1


def copy_decoder_inputs(encoded: EncoderOutput, m: int) -> Tensor:
    """由左至右掃描來源表示，建構長度 m 的解碼器輸入 [B, m, d]"""
    return index_select(encoded.states, copy_indices(encoded.length, m), axis=1)


def decode_stack(inputs: Tensor, encoded: EncoderOutput, vocab_matrix: Tensor, params: Params,
                 prefix: str, cfg: BlockConfig, rng: Optional[np.random.Generator] = None,
                 vocab_attention: bool = True, self_attention: bool = True, causal: bool = False,
                 trace: Optional[List[np.ndarray]] = None) -> Tensor:
    """
    解碼堆疊

    每個區塊依序做自注意力、對 H 的交叉注意力、前饋層得到 Z；
    啟用詞彙注意力時再計算 A = softmax(Z·Wᵀ)·W，將 [Z; A] 投影回寬度 d 餵給下一層。
    最後以綁定的 Wᵀ 投影成詞彙 logits。

    Args:
        inputs: 解碼器輸入 [B, m, d]
        encoded: 編碼器輸出
        vocab_matrix: 詞彙表示矩陣 W [V, d]
        params: 參數字典
        prefix: 解碼器參數前綴
        cfg: 區塊設定
        rng: 訓練時 dropout 的亂數產生器
        vocab_attention: 是否使用逐層詞彙注意力（自迴歸解碼器不用）
        self_attention: 關閉時各位置只依賴自己的輸入與 H
        causal: 自注意力是否遮住未來位置
        trace: 若提供，附加每層的詞彙注意力分布 [B, m, V]

    Returns:
        logits [B, m, V]
    """
    if vocab_matrix.shape[-1] != cfg.d_model:
        raise ConfigError(f"詞彙矩陣寬度 {vocab_matrix.shape[-1]} 與 d_model {cfg.d_model} 不符")
    if inputs.shape[-1] != cfg.d_model or encoded.states.shape[-1] != cfg.d_model:
        raise ShapeError('decode_stack', inputs.shape, encoded.states.shape)

    vocab_t = vocab_matrix.transpose(1, 0)
    x = _add_positions(inputs, params, prefix, cfg)
    x = dropout(x, cfg.dropout, rng, training=rng is not None)
    h = encoded.states
    for i in range(cfg.n_blocks):
        block = f"{prefix}.{i}"
        z = x
        if self_attention:
            z = _residual(z, relative_attention(z, z, z, params, f"{block}.self", cfg, causal=causal, rng=rng),
                          params, f"{block}.ln1", cfg, rng)
        z = _residual(z, relative_attention(z, h, h, params, f"{block}.cross", cfg, rng=rng),
                      params, f"{block}.ln2", cfg, rng)
        z = _residual(z, _feed_forward(z, params, f"{block}.ffn"), params, f"{block}.ln3", cfg, rng)
        if vocab_attention:
            token_weights = softmax(matmul(z, vocab_t), axis=-1)
            if trace is not None:
                trace.append(token_weights.data)
            z = linear(concat([z, matmul(token_weights, vocab_matrix)], axis=-1), params, f"{block}.combine")
        x = z
    return matmul(x, vocab_t)

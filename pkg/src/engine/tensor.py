#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
張量運算核心
============

以 numpy 陣列為底層的最小張量引擎，提供反向模式自動微分。
每個運算在前向時即時記錄父節點與梯度函式 (eager tape)，
backward() 依反向拓撲順序走訪整張計算圖。

訓練與測試一律使用 float64。
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, NumericError, ShapeError, TokenIndexError

DTYPE = np.float64

_grad_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_grad_state, 'enabled', True)


@contextmanager
def no_grad():
    """在此區塊內建立的運算不記錄計算圖（僅作用於目前執行緒）"""
    previous = _grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """可參與反向傳播的稠密張量"""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward_fn: Optional[Callable] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ''
        return f"<Tensor shape={self.shape}{label} requires_grad={self.requires_grad}>"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # 運算子多載
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> 'Tensor':
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tensor_mean(self, axis, keepdims)

    def backward(self, grad: Optional[np.ndarray] = None):
        """
        反向傳播

        Args:
            grad: 輸出端的梯度，預設為全 1（純量損失）
        """
        if not self.requires_grad:
            raise ContractError("此張量不需要梯度，無法反向傳播")

        order = _topological_order(self)
        # 中間節點的梯度在每次反向傳播前清空；葉節點照常累加
        for node in order:
            if node._backward_fn is not None:
                node.grad = None

        seed = np.ones_like(self.data) if grad is None else np.array(grad, dtype=DTYPE)
        if self.grad is None or self._backward_fn is not None:
            self.grad = seed
        else:
            self.grad = self.grad + seed

        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            parent_grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=DTYPE)
                else:
                    parent.grad = parent.grad + g

        for node in order:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)


TensorLike = Union[Tensor, np.ndarray, float, int]


def _as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.requires_grad = False
    out.grad = None
    out.name = None
    out._parents = ()
    out._backward_fn = None
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把廣播後的梯度加總回原本的形狀"""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast(op: str, a: Tensor, b: Tensor, fn: Callable) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# 逐元素運算
# ---------------------------------------------------------------------------

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _broadcast('add', a, b, np.add)
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _broadcast('sub', a, b, np.subtract)
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _broadcast('mul', a, b, np.multiply)
    return _result(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                           _unbroadcast(g * a.data, b.shape)))


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _broadcast('div', a, b, np.divide)
    return _result(out, (a, b), lambda g: (_unbroadcast(g / b.data, a.shape),
                                           _unbroadcast(-g * a.data / (b.data ** 2), b.shape)))


def neg(a: TensorLike) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(DTYPE)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool = True) -> Tensor:
    """
    Inverted dropout，只在訓練時作用

    Args:
        x: 輸入張量
        rate: 丟棄比例
        rng: 由實驗種子衍生的亂數產生器
        training: 是否為訓練模式
    """
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("訓練模式的 dropout 需要明確的亂數產生器")
    mask = (rng.random(x.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# 矩陣運算
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    矩陣乘法，支援前置批次維度的廣播

    Args:
        a: [..., m, k]
        b: [..., k, n]

    Returns:
        [..., m, n]
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul', a.shape, b.shape)
    out = _broadcast('matmul', a, b, np.matmul)

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), backward_fn)


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """
    兩個運算元的 einsum

    梯度以交換下標的 einsum 求得，因此 a 的每個下標都必須出現在輸出或 b 之中（b 亦同）。
    """
    expr = subscripts.replace(' ', '')
    inputs, output = expr.split('->')
    sub_a, sub_b = inputs.split(',')
    for own, other in ((sub_a, sub_b), (sub_b, sub_a)):
        if any(c not in output and c not in other for c in own):
            raise ValueError(f"einsum 下標 {expr} 含有只屬於單一運算元的縮併軸")
    try:
        out = np.einsum(expr, a.data, b.data)
    except ValueError:
        raise ShapeError(f'einsum {expr}', a.shape, b.shape) from None

    def backward_fn(g):
        ga = np.einsum(f'{output},{sub_b}->{sub_a}', g, b.data)
        gb = np.einsum(f'{output},{sub_a}->{sub_b}', g, a.data)
        return ga, gb

    return _result(out, (a, b), backward_fn)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError('reshape', x.shape, shape) from None
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _result(out, (x,), backward_fn)


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tensor_sum(x, axis, keepdims) / float(count)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError('concat', *[t.shape for t in tensors]) from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def max_pool(x: Tensor, axis: int) -> Tensor:
    """沿指定軸取最大值；梯度只流向第一個最大值的位置"""
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _result(out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# 索引運算
# ---------------------------------------------------------------------------

def embedding(weight: Tensor, ids) -> Tensor:
    """
    依 id 取出權重矩陣的列

    Args:
        weight: [V, d]
        ids: 任意形狀的整數陣列

    Returns:
        [*ids.shape, d]
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise TokenIndexError(f"id 超出範圍 [0, {weight.shape[0]}): {ids.min()}..{ids.max()}")
    out = weight.data[ids]

    def backward_fn(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids, g)
        return (gw,)

    return _result(out, (weight,), backward_fn)


def index_select(x: Tensor, indices, axis: int) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[axis]):
        raise TokenIndexError(f"索引超出範圍 [0, {x.shape[axis]})")
    out = np.take(x.data, indices, axis=axis)

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), indices, np.moveaxis(g, axis, 0))
        return (gx,)

    return _result(out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# 正規化與機率
# ---------------------------------------------------------------------------

def _check_finite(x: Tensor, op: str):
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{op}: 輸入含有非有限數值")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x, 'softmax')
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return _result(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x, 'log_softmax')
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    return _result(y, (x,), lambda g: (g - np.exp(y) * g.sum(axis=axis, keepdims=True),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """沿最後一軸做 layer normalization"""
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError('layer_norm', x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def backward_fn(g):
        dxhat = g * gamma.data
        dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        dgamma = (g * xhat).reshape(-1, n).sum(axis=0)
        dbeta = g.reshape(-1, n).sum(axis=0)
        return dx, dgamma, dbeta

    return _result(out, (x, gamma, beta), backward_fn)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """
    平均負對數似然

    Args:
        logits: [..., V]
        targets: 與 logits 前置維度同形的整數 id

    Returns:
        純量損失
    """
    targets = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    if logits.shape[:-1] != targets.shape:
        raise ShapeError('cross_entropy', logits.shape, targets.shape)
    if targets.size == 0:
        raise ContractError("cross_entropy 需要至少一個目標")
    if targets.min() < 0 or targets.max() >= vocab:
        raise TokenIndexError(f"目標 id 超出範圍 [0, {vocab})")
    _check_finite(logits, 'cross_entropy')

    flat = logits.data.reshape(-1, vocab)
    flat_targets = targets.reshape(-1)
    count = flat_targets.size
    rows = np.arange(count)
    shifted = flat - flat.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[rows, flat_targets].mean()

    def backward_fn(g):
        p = np.exp(logp)
        p[rows, flat_targets] -= 1.0
        return ((g * p / count).reshape(logits.shape),)

    return _result(np.array(loss), (logits,), backward_fn)


# ---------------------------------------------------------------------------
# 梯度檢查
# ---------------------------------------------------------------------------

def numeric_gradient(fn: Callable[[], Tensor], target: Tensor, h: float = 1e-5,
                     indices: Optional[Iterable[Tuple[int, ...]]] = None) -> np.ndarray:
    """
    以中央差分估計 d fn() / d target

    Args:
        fn: 回傳純量張量的函式，每次呼叫都重新建構計算圖
        target: 要擾動的張量（原地修改後還原）
        h: 差分步長
        indices: 只估計這些位置，其餘留 0

    Returns:
        與 target 同形的梯度估計
    """
    grad = np.zeros_like(target.data)
    positions = indices if indices is not None else np.ndindex(*target.shape)
    with no_grad():
        for pos in positions:
            original = target.data[pos]
            target.data[pos] = original + h
            plus = float(fn().data)
            target.data[pos] = original - h
            minus = float(fn().data)
            target.data[pos] = original
            grad[pos] = (plus - minus) / (2.0 * h)
    return grad

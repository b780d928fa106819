#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
張量引擎測試
============

每個運算的解析梯度都與中央差分比較，相對誤差 < 1e-4。
"""

import numpy as np
import pytest

from engine.errors import ContractError, NumericError, ShapeError, TokenIndexError
from engine.optim import AdamState, adam_step, zero_grad
from engine.tensor import (Tensor, concat, cross_entropy, dropout, einsum, embedding, index_select,
                           layer_norm, log_softmax, matmul, max_pool, no_grad, numeric_gradient, relu,
                           softmax)


def _param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def _check(fn, *targets, tol=1e-4):
    for t in targets:
        t.grad = None
    loss = fn()
    loss.backward()
    for t in targets:
        analytic = t.grad.copy()
        numeric = numeric_gradient(fn, t)
        assert _relative_error(analytic, numeric) < tol


class TestGradients:
    """逐運算梯度檢查"""

    def setup_method(self):
        self.rng = np.random.default_rng(0)
        self.w = Tensor(self.rng.normal(size=(3, 4)))

    def test_elementwise_with_broadcasting(self):
        a = _param(self.rng, 3, 4)
        b = _param(self.rng, 4)
        _check(lambda: ((a + b) * (a - b) / (b * b + 2.0) - a).sum(), a, b)

    def test_relu(self):
        a = _param(self.rng, 3, 4)
        _check(lambda: (relu(a) * self.w).sum(), a)

    def test_matmul_batched(self):
        a = _param(self.rng, 2, 3, 4)
        b = _param(self.rng, 4, 5)
        _check(lambda: (matmul(a, b) * matmul(a, b)).mean(), a, b)

    def test_einsum_relative_terms(self):
        q = _param(self.rng, 2, 2, 3, 4)
        r = _param(self.rng, 3, 5, 4)
        _check(lambda: (einsum('bhid,ijd->bhij', q, r) * einsum('bhid,ijd->bhij', q, r)).sum(), q, r)

    def test_reshape_transpose(self):
        a = _param(self.rng, 2, 6)
        _check(lambda: (a.reshape(3, 4).transpose(1, 0) * Tensor(np.arange(12.0).reshape(4, 3))).sum(), a)

    def test_concat(self):
        a = _param(self.rng, 2, 3)
        b = _param(self.rng, 2, 2)
        weights = Tensor(self.rng.normal(size=(2, 5)))
        _check(lambda: (concat([a, b], axis=-1) * weights).sum(), a, b)

    def test_max_pool(self):
        a = _param(self.rng, 2, 5, 3)
        weights = Tensor(self.rng.normal(size=(2, 3)))
        _check(lambda: (max_pool(a, axis=1) * weights).sum(), a)

    def test_embedding_and_index_select(self):
        weight = _param(self.rng, 6, 3)
        ids = np.array([[0, 2, 2], [5, 1, 0]])
        _check(lambda: (embedding(weight, ids) * embedding(weight, ids)).sum(), weight)
        scale = Tensor(self.rng.normal(size=(3, 3)))
        _check(lambda: (index_select(weight, [4, 4, 1], axis=0) * scale).sum(), weight)

    def test_softmax_and_log_softmax(self):
        a = _param(self.rng, 3, 4)
        _check(lambda: (softmax(a, axis=-1) * self.w).sum(), a)
        _check(lambda: (log_softmax(a, axis=-1) * self.w).sum(), a)

    def test_layer_norm(self):
        x = _param(self.rng, 2, 3, 4)
        g = _param(self.rng, 4)
        b = _param(self.rng, 4)
        weights = Tensor(self.rng.normal(size=(2, 3, 4)))
        _check(lambda: (layer_norm(x, g, b) * weights).sum(), x, g, b)

    def test_cross_entropy(self):
        logits = _param(self.rng, 2, 3, 5)
        targets = np.array([[0, 4, 2], [1, 1, 3]])
        _check(lambda: cross_entropy(logits, targets), logits)

    def test_dropout_uses_fixed_mask(self):
        a = _param(self.rng, 4, 4)

        def loss():
            return (dropout(a, 0.5, np.random.default_rng(5), training=True) * self.w.data.sum()).sum()

        _check(loss, a)


class TestTensorContracts:
    """錯誤處理與模式切換"""

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4, 5)))
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_non_finite_input(self):
        with pytest.raises(NumericError):
            softmax(Tensor(np.array([1.0, np.nan])))

    def test_token_out_of_range(self):
        with pytest.raises(TokenIndexError):
            embedding(Tensor(np.ones((3, 2))), [0, 3])
        with pytest.raises(TokenIndexError):
            cross_entropy(Tensor(np.zeros((1, 3))), [3])

    def test_dropout_is_identity_at_inference(self):
        a = Tensor(np.ones((3, 3)))
        assert dropout(a, 0.5, None, training=False) is a

    def test_dropout_training_requires_rng(self):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(3)), 0.5, None, training=True)

    def test_no_grad_records_nothing(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            out = (a * 2.0).sum()
        assert not out.requires_grad
        with pytest.raises(ContractError):
            out.backward()

    def test_unreached_parameters_get_zero_grad(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        out = (a * 0.0 + relu(b - 5.0)).sum()
        out.backward()
        np.testing.assert_array_equal(b.grad, np.zeros(3))

    def test_cross_entropy_uniform_value(self):
        loss = cross_entropy(Tensor(np.zeros((2, 4, 7))), np.zeros((2, 4), dtype=int))
        assert loss.item() == pytest.approx(np.log(7.0), abs=1e-12)


class TestAdam:
    """Adam 更新"""

    def test_first_step_moves_by_lr(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.array([0.5, -3.0])
        state = AdamState(lr=0.1)
        adam_step({'p': p}, state)
        # 偏差校正後第一步的位移約為 lr·sign(g)
        np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)
        assert state.step == 1

    def test_missing_grad_is_rejected(self):
        p = Tensor(np.ones(2), requires_grad=True)
        with pytest.raises(ContractError):
            adam_step({'p': p}, AdamState())

    def test_minimizes_quadratic(self):
        p = Tensor(np.array([3.0, -4.0]), requires_grad=True)
        params = {'p': p}
        state = AdamState(lr=0.05)
        for _ in range(500):
            zero_grad(params)
            (p * p).sum().backward()
            adam_step(params, state)
        assert np.abs(p.data).max() < 0.1

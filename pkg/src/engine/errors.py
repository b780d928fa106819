#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
錯誤類別
========

整個專案共用的例外類別。每個類別都繼承自對應情境下的內建例外，
呼叫端可以照舊以 ValueError / IndexError 捕捉。
"""


class ShapeError(ValueError):
    """張量維度不相符"""

    def __init__(self, op: str, *shapes):
        shape_text = ' 與 '.join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: 維度不相符 {shape_text}")
        self.op = op
        self.shapes = shapes


class NumericError(FloatingPointError):
    """輸入含有非有限數值 (nan / inf)"""


class ConfigError(ValueError):
    """配置項目無效"""


class CorpusParseError(ValueError):
    """語料檔案格式錯誤"""

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class SequenceLengthError(ValueError):
    """序列長度超出位置嵌入上限"""


class TokenIndexError(IndexError):
    """token id 或位置超出範圍"""


class ContractError(ValueError):
    """呼叫前置條件不成立"""


class CheckpointError(ValueError):
    """檢查點與模型不相容"""

    def __init__(self, message: str, parameter: str = None):
        super().__init__(f"{message}（參數: {parameter}）" if parameter else message)
        self.parameter = parameter


class OracleGuardError(ValueError):
    """窮舉空間超過上限"""

    def __init__(self, size: int, bound: int):
        super().__init__(f"窮舉空間 {size} 超過上限 {bound}，拒絕執行")
        self.size = size
        self.bound = bound


class AlignmentError(ValueError):
    """輸出與參考答案行數不一致"""

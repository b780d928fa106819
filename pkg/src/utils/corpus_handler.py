#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
語料處理模組
============

詞彙表建構、語料讀寫、合成任務產生，以及依形狀分桶的批次排程。

語料檔：UTF-8，每行一組「來源<TAB>目標」，token 以單一空白分隔。
詞彙檔：每行一個 token，行號即 id，保留 token 在最前面。
"""

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from engine.errors import ConfigError, CorpusParseError

from .logger import LoggingMixin

PAD, BOS, EOS, UNK, DUMMY = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ('<pad>', '<bos>', '<eos>', '<unk>', '<dummy>')
NUM_RESERVED = len(SPECIAL_TOKENS)
DEFAULT_MAX_LEN = 18
SYNTHETIC_TASKS = ('copy', 'reverse', 'keyed-dialog')


class Vocabulary:
    """token 與 id 的雙向映射，id 0..4 固定保留給特殊 token"""

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos: List[str] = list(SPECIAL_TOKENS)
        self._stoi: Dict[str, int] = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token in self._stoi:
            return self._stoi[token]
        if not token or ' ' in token or '\t' in token:
            raise ConfigError(f"無效的 token: {token!r}")
        self._stoi[token] = len(self._itos)
        self._itos.append(token)
        return self._stoi[token]

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    @property
    def tokens(self) -> List[str]:
        return list(self._itos)

    @property
    def content_ids(self) -> np.ndarray:
        """可被解碼器輸出的 id（不含保留 token）"""
        return np.arange(NUM_RESERVED, len(self._itos), dtype=np.int64)

    def token_to_id(self, token: str) -> int:
        return self._stoi.get(token, UNK)

    def id_to_token(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, tokens: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.token_to_id(tok) for tok in tokens)

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self._itos[int(i)] for i in ids]

    def decode_line(self, ids: Sequence[int]) -> str:
        return ' '.join(self.decode(ids))

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]], min_freq: int = 1) -> 'Vocabulary':
        """
        從訓練語料建立詞彙表

        Args:
            sequences: token 序列
            min_freq: 出現次數低於此值的 token 不收錄（之後映射為 <unk>）

        Returns:
            詞彙表；排序依頻率遞減、同頻率依字典序，確保結果可重現
        """
        counts = Counter(tok for seq in sequences for tok in seq)
        kept = sorted((tok for tok, c in counts.items() if c >= min_freq and tok not in SPECIAL_TOKENS),
                      key=lambda tok: (-counts[tok], tok))
        return cls(kept)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(''.join(f"{tok}\n" for tok in self._itos), encoding='utf-8')

    @classmethod
    def load(cls, path) -> 'Vocabulary':
        lines = Path(path).read_text(encoding='utf-8').split('\n')
        if lines and lines[-1] == '':
            lines.pop()
        if tuple(lines[:NUM_RESERVED]) != SPECIAL_TOKENS:
            raise CorpusParseError(str(path), 1, "詞彙檔必須以保留 token 開頭")
        vocab = cls()
        for line_no, token in enumerate(lines[NUM_RESERVED:], start=NUM_RESERVED + 1):
            if token in vocab:
                raise CorpusParseError(str(path), line_no, f"重複的 token {token!r}")
            vocab.add(token)
        return vocab


@dataclass(frozen=True)
class SourceTargetPair:
    """一組來源 / 目標 id 序列"""
    source: Tuple[int, ...]
    target: Tuple[int, ...]

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.source), len(self.target)


@dataclass
class Corpus:
    """語料：句對列表與切分標籤"""
    pairs: List[SourceTargetPair]
    split: str = 'train'
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def sources(self) -> List[Tuple[int, ...]]:
        return [p.source for p in self.pairs]

    @property
    def targets(self) -> List[Tuple[int, ...]]:
        return [p.target for p in self.pairs]


# ---------------------------------------------------------------------------
# 語料檔案
# ---------------------------------------------------------------------------

def _parse_corpus_lines(path: Path, max_len: int) -> List[Tuple[List[str], List[str]]]:
    raw_pairs = []
    text = path.read_text(encoding='utf-8')
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    for line_no, line in enumerate(lines, start=1):
        parts = line.split('\t')
        if len(parts) != 2:
            raise CorpusParseError(str(path), line_no, "每行必須恰好有一個 tab 分隔來源與目標")
        sides = []
        for label, side in zip(('來源', '目標'), parts):
            if not side:
                raise CorpusParseError(str(path), line_no, f"{label}為空")
            tokens = side.split(' ')
            if any(tok == '' for tok in tokens):
                raise CorpusParseError(str(path), line_no, f"{label}含有多餘空白")
            if any(tok in SPECIAL_TOKENS for tok in tokens):
                raise CorpusParseError(str(path), line_no, f"{label}含有保留 token")
            if len(tokens) > max_len:
                raise CorpusParseError(str(path), line_no, f"{label}長度 {len(tokens)} 超過上限 {max_len}")
            sides.append(tokens)
        raw_pairs.append((sides[0], sides[1]))
    return raw_pairs


def load_corpus(path, min_freq: int = 1, vocab: Optional[Vocabulary] = None,
                split: str = 'train', max_len: int = DEFAULT_MAX_LEN) -> Tuple[Corpus, Vocabulary]:
    """
    讀取語料檔

    Args:
        path: 語料檔路徑
        min_freq: 建立詞彙表時的最低頻率
        vocab: 已有的詞彙表（dev/test 使用訓練集的詞彙表）；None 時從本檔建立
        split: 切分標籤
        max_len: 序列長度上限

    Returns:
        (語料, 詞彙表)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"語料檔不存在: {path}")
    raw_pairs = _parse_corpus_lines(path, max_len)
    if vocab is None:
        vocab = Vocabulary.build((seq for pair in raw_pairs for seq in pair), min_freq=min_freq)
    pairs = [SourceTargetPair(vocab.encode(src), vocab.encode(tgt)) for src, tgt in raw_pairs]
    return Corpus(pairs, split=split, metadata={'path': str(path)}), vocab


def write_corpus(corpus: Corpus, vocab: Vocabulary, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for pair in corpus.pairs:
            f.write(f"{vocab.decode_line(pair.source)}\t{vocab.decode_line(pair.target)}\n")


def load_stopwords(path) -> frozenset:
    """讀取停用詞表（每行一個 token，# 開頭為註解）"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"停用詞表不存在: {path}")
    words = set()
    for line in path.read_text(encoding='utf-8').splitlines():
        line = line.strip()
        if line and not line.startswith('#'):
            words.add(line)
    return frozenset(words)


# ---------------------------------------------------------------------------
# 合成任務
# ---------------------------------------------------------------------------

def synthetic_vocabulary(vocab_size: int) -> Vocabulary:
    return Vocabulary(f"w{i}" for i in range(vocab_size))


@dataclass(frozen=True)
class KeyedDialogLayout:
    """keyed-dialog 任務的 token 配置：key、填充 / 模板 token、共用的 dull 回覆"""
    vocab_size: int
    n_keys: int
    response_len: int
    templates: Tuple[Tuple[int, ...], ...]
    dull_response: Tuple[int, ...]
    filler_ids: Tuple[int, ...]

    @classmethod
    def create(cls, vocab_size: int, n_keys: Optional[int], response_len: int,
               template_seed: int = 0) -> 'KeyedDialogLayout':
        n_keys = n_keys if n_keys else max(2, vocab_size // 4)
        if vocab_size < n_keys + 2 * response_len:
            raise ConfigError(f"keyed-dialog 需要 vocab_size >= n_keys + 2*response_len "
                              f"({n_keys + 2 * response_len})，目前為 {vocab_size}")
        fillers = tuple(NUM_RESERVED + i for i in range(n_keys, vocab_size - response_len))
        dull = tuple(NUM_RESERVED + i for i in range(vocab_size - response_len, vocab_size))
        # 模板只依賴任務形狀，train/dev/test 共用
        rng = np.random.default_rng([template_seed, vocab_size, n_keys, response_len])
        templates = tuple(tuple(int(fillers[j]) for j in rng.integers(0, len(fillers), response_len))
                          for _ in range(n_keys))
        return cls(vocab_size, n_keys, response_len, templates, dull, fillers)


def _validate_synthetic(task: str, vocab_size: int, n_pairs: int, len_range: Tuple[int, int],
                        dull_fraction: float, max_len: int):
    if task not in SYNTHETIC_TASKS:
        raise ConfigError(f"未知的合成任務: {task}（可用: {', '.join(SYNTHETIC_TASKS)}）")
    if vocab_size < 2:
        raise ConfigError(f"vocab_size 必須 >= 2，目前為 {vocab_size}")
    if n_pairs < 1:
        raise ConfigError(f"n_pairs 必須 >= 1，目前為 {n_pairs}")
    lo, hi = len_range
    if not 1 <= lo <= hi <= max_len:
        raise ConfigError(f"len_range {len_range} 必須落在 [1, {max_len}]")
    if not 0.0 <= dull_fraction <= 1.0:
        raise ConfigError(f"dull_fraction 必須在 [0, 1]，目前為 {dull_fraction}")


def _synthetic_pair(task: str, rng: np.random.Generator, vocab_size: int, len_range: Tuple[int, int],
                    layout: Optional[KeyedDialogLayout], dull_fraction: float) -> SourceTargetPair:
    length = int(rng.integers(len_range[0], len_range[1] + 1))
    if task in ('copy', 'reverse'):
        source = tuple(int(i) + NUM_RESERVED for i in rng.integers(0, vocab_size, length))
        target = source if task == 'copy' else tuple(reversed(source))
        return SourceTargetPair(source, target)

    key = int(rng.integers(0, layout.n_keys))
    fillers = [layout.filler_ids[int(j)] for j in rng.integers(0, len(layout.filler_ids), length - 1)]
    source = (NUM_RESERVED + key, *fillers)
    target = layout.dull_response if rng.random() < dull_fraction else layout.templates[key]
    return SourceTargetPair(source, target)


def gen_synthetic(task: str, vocab_size: int, n_pairs: int, len_range: Tuple[int, int], seed: int,
                  dull_fraction: float = 0.5, n_keys: Optional[int] = None, response_len: Optional[int] = None,
                  split: str = 'train', max_len: int = DEFAULT_MAX_LEN) -> Corpus:
    """
    產生合成語料

    Args:
        task: copy | reverse | keyed-dialog
        vocab_size: 內容 token 數量（不含保留 token）
        n_pairs: 句對數量
        len_range: 來源長度範圍（含兩端）
        seed: 亂數種子
        dull_fraction: keyed-dialog 中回覆為共用 dull 回覆的比例
        n_keys: keyed-dialog 的 key 數量，預設 vocab_size // 4
        response_len: keyed-dialog 回覆長度，預設 min(3, len_range 上限) 且不小於下限
        split: 切分標籤

    Returns:
        語料（id 依 synthetic_vocabulary(vocab_size) 編碼）
    """
    _validate_synthetic(task, vocab_size, n_pairs, len_range, dull_fraction, max_len)
    layout = _keyed_layout(task, vocab_size, n_keys, response_len, len_range)
    rng = np.random.default_rng(seed)
    pairs = [_synthetic_pair(task, rng, vocab_size, len_range, layout, dull_fraction) for _ in range(n_pairs)]
    return Corpus(pairs, split=split, metadata=_synthetic_metadata(task, layout))


def gen_synthetic_splits(task: str, vocab_size: int, sizes: Dict[str, int], len_range: Tuple[int, int],
                         seed: int, dull_fraction: float = 0.5, n_keys: Optional[int] = None,
                         response_len: Optional[int] = None,
                         max_len: int = DEFAULT_MAX_LEN) -> Dict[str, Corpus]:
    """
    產生來源互不重疊的多個切分

    Args:
        sizes: 切分名稱到句對數量，例如 {'train': 2000, 'dev': 200, 'test': 200}

    Returns:
        切分名稱到語料的映射
    """
    total = sum(sizes.values())
    _validate_synthetic(task, vocab_size, max(total, 1), len_range, dull_fraction, max_len)
    layout = _keyed_layout(task, vocab_size, n_keys, response_len, len_range)
    rng = np.random.default_rng(seed)
    seen = set()
    pairs: List[SourceTargetPair] = []
    attempts = 0
    while len(pairs) < total:
        attempts += 1
        if attempts > 50 * total + 1000:
            raise ConfigError(f"無法產生 {total} 個互不重複的來源，請加大 vocab_size 或長度範圍")
        pair = _synthetic_pair(task, rng, vocab_size, len_range, layout, dull_fraction)
        if pair.source in seen:
            continue
        seen.add(pair.source)
        pairs.append(pair)

    splits, start = {}, 0
    for name, size in sizes.items():
        splits[name] = Corpus(pairs[start:start + size], split=name, metadata=_synthetic_metadata(task, layout))
        start += size
    return splits


def _keyed_layout(task, vocab_size, n_keys, response_len, len_range) -> Optional[KeyedDialogLayout]:
    if task != 'keyed-dialog':
        return None
    lo, hi = len_range
    if response_len is None:
        response_len = max(lo, min(3, hi))
    if not lo <= response_len <= hi:
        raise ConfigError(f"response_len {response_len} 必須落在 len_range {len_range}")
    return KeyedDialogLayout.create(vocab_size, n_keys, response_len)


def _synthetic_metadata(task: str, layout: Optional[KeyedDialogLayout]) -> Dict[str, Any]:
    meta: Dict[str, Any] = {'task': task}
    if layout is not None:
        meta['dull_response'] = layout.dull_response
        meta['n_keys'] = layout.n_keys
    return meta


# ---------------------------------------------------------------------------
# 批次排程
# ---------------------------------------------------------------------------

def batch_by_shape(pairs: Sequence[SourceTargetPair], batch_tokens: int,
                   rng: np.random.Generator) -> List[List[SourceTargetPair]]:
    """
    依 (L_x, L_y) 分桶後切成批次，每個批次都是無需填充的稠密張量

    Args:
        pairs: 句對
        batch_tokens: 每批次的 token 預算（來源 + 目標）
        rng: 洗牌用的亂數產生器

    Returns:
        打亂順序後的批次列表
    """
    buckets: Dict[Tuple[int, int], List[SourceTargetPair]] = {}
    for pair in pairs:
        buckets.setdefault(pair.shape, []).append(pair)

    batches = []
    for shape in sorted(buckets):
        bucket = buckets[shape]
        order = rng.permutation(len(bucket))
        size = max(1, batch_tokens // (shape[0] + shape[1]))
        for start in range(0, len(bucket), size):
            batches.append([bucket[i] for i in order[start:start + size]])
    return [batches[i] for i in rng.permutation(len(batches))]


class BatchSchedule:
    """由種子決定的批次順序；第 step 個批次只取決於 (seed, step)，可從任意步驟續跑"""

    def __init__(self, corpus: Corpus, batch_tokens: int, seed: int):
        if not corpus.pairs:
            raise ConfigError("訓練語料為空")
        self.corpus = corpus
        self.batch_tokens = batch_tokens
        self.seed = seed
        self._batches: List[List[SourceTargetPair]] = []
        self._epoch = 0

    def batch_at(self, step: int) -> List[SourceTargetPair]:
        while step >= len(self._batches):
            rng = np.random.default_rng([self.seed, self._epoch])
            self._batches.extend(batch_by_shape(self.corpus.pairs, self.batch_tokens, rng))
            self._epoch += 1
        return self._batches[step]


class CorpusHandler(LoggingMixin):
    """依 task 配置準備 train/dev/test 語料與詞彙表"""

    def __init__(self, config: Dict[str, Any], logger=None):
        """
        初始化語料處理器

        Args:
            config: 配置字典（使用 task 節點）
            logger: 日誌記錄器
        """
        self.config = config
        if logger:
            self._logger = logger

        self.task_config = config.get('task', {})
        self.task = self.task_config.get('name', 'copy')
        self.max_len = int(self.task_config.get('max_len', DEFAULT_MAX_LEN))

        self._validate_config()

    def _validate_config(self):
        if self.task == 'file':
            path = self.task_config.get('train_path')
            if not path:
                raise ConfigError("task.train_path 未設置")
            if not Path(path).exists():
                raise FileNotFoundError(f"訓練語料不存在: {path}")
        elif self.task not in SYNTHETIC_TASKS:
            raise ConfigError(f"未知的任務: {self.task}")

    def prepare(self) -> Tuple[Dict[str, Corpus], Vocabulary]:
        """
        準備所有切分

        Returns:
            (切分名稱到語料, 詞彙表)
        """
        if self.task == 'file':
            return self._load_files()

        cfg = self.task_config
        vocab_size = int(cfg.get('vocab_size', 20))
        sizes = {
            'train': int(cfg.get('n_train', 500)),
            'dev': int(cfg.get('n_dev', 100)),
            'test': int(cfg.get('n_test', 100)),
        }
        splits = gen_synthetic_splits(
            self.task, vocab_size, sizes,
            len_range=(int(cfg.get('len_min', 1)), int(cfg.get('len_max', 8))),
            seed=int(cfg.get('seed', 7)),
            dull_fraction=float(cfg.get('dull_fraction', 0.5)),
            n_keys=int(cfg.get('n_keys', 0)) or None,
            response_len=int(cfg.get('response_len', 0)) or None,
            max_len=self.max_len,
        )
        self.logger.info(f"合成語料已產生 - 任務: {self.task}, "
                         + ', '.join(f"{k}={len(v)}" for k, v in splits.items()))
        return splits, synthetic_vocabulary(vocab_size)

    def _load_files(self) -> Tuple[Dict[str, Corpus], Vocabulary]:
        cfg = self.task_config
        train, vocab = load_corpus(cfg['train_path'], min_freq=int(cfg.get('min_freq', 1)),
                                   split='train', max_len=self.max_len)
        splits = {'train': train}
        for name in ('dev', 'test'):
            path = cfg.get(f'{name}_path')
            if path:
                splits[name], _ = load_corpus(path, vocab=vocab, split=name, max_len=self.max_len)
        self.logger.info(f"語料已載入 - 詞彙量: {len(vocab)}, "
                         + ', '.join(f"{k}={len(v)}" for k, v in splits.items()))
        return splits, vocab


def save_vocab(vocab: Vocabulary, path):
    vocab.save(path)


def load_vocab(path) -> Vocabulary:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"詞彙檔不存在: {path}")
    return Vocabulary.load(path)


def split_corpus(corpus: Corpus, fractions: Dict[str, float], seed: int) -> Dict[str, Corpus]:
    """
    以固定種子把語料切成數份；同一來源的句對一定落在同一份

    Args:
        corpus: 原始語料
        fractions: 切分名稱到比例，例如 {'train': 0.8, 'dev': 0.1, 'test': 0.1}
        seed: 亂數種子

    Returns:
        切分名稱到語料的映射
    """
    if abs(sum(fractions.values()) - 1.0) > 1e-9:
        raise ConfigError(f"切分比例總和必須為 1，目前為 {sum(fractions.values())}")
    groups: Dict[Tuple[int, ...], List[SourceTargetPair]] = {}
    for pair in corpus.pairs:
        groups.setdefault(pair.source, []).append(pair)
    keys = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(keys))

    splits, start = {}, 0
    names = list(fractions)
    for i, name in enumerate(names):
        end = len(keys) if i == len(names) - 1 else start + int(round(fractions[name] * len(keys)))
        pairs = [p for j in order[start:end] for p in groups[keys[j]]]
        splits[name] = Corpus(pairs, split=name, metadata=dict(corpus.metadata))
        start = end
    return splits

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
報告生成模組
============

寫出解碼結果、固定鍵集合的評估報告、Table-1 格式的系統比較表、
λ 掃描表與 JSON 執行摘要。
"""

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import pandas as pd

from engine.errors import CorpusParseError

from .logger import LoggingMixin
from .metrics import REPORT_KEYS

TABLE_COLUMNS = {
    'bleu': 'BLEU',
    'distinct1': 'distinct-1',
    'distinct2': 'distinct-2',
    'avg_len': 'Avg. length',
    'stopword_pct': 'Stopword%',
}


@dataclass
class DumpRecord:
    """解碼結果的一行：輸入、輸出、總分與逐 token 分數"""
    source: str
    output: str
    total: float
    per_token: List[float] = field(default_factory=list)

    def to_line(self) -> str:
        per_token = ','.join(f"{s:.6f}" for s in self.per_token)
        return f"{self.source}\t{self.output}\t{self.total:.6f}\t{per_token}"

    @classmethod
    def from_line(cls, line: str, path: str = '<dump>', line_no: int = 0) -> 'DumpRecord':
        parts = line.split('\t')
        if len(parts) != 4:
            raise CorpusParseError(path, line_no, "解碼結果每行必須有 4 個欄位")
        try:
            per_token = [float(s) for s in parts[3].split(',')] if parts[3] else []
            return cls(parts[0], parts[1], float(parts[2]), per_token)
        except ValueError:
            raise CorpusParseError(path, line_no, "分數欄位不是數字") from None


def write_dump(records: Sequence[DumpRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(''.join(r.to_line() + '\n' for r in records), encoding='utf-8')
    return path


def read_dump(path) -> List[DumpRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"解碼結果不存在: {path}")
    lines = path.read_text(encoding='utf-8').splitlines()
    return [DumpRecord.from_line(line, str(path), i) for i, line in enumerate(lines, start=1)]


def format_metrics(metrics: Mapping[str, float]) -> str:
    """key=value，固定鍵順序，小數 4 位"""
    return ''.join(f"{key}={metrics[key]:.4f}\n" for key in REPORT_KEYS)


def parse_metrics(text: str) -> Dict[str, float]:
    values = {}
    for line in text.splitlines():
        if '=' in line:
            key, value = line.split('=', 1)
            values[key.strip()] = float(value)
    return values


class ReportGenerator(LoggingMixin):
    """報告生成器"""

    def __init__(self, config: Dict[str, Any], logger=None):
        """
        初始化報告生成器

        Args:
            config: 配置字典（使用 output 節點）
            logger: 日誌記錄器
        """
        self.config = config
        if logger:
            self._logger = logger

        # 輸出配置
        self.output_config = config.get('output', {})
        self.output_dir = Path(self.output_config.get('directory', 'output')) / self.output_config.get('run_name', 'run')

        # 確保輸出目錄存在
        self.output_dir.mkdir(parents=True, exist_ok=True)

        self.logger.debug(f"報告生成器已初始化 - 輸出目錄: {self.output_dir}")

    def resolve(self, path=None, default_name: str = 'report.txt') -> Path:
        """未指定路徑時放在輸出目錄下"""
        return Path(path) if path else self.output_dir / default_name

    def write_dump(self, records: Sequence[DumpRecord], path=None) -> Path:
        path = write_dump(records, self.resolve(path, 'decode.tsv'))
        self.logger.info(f"解碼結果已保存 - {len(records)} 行: {path}")
        return path

    def write_metrics_report(self, metrics: Mapping[str, float], path=None) -> Path:
        path = self.resolve(path, 'metrics.txt')
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_metrics(metrics), encoding='utf-8')
        self.logger.info(f"評估報告已保存: {path} - "
                         + ', '.join(f"{k}={metrics[k]:.4f}" for k in REPORT_KEYS))
        return path

    def comparison_table(self, rows: Sequence[Tuple[str, Mapping[str, float]]]) -> pd.DataFrame:
        """
        系統比較表（每列一個系統，第一列通常是 Human）

        Args:
            rows: [(系統名稱, 指標字典)]

        Returns:
            DataFrame，distinct 與停用詞以百分比表示
        """
        records = []
        for name, metrics in rows:
            record = {'System': name}
            for key, column in TABLE_COLUMNS.items():
                value = metrics[key]
                if key in ('bleu', 'distinct1', 'distinct2'):
                    value *= 100.0
                record[column] = round(value, 2)
            records.append(record)
        return pd.DataFrame(records, columns=['System', *TABLE_COLUMNS.values()])

    def sweep_table(self, results: Sequence[Tuple[float, Mapping[str, float]]]) -> pd.DataFrame:
        """λ 掃描結果，依 λ 排序並標出 BLEU 最高者（同分取較小 λ）"""
        df = pd.DataFrame([{'lambda': lam, **{k: metrics[k] for k in REPORT_KEYS}} for lam, metrics in results])
        df = df.sort_values('lambda', kind='stable').reset_index(drop=True)
        df['best'] = False
        if not df.empty:
            df.loc[df['bleu'].idxmax(), 'best'] = True
        return df

    def write_table(self, df: pd.DataFrame, path=None) -> Path:
        """寫出 TSV 與同名的純文字版本"""
        path = self.resolve(path, 'table.tsv')
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, sep='\t', index=False, float_format='%.4f')
        path.with_suffix('.txt').write_text(df.to_string(index=False) + '\n', encoding='utf-8')
        self.logger.info(f"表格已保存: {path}")
        return path

    def write_summary(self, summary: Dict[str, Any], path=None) -> Path:
        """JSON 執行摘要"""
        path = self.resolve(path, 'summary.json')
        payload = {'generated_at': datetime.now().isoformat(timespec='seconds'), **summary}
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, default=str)
        return path

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非自迴歸 MMI 生成 - 主程式
==========================

以共用嵌入聯合訓練前向 p(y|x) 與反向 p(x|y) 非自迴歸 Transformer，
解碼時逐位置最大化 MMI 分數；同時提供自迴歸 beam / 重排序基準、
窮舉驗證器與自動評估。

子命令:
    train   產生或載入語料並訓練，--checkpoint 代表從訓練檢查點續跑
    decode  依解碼模式輸出解碼結果
    eval    評估解碼結果；--sweep 在 dev 上掃描 λ，--table 產生系統比較表
    oracle  以窮舉驗證解碼器與分數恆等式

結束碼: 0 成功、1 用法或配置錯誤、2 資料錯誤、3 驗證失敗
"""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

# 添加項目根目錄與 src 目錄到 Python 路徑
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.append(str(PROJECT_ROOT))
sys.path.append(str(PROJECT_ROOT / 'src'))

from config.settings import DECODE_MODES, Config
from engine.errors import (AlignmentError, CheckpointError, ConfigError, ContractError, CorpusParseError,
                           OracleGuardError, SequenceLengthError, TokenIndexError)
from decoding.decode_runner import AR_MODES, FORWARD_ONLY_MODES, DecodeRunner
from decoding.oracle import OracleSuite, find_nonglobal_instances
from models.bundle import VOCAB_FILE, ModelBundle
from models.trainer import EXPORT_CHECKPOINT, Trainer
from models.transformer import BlockConfig
from utils.corpus_handler import (Corpus, CorpusHandler, Vocabulary, load_corpus, load_stopwords, load_vocab,
                                  write_corpus)
from utils.logger import setup_logger
from utils.metrics import (avg_length, distinct_n, dull_rate, evaluate_responses, first_token_share,
                           stopword_pct)
from utils.report_generator import ReportGenerator, read_dump

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ORACLE = 3

SYSTEM_NAMES = {
    'nonar': 'NonAR',
    'nonar+mmi': 'NonAR+MMI',
    'nonar+mmi+npd': 'NonAR+MMI+NPD',
    'ar': 'AR',
    'ar+mmi': 'AR+MMI',
    'ar+mmi+diverse': 'AR+MMI+diverse',
}


class NonARMMIRunner:
    """各子命令的共用流程"""

    def __init__(self, config: Config, logger=None):
        """
        初始化執行器

        Args:
            config: 已套用所有覆蓋值的配置
            logger: 日誌記錄器，預設依 logging 節點建立
        """
        config.validate()
        self.config = config
        self.settings = config.to_dict()
        self.logger = logger or setup_logger(self.settings['logging'])
        self.report_generator = ReportGenerator(self.settings, self.logger)
        self.run_dir = self.report_generator.output_dir

        for key, value in config.items():
            self.logger.debug(f"配置 {key}={value}")
        self.logger.info(f"執行器初始化完成 - 任務: {self.settings['task']['name']}, 輸出目錄: {self.run_dir}")

    # ------------------------------------------------------------------
    # 資料與模型
    # ------------------------------------------------------------------

    def block_config(self) -> BlockConfig:
        return BlockConfig.from_dict(self.settings['model'])

    def load_split(self, name: str, vocab: Optional[Vocabulary] = None) -> Tuple[Corpus, Vocabulary]:
        """
        取得指定切分

        Args:
            name: train / dev / test
            vocab: 已知的詞彙表（通常來自檢查點）

        Returns:
            (語料, 詞彙表)
        """
        task = self.settings['task']
        if task['name'] == 'file':
            path = task.get(f'{name}_path')
            if not path:
                raise ConfigError(f"task.{name}_path 未設置")
            if vocab is None:
                vocab = load_vocab(self.run_dir / VOCAB_FILE)
            corpus, _ = load_corpus(path, vocab=vocab, split=name, max_len=int(task['max_len']))
            return corpus, vocab

        splits, synthetic = CorpusHandler(self.settings, self.logger).prepare()
        if vocab is not None and vocab != synthetic:
            raise CheckpointError(f"檢查點詞彙表（{len(vocab)}）與合成任務（{len(synthetic)}）不符",
                                  parameter='embed')
        if name not in splits:
            raise ConfigError(f"未知的切分: {name}")
        return splits[name], synthetic

    def load_bundle(self, checkpoint: Optional[str] = None) -> Tuple[ModelBundle, Vocabulary]:
        path = Path(checkpoint) if checkpoint else self.run_dir / EXPORT_CHECKPOINT
        if not path.exists():
            raise FileNotFoundError(f"檢查點不存在: {path}")
        bundle = ModelBundle.load(path, self.block_config())
        vocab = bundle.vocab
        if vocab is None:
            _, vocab = self.load_split('train')
        self.logger.info(f"模型已載入 - 路徑: {path}, 詞彙量: {bundle.vocab_size}, 自迴歸: {bundle.has_ar}")
        return bundle, vocab

    def _decoder(self, bundle: ModelBundle, vocab: Vocabulary, mode: Optional[str] = None) -> DecodeRunner:
        settings = dict(self.settings)
        if mode is not None:
            settings['decode'] = {**self.settings['decode'], 'mode': mode}
        return DecodeRunner(bundle, vocab, settings, self.logger)

    def _dull_response(self, corpus: Optional[Corpus], vocab: Optional[Vocabulary]) -> str:
        configured = self.settings['eval'].get('dull_response', '')
        if configured:
            return configured
        if corpus is not None and vocab is not None and 'dull_response' in corpus.metadata:
            return vocab.decode_line(corpus.metadata['dull_response'])
        return ''

    def _targets(self, corpus: Corpus, vocab: Vocabulary) -> List[str]:
        return [vocab.decode_line(t) for t in corpus.targets]

    # ------------------------------------------------------------------
    # 子命令
    # ------------------------------------------------------------------

    def train(self, checkpoint: Optional[str] = None, out: Optional[str] = None) -> Dict:
        """
        訓練四個模型

        Args:
            checkpoint: 續跑用的訓練檢查點
            out: 輸出目錄，預設為本次執行目錄

        Returns:
            訓練摘要
        """
        directory = Path(out) if out else self.run_dir
        splits, vocab = CorpusHandler(self.settings, self.logger).prepare()
        for name, corpus in splits.items():
            write_corpus(corpus, vocab, directory / f"{name}.tsv")

        trainer = Trainer(self.settings, splits['train'], vocab, self.logger)
        if checkpoint:
            trainer.resume(checkpoint)
        result = trainer.train(output_dir=directory)

        last = result.history[-1] if result.history else None
        summary = {
            'command': 'train',
            'steps': result.steps,
            'fwd_loss': last.fwd_loss if last else None,
            'bwd_loss': last.bwd_loss if last else None,
            'len_loss': last.len_loss if last else None,
            'checkpoint': str(result.checkpoint_path),
            'model': str(result.export_path),
            'train_log': str(result.log_path),
        }
        self.report_generator.write_summary(summary, directory / 'train_summary.json')
        return summary

    async def decode(self, checkpoint: Optional[str] = None, out: Optional[str] = None) -> Dict:
        """依 decode.mode 解碼 decode.split 切分的所有來源"""
        bundle, vocab = self.load_bundle(checkpoint)
        corpus, vocab = self.load_split(self.settings['decode']['split'], vocab)
        runner = self._decoder(bundle, vocab)
        records = await runner.decode_all(corpus.sources)
        path = self.report_generator.write_dump(records, out)
        return {'command': 'decode', 'mode': runner.mode, 'lambda': runner.lam, 'lines': len(records),
                'dump': str(path)}

    def evaluate(self, dump: Optional[str] = None, references: Optional[str] = None,
                 out: Optional[str] = None) -> Dict:
        """
        評估一份解碼結果

        Args:
            dump: 解碼結果路徑，預設為執行目錄下的 decode.tsv
            references: 參考答案檔（每行一句；含 tab 時取第二欄），預設為 decode.split 的目標
            out: 評估報告路徑

        Returns:
            評估摘要
        """
        records = read_dump(self.report_generator.resolve(dump, 'decode.tsv'))
        hypotheses = [r.output for r in records]

        corpus = vocab = None
        if references:
            refs = read_references(references)
        else:
            corpus, vocab = self.load_split(self.settings['decode']['split'], self._saved_vocab())
            refs = self._targets(corpus, vocab)

        stopwords = load_stopwords(self.settings['eval']['stopwords'])
        metrics = evaluate_responses(hypotheses, refs, stopwords)
        report_path = self.report_generator.write_metrics_report(metrics, out)

        summary = {'command': 'eval', 'metrics': metrics, 'report': str(report_path),
                   'first_token_share': first_token_share(hypotheses)}
        dull = self._dull_response(corpus, vocab)
        if dull:
            summary['dull_rate'] = dull_rate(hypotheses, dull)
        self.report_generator.write_summary(summary, report_path.with_suffix('.json'))
        return summary

    def _saved_vocab(self) -> Optional[Vocabulary]:
        path = self.run_dir / VOCAB_FILE
        return load_vocab(path) if path.exists() else None

    async def sweep(self, checkpoint: Optional[str] = None, out: Optional[str] = None) -> float:
        """
        在 dev 切分上掃描 λ，以 BLEU 選出最佳值（同分取較小 λ）

        Returns:
            最佳 λ
        """
        mode = self.settings['decode']['mode']
        if mode in FORWARD_ONLY_MODES:
            raise ConfigError(f"解碼模式 {mode} 不使用 λ，無法掃描")
        bundle, vocab = self.load_bundle(checkpoint)
        corpus, vocab = self.load_split('dev', vocab)
        refs = self._targets(corpus, vocab)
        stopwords = load_stopwords(self.settings['eval']['stopwords'])
        runner = self._decoder(bundle, vocab)

        step = float(self.settings['eval']['sweep_step'])
        if not 0.0 < step <= 1.0:
            raise ConfigError(f"eval.sweep_step 必須在 (0, 1]，目前為 {step}")
        grid = [round(min(i * step, 1.0), 10) for i in range(int(round(1.0 / step)) + 1)]

        results = []
        for lam in grid:
            records = await runner.decode_all(corpus.sources, lam)
            metrics = evaluate_responses([r.output for r in records], refs, stopwords)
            self.logger.info(f"λ={lam:.2f} - bleu={metrics['bleu']:.4f}, distinct2={metrics['distinct2']:.4f}")
            results.append((lam, metrics))

        df = self.report_generator.sweep_table(results)
        self.report_generator.write_table(df, out or self.run_dir / 'sweep.tsv')
        best = float(df.loc[df['best'], 'lambda'].iloc[0])
        self.logger.info(f"λ 掃描完成 - 最佳 λ={best:.2f}")
        return best

    async def table(self, checkpoint: Optional[str] = None, lam: Optional[float] = None,
                    out: Optional[str] = None) -> Dict:
        """
        產生系統比較表：Human 列（參考答案本身，無 BLEU）加上每個可用的解碼模式

        Args:
            checkpoint: 模型檢查點
            lam: MMI 模式使用的 λ，預設 decode.lam
            out: 表格路徑
        """
        bundle, vocab = self.load_bundle(checkpoint)
        corpus, vocab = self.load_split(self.settings['decode']['split'], vocab)
        refs = self._targets(corpus, vocab)
        stopwords = load_stopwords(self.settings['eval']['stopwords'])
        dull = self._dull_response(corpus, vocab)

        human = {
            'bleu': float('nan'),
            'distinct1': distinct_n(refs, 1),
            'distinct2': distinct_n(refs, 2),
            'avg_len': avg_length(refs),
            'stopword_pct': stopword_pct(refs, stopwords),
        }
        rows = [('Human', human)]
        extras = {}
        for mode in DECODE_MODES:
            if not bundle.has_ar and (mode in AR_MODES or mode == 'nonar+mmi+npd'):
                self.logger.warning(f"檢查點沒有自迴歸模型，略過 {mode}")
                continue
            runner = self._decoder(bundle, vocab, mode)
            records = await runner.decode_all(corpus.sources, None if mode in FORWARD_ONLY_MODES else lam)
            self.report_generator.write_dump(records, self.run_dir / f"decode.{mode}.tsv")
            hypotheses = [r.output for r in records]
            rows.append((SYSTEM_NAMES[mode], evaluate_responses(hypotheses, refs, stopwords)))
            extras[mode] = {'first_token_share': first_token_share(hypotheses)}
            if dull:
                extras[mode]['dull_rate'] = dull_rate(hypotheses, dull)

        df = self.report_generator.comparison_table(rows)
        path = self.report_generator.write_table(df, out or self.run_dir / 'table.tsv')
        summary = {'command': 'table', 'lambda': lam if lam is not None else self.settings['decode']['lam'],
                   'table': str(path), 'systems': extras}
        self.report_generator.write_summary(summary, path.with_suffix('.json'))
        return summary

    def oracle(self, checkpoint: Optional[str] = None, out: Optional[str] = None) -> Dict:
        """
        以窮舉驗證逐位置解碼、N-best 與分數恆等式；未提供檢查點時使用新初始化的模型

        Raises:
            OracleGuardError: 詞彙量與長度使窮舉空間超過上限
        """
        oracle_config = self.settings['oracle']
        if checkpoint:
            bundle, vocab = self.load_bundle(checkpoint)
            corpus, vocab = self.load_split('test', vocab)
        else:
            corpus, vocab = self.load_split('test')
            bundle = ModelBundle.create(len(vocab), self.block_config(), int(self.settings['train']['seed']),
                                        with_ar=False, vocab=vocab)
            self.logger.info("未提供檢查點，使用新初始化的模型")

        sources = corpus.sources[:int(oracle_config['n_sources'])]
        suite = OracleSuite(bundle.forward, bundle.backward, self.settings, self.logger)
        report = suite.run(sources)

        summary = {'command': 'oracle', 'passed': report.passed, 'checks': report.n_checks,
                   'mismatches': len(report.mismatches), 'first_mismatch': report.first_mismatch}
        if bundle.has_ar:
            instances = find_nonglobal_instances(sources, float(oracle_config['lam']),
                                                 int(self.settings['decode']['beam']),
                                                 int(oracle_config['max_target_len']),
                                                 bundle.ar_forward, bundle.ar_backward,
                                                 guard=int(oracle_config['guard']))
            summary['ar_nonglobal_instances'] = len(instances)
            if instances:
                first = instances[0]
                self.logger.info(f"自迴歸重排序非全域最佳案例 - x={list(first.source)}: "
                                 f"beam {list(first.beam_best)} ({first.beam_score:.4f}) < "
                                 f"窮舉 {list(first.global_best)} ({first.global_score:.4f})")

        path = self.report_generator.resolve(out, 'oracle.txt')
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"passed={str(report.passed).lower()}", f"checks={report.n_checks}",
                 f"mismatches={len(report.mismatches)}", *report.mismatches]
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        summary['report'] = str(path)
        return summary


def read_references(path) -> List[str]:
    """每行一句參考答案；語料格式（來源\\t目標）時取目標欄"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"參考答案不存在: {path}")
    lines = path.read_text(encoding='utf-8').splitlines()
    return [line.split('\t', 1)[1] if '\t' in line else line for line in lines]


class _ArgumentParser(argparse.ArgumentParser):
    """用法錯誤以結束碼 1 離開"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: 錯誤: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='nonar_mmi', description='非自迴歸 MMI 生成')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='配置文件（YAML 或 key=value）')
    common.add_argument('--checkpoint', help='模型檢查點；train 時代表續跑的訓練檢查點')
    common.add_argument('--mode', choices=DECODE_MODES, help='解碼模式')
    common.add_argument('--lambda', dest='lam', type=float, help='MMI 權重 λ ∈ [0, 1]')
    common.add_argument('--seed', type=int, help='訓練種子')
    common.add_argument('--workers', type=int, help='解碼並發數量')
    common.add_argument('--out', help='輸出路徑')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('train', parents=[common], help='訓練')
    commands.add_parser('decode', parents=[common], help='解碼')
    eval_parser = commands.add_parser('eval', parents=[common], help='評估')
    eval_parser.add_argument('--dump', help='解碼結果')
    eval_parser.add_argument('--references', help='參考答案')
    eval_parser.add_argument('--sweep', action='store_true', help='在 dev 上掃描 λ')
    eval_parser.add_argument('--table', action='store_true', help='產生系統比較表')
    commands.add_parser('oracle', parents=[common], help='窮舉驗證')
    return parser


def load_config(args: argparse.Namespace) -> Config:
    """配置文件、環境變數之後再套用命令列參數"""
    config = Config(args.config)
    config.update({
        'train.seed': args.seed,
        'decode.lam': args.lam,
        'decode.mode': args.mode,
        'performance.workers': args.workers,
    })
    return config


async def run_command(runner: NonARMMIRunner, args: argparse.Namespace) -> Tuple[int, Dict]:
    if args.command == 'train':
        return EXIT_OK, runner.train(args.checkpoint, args.out)
    if args.command == 'decode':
        return EXIT_OK, await runner.decode(args.checkpoint, args.out)
    if args.command == 'eval':
        if args.sweep or args.table:
            summary: Dict = {'command': 'eval'}
            lam = None
            if args.sweep:
                lam = await runner.sweep(args.checkpoint, None if args.table else args.out)
                summary['best_lambda'] = lam
            if args.table:
                summary.update(await runner.table(args.checkpoint, lam, args.out))
            return EXIT_OK, summary
        return EXIT_OK, runner.evaluate(args.dump, args.references, args.out)

    summary = runner.oracle(args.checkpoint, args.out)
    if not summary['passed']:
        print(f"驗證失敗，第一個不一致: {summary['first_mismatch']}", file=sys.stderr)
        return EXIT_ORACLE, summary
    return EXIT_OK, summary


def print_summary(summary: Dict):
    print("\n" + "=" * 60)
    print(f"nonar_mmi {summary.get('command', '')} 結果摘要")
    print("=" * 60)
    for key, value in summary.items():
        if key == 'command':
            continue
        if isinstance(value, dict):
            value = ', '.join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in value.items())
        elif isinstance(value, float):
            value = f"{value:.4f}"
        print(f"{key}: {value}")
    print("=" * 60)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主執行函數；回傳結束碼"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        runner = NonARMMIRunner(load_config(args))
        code, summary = asyncio.run(run_command(runner, args))
    except (ConfigError, OracleGuardError) as e:
        print(f"配置錯誤: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusParseError, CheckpointError, AlignmentError, ContractError, SequenceLengthError,
            TokenIndexError, OSError) as e:
        print(f"資料錯誤: {e}", file=sys.stderr)
        return EXIT_DATA
    print_summary(summary)
    return code


if __name__ == '__main__':
    sys.exit(main())

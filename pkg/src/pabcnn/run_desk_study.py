#!/usr/bin/env python3
"""
Estudo de bancada completo
Simula o corpus, treina as três perdas, prediz com MC dropout e compara
Hybrid x Lap x DAS e Laplace x Gauss
"""

import argparse
import json
import logging
import math
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
from tabulate import tabulate

from .cli import cmd_calibrate, cmd_predict, cmd_simulate, cmd_train, config_for_loss, load_config
from .config import RunConfig
from .errors import PABCNNError
from .evaluation import DAS_PSNR_COLUMN, EvaluationReport
from .losses import LossKind
from .utils.data_validators import DataSanitizer
from .utils.safe_print import SafeLogger, safe_print, setup_safe_logging

logger = SafeLogger(logging.getLogger(__name__))

MIN_SEG_ACCURACY = 0.90
MIN_POOLED_CC = 0.90
MAX_GAUSS_ACCURACY_GAP = 0.03
MAX_GAUSS_PSNR_GAP_DB = 1.5


def _column_mean(report: EvaluationReport, column: str) -> Optional[float]:
    if column not in report.per_image:
        return None
    values = [v for v in report.per_image[column] if v is not None and math.isfinite(v)]
    return float(np.mean(values)) if values else None


def summarize(report: EvaluationReport) -> Dict[str, Optional[float]]:
    """Médias por imagem e CC/inclinação agregados de um relatório"""
    return {
        'seg_accuracy': _column_mean(report, 'seg_accuracy'),
        'psnr': _column_mean(report, 'psnr'),
        'das_psnr_gt_peak': _column_mean(report, DAS_PSNR_COLUMN),
        'seg_cc': _column_mean(report, 'seg_cc'),
        'coverage': _column_mean(report, 'coverage'),
        'pooled_cc': report.pooled.cc if report.pooled else None,
        'pooled_slope': report.pooled.slope if report.pooled else None,
    }


def check_gates(results: Dict[str, Dict[str, Optional[float]]]) -> Dict[str, bool]:
    """Critérios de aceitação da escala de bancada"""
    hybrid = results[LossKind.HYBRID_LAPLACE.value]
    lap = results[LossKind.LAPLACE_ONLY.value]
    gauss = results[LossKind.HYBRID_GAUSS.value]

    def gt(a, b):
        return a is not None and b is not None and a > b

    def close(a, b, tol):
        return a is not None and b is not None and abs(a - b) <= tol

    return {
        'hybrid_seg_accuracy': gt(hybrid['seg_accuracy'], MIN_SEG_ACCURACY),
        'hybrid_psnr_above_lap': gt(hybrid['psnr'], lap['psnr']),
        'hybrid_psnr_above_das': gt(hybrid['psnr'], hybrid['das_psnr_gt_peak']),
        'hybrid_pooled_cc': hybrid['pooled_cc'] is not None and hybrid['pooled_cc'] >= MIN_POOLED_CC,
        'gauss_accuracy_close': close(gauss['seg_accuracy'], hybrid['seg_accuracy'], MAX_GAUSS_ACCURACY_GAP),
        'gauss_psnr_close': close(gauss['psnr'], hybrid['psnr'], MAX_GAUSS_PSNR_GAP_DB),
    }


def run_study(config: RunConfig, output_dir: str, jobs: int = 1, progress: bool = True,
              kinds: Sequence[LossKind] = tuple(LossKind)) -> Dict:
    """
    Executa o estudo e devolve as estatísticas

    Args:
        config: Configuração base (a cabeça é ajustada por perda)
        output_dir: Diretório raiz dos artefatos
        jobs: Processos para simulação e predição
        kinds: Perdas a treinar
    """
    print("\n" + "=" * 80)
    print("                     PA-BCNN - ESTUDO DE BANCADA")
    print("=" * 80)

    started = datetime.now()
    root = Path(output_dir)
    dataset = root / 'dataset'

    print(f"\n[1] Simulando {config.simulation.n_images} imagens...")
    cmd_simulate(config, dataset, jobs=jobs, progress=progress)

    results: Dict[str, Dict[str, Optional[float]]] = {}
    for step, kind in enumerate(kinds, 2):
        print(f"\n[{step}] {kind.value}: treino, predição e calibração")
        print("-" * 60)
        kind_config = config_for_loss(config, kind)
        ckpt_path = root / 'checkpoints' / f"{kind.value}.tnsr"
        training = cmd_train(kind_config, dataset, ckpt_path, progress=progress)
        posteriors = root / 'posteriors' / kind.value
        cmd_predict(kind_config, ckpt_path, dataset, posteriors, jobs=jobs, progress=progress)
        report = cmd_calibrate(kind_config, posteriors, dataset, root / 'reports' / f"{kind.value}.json",
                               progress=progress)
        results[kind.value] = {**summarize(report), 'best_epoch': training.checkpoint.epoch,
                               'stopped_epoch': training.stopped_epoch}
        safe_print(f"  ✓ melhor época {training.checkpoint.epoch}, PSNR {results[kind.value]['psnr']}")

    stats: Dict = {'results': results, 'config': config.model_dump(mode='json')}
    if len(results) == len(LossKind):
        stats['gates'] = check_gates(results)
    stats['execution_time'] = (datetime.now() - started).total_seconds()

    stats_file = root / f"desk_study_{started.strftime('%Y%m%d_%H%M%S')}.json"
    stats_file.parent.mkdir(parents=True, exist_ok=True)
    with open(stats_file, 'w', encoding='utf-8') as f:
        json.dump(DataSanitizer.json_safe(stats), f, indent=2, ensure_ascii=False)

    print("\n" + "=" * 80)
    print("                           COMPARAÇÃO")
    print("=" * 80)
    rows = [[kind, r['seg_accuracy'], r['psnr'], r['das_psnr_gt_peak'], r['pooled_cc'], r['pooled_slope'],
             r['coverage']]
            for kind, r in results.items()]
    print(tabulate(rows, headers=['Perda', 'Acurácia seg.', 'PSNR (dB)', 'DAS PSNR pico GT (dB)',
                                  'CC', 'Inclinação', 'Cobertura 2 sigma'],
                   floatfmt='.4f', missingval='-'))

    for gate, passed in stats.get('gates', {}).items():
        safe_print(f"  {'✓' if passed else '✗'} {gate}")
    print(f"\nEstatísticas salvas em: {stats_file}")
    print("=" * 80)
    return stats


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Função principal"""
    parser = argparse.ArgumentParser(description='Estudo de bancada do pa-bcnn')
    parser.add_argument('--config', '-c', help='Configuração JSON (padrão: escala de bancada)')
    parser.add_argument('--seed', type=int, help='Substitui todos os seeds')
    parser.add_argument('--jobs', '-j', type=int, default=1, help='Processos (padrão: 1)')
    parser.add_argument('--output-dir', '-o', default='outputs/desk_study',
                        help='Diretório de saída (padrão: outputs/desk_study)')
    parser.add_argument('--log-level', default='INFO')
    parser.add_argument('--quiet', '-q', action='store_true', help='Sem barras de progresso')
    args = parser.parse_args(argv)
    setup_safe_logging(args.log_level)

    try:
        config = load_config(args.config, args.seed)
        stats = run_study(config, args.output_dir, jobs=args.jobs, progress=not args.quiet)
    except PABCNNError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2
    except Exception as e:
        safe_print(f"\n✗ ERRO FATAL: {e}")
        logger.error(f"Erro no estudo de bancada: {e}", exc_info=True)
        return 1
    return 0 if all(stats.get('gates', {}).values()) else 1


if __name__ == "__main__":
    sys.exit(main())

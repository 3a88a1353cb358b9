#!/usr/bin/env python3
"""
Interface de linha de comando do pa-bcnn

Verbos: simulate, beamform, ingest, train, predict, calibrate, confidence, gradcheck.
Cada verbo tem uma função cmd_* correspondente, usável também como API.
"""

import argparse
import functools
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from tabulate import tabulate

from .confidence import ConfidenceParams, confident_image, confident_segmentation, threshold_sweep
from .config import RunConfig
from .errors import EmptyEvaluationError, PABCNNError, StorageError
from .evaluation import CorpusEvaluator, EvaluationReport, ImageEvaluation
from .losses import LossKind
from .nn.gradcheck import GradientCheckReport, gradient_check
from .nn.training import TrainingResult, train
from .nn.unet import Checkpoint, HeadKind, build_network
from .parallel import WorkerPool
from .simulation.acoustics import (
    ArrayGeometry,
    MCVolume,
    RawChannelData,
    das_reconstruct,
    ingest_raw,
    mc_transform,
    simulate_measurement,
)
from .simulation.phantom import GridSpec, generate_phantom, split_indices
from .storage.bundles import load_posterior, save_posterior
from .storage.checkpoints import load_checkpoint, save_checkpoint
from .storage.datasets import DatasetStore
from .storage.rendering import write_pgm
from .storage.tnsr import read_tnsr, write_tnsr
from .uncertainty import aggregate, predict_mc
from .utils.data_validators import DataSanitizer
from .utils.safe_print import SafeLogger, safe_print, setup_safe_logging

logger = SafeLogger(logging.getLogger(__name__))

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def config_for_loss(config: RunConfig, loss_kind: Union[LossKind, str]) -> RunConfig:
    """Cópia com perda de treino e cabeça da rede coerentes"""
    kind = LossKind(loss_kind)
    head = HeadKind.HYBRID if kind.is_hybrid else HeadKind.LAPLACIAN_ONLY
    return config.model_copy(update={
        'net': config.net.model_copy(update={'head_kind': head}),
        'train': config.train.model_copy(update={'loss_kind': kind}),
    })


def _write_json(path: Path, document: Dict) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(DataSanitizer.json_safe(document), indent=2, ensure_ascii=False,
                                   allow_nan=False), encoding='utf-8')
    except OSError as e:
        raise StorageError(f"Falha ao gravar JSON ({e.strerror or e})", str(path)) from e
    return path


# ============================================================================
# simulate
# ============================================================================

def measurement_seed(seed: int, index: int) -> int:
    """Seed do ruído/SNR do item `index`, independente do seed do phantom"""
    return int(np.random.SeedSequence([seed, index, 1]).generate_state(1, np.uint64)[0])


def _simulate_item(task: Tuple[int, RunConfig, str]) -> Tuple[float, float]:
    index, config, root = task
    store = DatasetStore(root)
    phantom = generate_phantom(config.grid, config.phantom, config.simulation.seed + index)
    raw, mc, snr_db = simulate_measurement(phantom, config.grid, config.geometry,
                                           config.simulation.snr_range,
                                           measurement_seed(config.simulation.seed, index))
    store.write_phantom(index, phantom)
    store.write_measurement(index, raw, mc, snr_db)
    return snr_db, phantom.fraction


def cmd_simulate(config: RunConfig, out_dir: Union[str, Path], jobs: int = 1,
                 progress: bool = False) -> DatasetStore:
    """
    Gera phantoms, dados brutos, volumes MC e o manifest

    Raises:
        DatasetSizeError: n_images < 10
        PhantomParamsError / GeometryMismatchError: configuração incoerente
        StorageError: falha de disco
    """
    config.check()
    sim = config.simulation
    train_idx, val_idx, test_idx = split_indices(sim.n_images, sim.seed)
    root = str(Path(out_dir))

    pool = WorkerPool(jobs, progress=progress)
    results = pool.map(_simulate_item, [(i, config, root) for i in range(sim.n_images)], desc='Simulação')
    snr = [r[0] for r in results]
    fractions = np.array([r[1] for r in results])

    store = DatasetStore(root)
    store.write_manifest({
        'n': sim.n_images,
        'seed': sim.seed,
        'grid': config.grid.model_dump(mode='json'),
        'geometry': config.geometry.model_dump(mode='json'),
        'phantom': config.phantom.model_dump(mode='json'),
        'simulation': sim.model_dump(mode='json'),
        'splits': {'train': train_idx, 'val': val_idx, 'test': test_idx},
        'snr_db': snr,
        'fractions': fractions,
        'fraction_mean': float(fractions.mean()),
    })
    logger.info(f"Simulação concluída: {sim.n_images} itens em {root} "
                f"(fração média {fractions.mean():.4f})")
    return store


# ============================================================================
# beamform / ingest
# ============================================================================

def _load_raw_array(path: Path) -> np.ndarray:
    if path.suffix == '.npy':
        try:
            return np.load(path)
        except OSError as e:
            raise StorageError(f"Falha ao ler .npy ({e})", str(path)) from e
    return read_tnsr(path).single


def _write_volume(out_dir: Path, mc: MCVolume, meta: Optional[Dict] = None) -> Dict[str, Path]:
    das = das_reconstruct(mc)
    return {
        'mc': write_tnsr(out_dir / 'mc.tnsr', mc.channels, meta),
        'das': write_tnsr(out_dir / 'das.tnsr', das.values, meta),
        'das_pgm': write_pgm(out_dir / 'das.pgm', das.values),
    }


def cmd_beamform(config: RunConfig, raw_path: Union[str, Path], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Dados brutos (elementos x amostras, TNSR ou .npy) -> volume MC, DAS e renderização"""
    raw = RawChannelData(traces=_load_raw_array(Path(raw_path)).astype(np.float64), geometry=config.geometry)
    mc = mc_transform(raw, config.grid, config.geometry)
    return _write_volume(Path(out_dir), mc, {'source': str(raw_path)})


def cmd_ingest(config: RunConfig, raw_path: Union[str, Path], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Dados experimentais amostras x elementos x fibras -> raw promediado, volume MC e DAS"""
    raw = ingest_raw(_load_raw_array(Path(raw_path)), config.geometry)
    mc = mc_transform(raw, config.grid, config.geometry)
    out_dir = Path(out_dir)
    paths = _write_volume(out_dir, mc, {'source': str(raw_path), 'ingested': True})
    paths['raw'] = write_tnsr(out_dir / 'raw.tnsr', raw.traces, {'source': str(raw_path)})
    return paths


# ============================================================================
# train
# ============================================================================

def cmd_train(config: RunConfig, dataset_dir: Union[str, Path], out_ckpt: Union[str, Path],
              progress: bool = False) -> TrainingResult:
    """
    Treina no dataset e grava o melhor checkpoint e o log de épocas (CSV)

    Raises:
        GeometryMismatchError: grade/geometria do dataset diferem da configuração
        ConfigMismatchError: perda incompatível com a cabeça da rede
    """
    store = DatasetStore(dataset_dir)
    store.check_compatible(config.grid, config.geometry)
    data = store.training_data(progress=progress)

    ckpt = build_network(config.net, config.geometry.n_elem, config.grid.shape, seed=config.train.seed)
    result = train(ckpt, data, config.train.loss_kind, config.train, progress=progress)

    out_ckpt = Path(out_ckpt)
    save_checkpoint(out_ckpt, result.checkpoint)
    log_path = out_ckpt.with_suffix('.csv')
    try:
        result.history.to_csv(log_path, index=False)
    except OSError as e:
        raise StorageError(f"Falha ao gravar log de treino ({e.strerror or e})", str(log_path)) from e
    logger.info(f"Treino concluído: melhor época {result.checkpoint.epoch}, log em {log_path}")
    return result


# ============================================================================
# predict
# ============================================================================

@functools.lru_cache(maxsize=4)
def _cached_checkpoint(path: str) -> Checkpoint:
    return load_checkpoint(path)


def _predict_item(task: Tuple[str, str, str, Dict, int, int, str, GridSpec, ArrayGeometry, LossKind]) -> str:
    ckpt_path, source, name, meta, passes, seed, out_dir, grid, geometry, loss_kind = task
    ckpt = _cached_checkpoint(ckpt_path)
    channels = read_tnsr(source).single.astype(np.float64)
    mc = MCVolume(channels=channels, geometry=geometry, spec=grid)
    stack = predict_mc(ckpt, mc, passes, seed, expected_kind=loss_kind)
    posterior = aggregate(stack, loss_kind)
    path = save_posterior(Path(out_dir) / f"{name}.tnsr", posterior, stack,
                          {'source': source, 'seed': seed, **meta})
    return str(path)


def _is_mc_volume(path: Path) -> bool:
    """Arquivo de mapa único com três eixos (canais, z, x)"""
    content = read_tnsr(path)
    if len(content.maps) == 1 and content.single.ndim == 3:
        return True
    logger.debug(f"Ignorando {path.name}: não é um volume MC")
    return False


def _prediction_inputs(source: Path) -> List[Tuple[str, str, Dict]]:
    """(arquivo MC, nome, meta) para um dataset (partição de teste), diretório ou arquivo"""
    if (source / 'manifest.json').exists():
        store = DatasetStore(source)
        return [(str(store.mc_path(int(i))), f"{int(i):05d}",
                 {'dataset': str(source.resolve()), 'dataset_index': int(i)})
                for i in sorted(store.split('test'))]
    if source.is_dir():
        files = [f for f in sorted(source.glob('*.tnsr')) if _is_mc_volume(f)]
        return [(str(f), f.stem, {}) for f in files]
    if source.exists():
        return [(str(source), source.stem, {})]
    raise StorageError("Entrada de predição inexistente", str(source))


def cmd_predict(config: RunConfig, ckpt_path: Union[str, Path], source: Union[str, Path],
                out_dir: Union[str, Path], passes: Optional[int] = None, seed: Optional[int] = None,
                jobs: int = 1, progress: bool = False) -> List[Path]:
    """
    Um bundle de posterior por volume MC de entrada

    Todas as entradas usam o mesmo seed base; o resultado não depende da
    ordem de execução.

    Raises:
        ShapeMismatchError: volume incompatível com o checkpoint
        ConfigMismatchError: checkpoint treinado com perda diferente de train.loss_kind
        EmptyEvaluationError: nenhuma entrada encontrada
    """
    passes = passes or config.predict.passes
    seed = config.predict.seed if seed is None else seed
    inputs = _prediction_inputs(Path(source))
    if not inputs:
        raise EmptyEvaluationError(f"Nenhum volume MC em {source}")

    ckpt_path = str(Path(ckpt_path).resolve())
    _cached_checkpoint(ckpt_path)
    tasks = [(ckpt_path, src, name, meta, passes, seed, str(out_dir), config.grid, config.geometry,
              config.train.loss_kind)
             for src, name, meta in inputs]
    pool = WorkerPool(jobs, progress=progress)
    paths = [Path(p) for p in pool.map(_predict_item, tasks, desc='Predição MC')]
    logger.info(f"Predição: {len(paths)} bundles com K={passes} em {out_dir}")
    return paths


# ============================================================================
# calibrate
# ============================================================================

def _evaluation_items(posterior_dir: Path, dataset_dir: Optional[Path]) -> List[ImageEvaluation]:
    bundles = sorted(posterior_dir.glob('*.tnsr'))
    if not bundles:
        raise EmptyEvaluationError(f"Nenhum bundle de posterior em {posterior_dir}")

    store = DatasetStore(dataset_dir) if dataset_dir is not None else None
    items = []
    for path in bundles:
        posterior, stack, meta = load_posterior(path)
        phantom = mc = None
        index = meta.get('dataset_index')
        if store is not None and index is not None:
            phantom = store.read_phantom(int(index))
            mc = store.read_mc(int(index))
        items.append(ImageEvaluation(name=path.stem, posterior=posterior, stack=stack, phantom=phantom, mc=mc))
    return items


def cmd_calibrate(config: RunConfig, posterior_dir: Union[str, Path], dataset_dir: Optional[Union[str, Path]],
                  out_report: Union[str, Path], progress: bool = False) -> EvaluationReport:
    """
    Relatório JSON com métricas por imagem e agregadas, mais CSVs auxiliares

    Sem ground truth o relatório traz só resumos de incerteza e a flag
    ground_truth_available = false.

    Raises:
        EmptyEvaluationError: diretório sem bundles
    """
    items = _evaluation_items(Path(posterior_dir), Path(dataset_dir) if dataset_dir else None)
    evaluator = CorpusEvaluator(config.calibration)
    report = evaluator.review_corpus(items, progress=progress)

    out_report = Path(out_report)
    document = report.to_dict()
    document['stats'] = evaluator.stats
    _write_json(out_report, document)
    try:
        report.per_image.to_csv(out_report.with_name(out_report.stem + '_per_image.csv'), index=False)
        if report.pooled is not None:
            report.pooled.to_frame().to_csv(out_report.with_name(out_report.stem + '_reliability.csv'),
                                            index=False)
    except OSError as e:
        raise StorageError(f"Falha ao gravar CSV ({e.strerror or e})", str(out_report.parent)) from e

    if report.summary:
        rows = [[name, value if value is not None else 'indefinido'] for name, value in report.summary.items()]
        logger.info("Resumo de calibração:\n" + tabulate(rows, headers=['Métrica', 'Média (desvio)']))
    return report


# ============================================================================
# confidence
# ============================================================================

def cmd_confidence(config: RunConfig, bundle_path: Union[str, Path], out_dir: Union[str, Path],
                   thresholds: Optional[Sequence[float]] = None, sweep: bool = False) -> Dict[str, Path]:
    """
    Segmentação e imagem confiáveis (TNSR + PGM em 50 dB)

    Com sweep, uma imagem por limiar (padrão: params.sweep_thresholds).
    As renderizações usam o pico da imagem média mascarada.
    """
    posterior, _, _ = load_posterior(bundle_path)
    params: ConfidenceParams = config.confidence
    out_dir = Path(out_dir)
    peak = float(np.max(np.abs(posterior.masked_img_mean))) or None

    conf_seg = confident_segmentation(posterior, params)
    conf_img = confident_image(posterior, conf_seg, params)
    paths = {
        'confidence': write_tnsr(out_dir / 'confidence.tnsr',
                                 {'conf_seg': conf_seg, 'conf_image': conf_img, 'masked_mean': posterior.masked_img_mean},
                                 {'params': params.model_dump(mode='json')}),
        'conf_image_pgm': write_pgm(out_dir / 'conf_image.pgm', conf_img, peak),
        'masked_mean_pgm': write_pgm(out_dir / 'masked_mean.pgm', posterior.masked_img_mean, peak),
    }

    if sweep or thresholds:
        levels = list(thresholds) if thresholds else list(params.sweep_thresholds)
        images = threshold_sweep(posterior, params, levels)
        maps = {f"threshold_{t:g}": img for t, img in zip(levels, images)}
        paths['sweep'] = write_tnsr(out_dir / 'sweep.tnsr', maps, {'thresholds': levels})
        for t, img in zip(levels, images):
            paths[f'sweep_{t:g}'] = write_pgm(out_dir / f"sweep_{t:g}.pgm", img, peak)
    logger.info(f"Confiança: {int(conf_seg.sum())} pixels confiáveis, saídas em {out_dir}")
    return paths


# ============================================================================
# gradcheck
# ============================================================================

def cmd_gradcheck(config: RunConfig, tolerance: float = 1e-4, seed: int = 0) -> List[GradientCheckReport]:
    """Checagem de gradientes das três perdas numa rede depth 1 com 2 canais base"""
    tiny = config.net.model_copy(update={'depth': 1, 'base_channels': 2, 'dtype': 'float64'})
    reports = []
    for kind in LossKind:
        started = time.perf_counter()
        report = gradient_check(tiny, kind, tolerance=tolerance, seed=seed)
        reports.append(report)
        rows = [[layer, f"{err:.2e}"] for layer, err in report.by_layer().items()]
        status = '✓' if report.passed else '✗'
        logger.info(f"{status} {kind.value}: máx {report.max_rel_error:.2e} em "
                    f"{time.perf_counter() - started:.1f}s\n" + tabulate(rows, headers=['Camada', 'Erro relativo']))
    return reports


# ============================================================================
# main
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pabcnn',
        description='Reconstrução fotoacústica com U-Net bayesiana e quantificação de incerteza'
    )
    parser.add_argument('--config', '-c', help='Arquivo JSON de configuração (padrão: escala de bancada)')
    parser.add_argument('--seed', type=int, help='Substitui todos os seeds da configuração')
    parser.add_argument('--jobs', '-j', type=int, default=1, help='Processos para trabalho por imagem (padrão: 1)')
    parser.add_argument('--log-level', default='INFO', help='Nível de log (padrão: INFO)')
    parser.add_argument('--log-file', help='Arquivo de log adicional')
    parser.add_argument('--quiet', '-q', action='store_true', help='Sem barras de progresso')

    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='Gera dataset simulado')
    p.add_argument('--out', '-o', help='Diretório do dataset (padrão: paths.dataset)')

    p = sub.add_parser('beamform', help='Dados brutos -> volume MC e DAS')
    p.add_argument('raw', help='Arquivo TNSR ou .npy elementos x amostras')
    p.add_argument('--out', '-o', required=True, help='Diretório de saída')

    p = sub.add_parser('ingest', help='Dados experimentais amostras x elementos x fibras')
    p.add_argument('raw', help='Arquivo TNSR ou .npy')
    p.add_argument('--out', '-o', required=True, help='Diretório de saída')

    p = sub.add_parser('train', help='Treina uma rede')
    p.add_argument('--dataset', '-d', help='Diretório do dataset (padrão: paths.dataset)')
    p.add_argument('--loss', choices=[k.value for k in LossKind], help='Perda (ajusta a cabeça da rede)')
    p.add_argument('--out', '-o', help='Checkpoint de saída (padrão: paths.checkpoints/<perda>.tnsr)')

    p = sub.add_parser('predict', help='Predição MC dropout')
    p.add_argument('checkpoint', help='Checkpoint TNSR')
    p.add_argument('input', help='Dataset, diretório de volumes MC ou arquivo')
    p.add_argument('--loss', choices=[k.value for k in LossKind], help='Perda do checkpoint (padrão: train.loss_kind)')
    p.add_argument('--passes', '-k', type=int, help='Número de passes K (padrão: predict.passes)')
    p.add_argument('--out', '-o', help='Diretório de bundles (padrão: paths.posteriors)')

    p = sub.add_parser('calibrate', help='Relatório de calibração e métricas')
    p.add_argument('posteriors', help='Diretório de bundles')
    p.add_argument('--dataset', '-d', help='Dataset com ground truth')
    p.add_argument('--out', '-o', help='Relatório JSON (padrão: paths.reports/calibration.json)')

    p = sub.add_parser('confidence', help='Processamento de confiança')
    p.add_argument('bundle', help='Bundle de posterior')
    p.add_argument('--out', '-o', required=True, help='Diretório de saída')
    p.add_argument('--sweep', action='store_true', help='Varre os limiares de confidence.sweep_thresholds')
    p.add_argument('--thresholds', type=float, nargs='+', help='Limiares da varredura (decrescentes)')

    p = sub.add_parser('gradcheck', help='Checagem de gradientes por diferenças finitas')
    p.add_argument('--tolerance', type=float, default=1e-4, help='Erro relativo máximo (padrão: 1e-4)')

    return parser


def load_config(path: Optional[str], seed: Optional[int]) -> RunConfig:
    config = RunConfig.load(path) if path else RunConfig()
    return config.with_seed(seed) if seed is not None else config


def run(args: argparse.Namespace) -> int:
    """Despacha o verbo; devolve o status de saída"""
    config = load_config(args.config, args.seed)
    progress = not args.quiet
    paths = config.paths

    if args.command == 'simulate':
        cmd_simulate(config, args.out or paths.dataset, jobs=args.jobs, progress=progress)
    elif args.command == 'beamform':
        cmd_beamform(config, args.raw, args.out)
    elif args.command == 'ingest':
        cmd_ingest(config, args.raw, args.out)
    elif args.command == 'train':
        if args.loss:
            config = config_for_loss(config, args.loss)
        out = args.out or str(Path(paths.checkpoints) / f"{config.train.loss_kind.value}.tnsr")
        cmd_train(config, args.dataset or paths.dataset, out, progress=progress)
    elif args.command == 'predict':
        if args.loss:
            config = config_for_loss(config, args.loss)
        cmd_predict(config, args.checkpoint, args.input, args.out or paths.posteriors,
                    passes=args.passes, jobs=args.jobs, progress=progress)
    elif args.command == 'calibrate':
        out = args.out or str(Path(paths.reports) / 'calibration.json')
        cmd_calibrate(config, args.posteriors, args.dataset, out, progress=progress)
    elif args.command == 'confidence':
        cmd_confidence(config, args.bundle, args.out, thresholds=args.thresholds, sweep=args.sweep)
    elif args.command == 'gradcheck':
        reports = cmd_gradcheck(config, tolerance=args.tolerance, seed=config.train.seed)
        if not all(r.passed for r in reports):
            safe_print("✗ Checagem de gradiente falhou")
            return EXIT_FAILURE
        safe_print("✓ Gradientes conferem nas três perdas")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Função principal"""
    args = build_parser().parse_args(argv)
    setup_safe_logging(args.log_level, args.log_file)

    try:
        status = run(args)
    except (PABCNNError, ValidationError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        status = EXIT_USAGE
    except Exception as e:
        logger.error(f"Erro inesperado em {args.command}: {e}", exc_info=True)
        status = EXIT_FAILURE
    return status


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
Avaliação de corpus - relatório de calibração e métricas por imagem
Agrega PSNR, acurácia de segmentação, CC de incerteza, confiabilidade e cobertura
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .calibration import (
    CalibrationConfig,
    CredibilityMap,
    ReliabilityDiagram,
    coverage_report,
    credibility_map,
    evaluation_mask,
    per_image_reliability,
    pooled_reliability,
    psnr,
    reliability_diagram,
    seg_accuracy,
    seg_uncertainty_cc,
    summarize_metrics,
)
from .errors import EmptyEvaluationError, MissingGroundTruthError
from .simulation.acoustics import MCVolume, das_display, das_reconstruct
from .simulation.phantom import Phantom
from .uncertainty import Posterior, SampleStack
from .utils.data_validators import DataSanitizer

logger = logging.getLogger(__name__)

# O DAS é reescalado ao pico do ground truth antes do PSNR
DAS_PSNR_COLUMN = 'das_psnr_gt_peak'
DAS_SCALING = 'ground_truth_peak'


@dataclass
class ImageEvaluation:
    """Entrada de um item do corpus"""
    name: str
    posterior: Posterior
    stack: Optional[SampleStack] = None
    phantom: Optional[Phantom] = None
    mc: Optional[MCVolume] = None


@dataclass
class EvaluationReport:
    """Relatório de calibração do corpus"""
    per_image: pd.DataFrame
    summary: Dict[str, Optional[str]]
    pooled: Optional[ReliabilityDiagram]
    per_image_reliability: Dict[str, Any]
    ground_truth_available: bool
    peak: Optional[float]
    issues: List[str] = field(default_factory=list)
    timestamp: datetime = field(default_factory=datetime.now)

    def to_dict(self) -> Dict:
        return DataSanitizer.json_safe({
            'ground_truth_available': self.ground_truth_available,
            'peak': self.peak,
            'das_scaling': DAS_SCALING,
            'summary': self.summary,
            'pooled_reliability': self.pooled.to_dict() if self.pooled else None,
            'per_image_reliability': self.per_image_reliability,
            'per_image': self.per_image.to_dict(orient='records'),
            'issues': self.issues,
            'timestamp': self.timestamp.isoformat(),
        })


class CorpusEvaluator:
    """
    Avalia posteriors contra as referências simuladas

    Sem ground truth, o relatório fica restrito a resumos de incerteza e
    `ground_truth_available` é False.
    """

    def __init__(self, config: CalibrationConfig = CalibrationConfig()):
        self.config = config
        self.stats = {
            'images': 0,
            'evaluated_pixels': 0,
            'excluded_pixels': 0,
            'undefined_fits': 0,
        }

    def _uncertainty_summary(self, item: ImageEvaluation) -> Dict[str, Any]:
        posterior = item.posterior
        mask = evaluation_mask(posterior)
        record: Dict[str, Any] = {
            'name': item.name,
            'evaluated': int(mask.sum()),
            'img_unc_mean': float(posterior.img_unc[mask].mean()) if mask.any() else None,
            'img_model_mean': float(posterior.img_model[mask].mean()) if mask.any() else None,
        }
        if posterior.has_segmentation:
            record['seg_unc_mean'] = float(posterior.seg_unc.mean())
            record['seg_fraction'] = float(posterior.final_seg.mean())
        return record

    def review_image(self, item: ImageEvaluation, peak: float):
        """
        Métricas de uma imagem

        Returns:
            (registro, CredibilityMap ou None, ReliabilityDiagram ou None, issues)

        Raises:
            MissingGroundTruthError: item sem phantom
        """
        if item.phantom is None:
            raise MissingGroundTruthError(f"{item.name}: sem ground truth")
        posterior, truth = item.posterior, item.phantom
        record = self._uncertainty_summary(item)
        issues: List[str] = []

        record['psnr'] = psnr(posterior.masked_img_mean, truth.image, peak)
        if item.mc is not None:
            das = das_display(das_reconstruct(item.mc), float(truth.image.max()))
            record[DAS_PSNR_COLUMN] = psnr(das, truth.image, peak)

        if posterior.has_segmentation:
            record['seg_accuracy'] = seg_accuracy(posterior.final_seg, truth.segmentation)
            record['seg_cc'] = seg_uncertainty_cc(posterior.seg_unc, posterior.final_seg, truth.segmentation)

        cred: Optional[CredibilityMap] = None
        diagram: Optional[ReliabilityDiagram] = None
        record.update({'cc': None, 'slope': None, 'coverage': None, 'coverage_band': None})
        try:
            coverage = coverage_report(posterior, truth.image)
            record['coverage'] = coverage.overall
            record['coverage_band'] = coverage.band
        except EmptyEvaluationError:
            issues.append(f"{item.name}: segmentação final vazia")

        if item.stack is not None and record['coverage'] is not None:
            cred = credibility_map(item.stack, posterior, self.config.eps_factor)
            self.stats['excluded_pixels'] += cred.excluded_count
            self.stats['evaluated_pixels'] += cred.evaluated_count
            record['excluded'] = cred.excluded_count
            if cred.evaluated_count:
                diagram = reliability_diagram(cred, posterior, truth.image, self.config.bins)
                record['cc'], record['slope'] = diagram.cc, diagram.slope
                if diagram.cc is None:
                    self.stats['undefined_fits'] += 1
        elif item.stack is None:
            issues.append(f"{item.name}: bundle sem stack MC, credibilidade não avaliada")

        return record, cred, diagram, issues

    def review_corpus(self, items: List[ImageEvaluation], progress: bool = False) -> EvaluationReport:
        """
        Avalia o corpus inteiro

        O pico do PSNR é o maior valor de ground truth do corpus avaliado.

        Raises:
            EmptyEvaluationError: lista vazia
        """
        if not items:
            raise EmptyEvaluationError("Nenhum posterior para avaliar")
        self.stats['images'] += len(items)

        if any(item.phantom is None for item in items):
            logger.warning("Ground truth ausente: relatório restrito a resumos de incerteza")
            frame = pd.DataFrame([self._uncertainty_summary(item) for item in items])
            return EvaluationReport(per_image=frame, summary={}, pooled=None, per_image_reliability={},
                                    ground_truth_available=False, peak=None,
                                    issues=['ground truth ausente'])

        peak = max(float(item.phantom.image.max()) for item in items)
        iterator = items
        if progress:
            from tqdm import tqdm
            iterator = tqdm(items, desc='Avaliação', unit='img')

        records, issues, pooled_items, diagrams = [], [], [], []
        for item in iterator:
            record, cred, diagram, item_issues = self.review_image(item, peak)
            records.append(record)
            issues.extend(item_issues)
            if cred is not None and cred.evaluated_count:
                pooled_items.append((cred, item.posterior, item.phantom.image))
                diagrams.append(diagram)

        frame = pd.DataFrame(records)
        pooled = None
        if self.config.pooled and pooled_items:
            pooled = pooled_reliability(pooled_items, self.config.bins)
        summary = summarize_metrics(frame, pooled)
        per_image = per_image_reliability(diagrams)

        finite_psnr = [v for v in frame['psnr'] if math.isfinite(v)]
        logger.info(f"Avaliação: {len(items)} imagens, PSNR médio "
                    f"{np.mean(finite_psnr) if finite_psnr else float('inf'):.2f} dB, "
                    f"{self.stats['excluded_pixels']} pixels excluídos")
        return EvaluationReport(per_image=frame, summary=summary, pooled=pooled,
                                per_image_reliability=per_image, ground_truth_available=True,
                                peak=peak, issues=issues)

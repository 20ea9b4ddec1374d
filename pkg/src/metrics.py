"""
Métricas de ranking e classificação: ROC AUC, AUC parcial padronizada na
faixa de baixo FPR e F1.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config import FPR_MAX_PADRAO
from src.errors import ConfigError, ContractError, NumericError, UndefinedMetricError

logger = logging.getLogger(__name__)


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> Dict[str, int]:
        return dict(self._asdict())


@dataclass
class MetricReport:
    """Resultado da avaliação de um modelo numa partição."""

    auc: float
    pauc_raw: float
    pauc_standardized: float
    f1: float
    threshold: float
    confusion: Confusion
    n_pos: int
    n_neg: int
    fpr_max: float = FPR_MAX_PADRAO

    def __post_init__(self):
        tp, fp, tn, fn = self.confusion
        if tp + fn != self.n_pos or fp + tn != self.n_neg:
            raise ContractError(f"Matriz de confusão {self.confusion} incoerente com {self.n_pos}/{self.n_neg}")

    def to_dict(self) -> Dict:
        dados = asdict(self)
        dados["confusion"] = Confusion(*self.confusion).to_dict()
        return dados

    @classmethod
    def from_dict(cls, dados: Dict) -> "MetricReport":
        dados = dict(dados)
        dados["confusion"] = Confusion(**dados["confusion"])
        return cls(**dados)


def _preparar(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ContractError(f"scores ({s.size}) e labels ({y.size}) com tamanhos diferentes")
    if s.size == 0:
        raise ContractError("Entrada vazia")
    if np.isnan(s).any():
        raise NumericError("Scores com NaN")
    if not np.isin(y, (0, 1)).all():
        raise ContractError(f"Rótulos devem estar em {{0, 1}}: {np.unique(y)}")
    return s, y.astype(np.int64)


def _exigir_duas_classes(y: np.ndarray):
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError(
            f"AUC indefinida: {n_pos} positivos e {y.size - n_pos} negativos"
        )


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    ROC AUC pela estatística de Mann–Whitney.

    Postos médios tratam empates como meio par.

    Args:
        scores: Score de cada amostra (maior = mais positivo).
        labels: Rótulos 0/1.

    Returns:
        AUC em [0, 1].
    """
    s, y = _preparar(scores, labels)
    _exigir_duas_classes(y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    postos = pd.Series(s).rank(method="average").to_numpy()
    u = postos[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Curva ROC empírica, um vértice por score distinto (de (0,0) a (1,1)).

    Returns:
        (fpr, tpr, thresholds), com thresholds[0] = +inf.
    """
    s, y = _preparar(scores, labels)
    _exigir_duas_classes(y)
    ordem = np.argsort(-s, kind="mergesort")
    s_ord, y_ord = s[ordem], y[ordem]
    # último índice de cada bloco de scores iguais
    fim_bloco = np.r_[np.flatnonzero(np.diff(s_ord) != 0), s_ord.size - 1]
    tp = np.cumsum(y_ord)[fim_bloco]
    fp = (fim_bloco + 1) - tp
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (y.size - y.sum())]
    return fpr, tpr, np.r_[np.inf, s_ord[fim_bloco]]


def partial_auc(scores: Sequence[float], labels: Sequence[int],
                fpr_max: float = FPR_MAX_PADRAO) -> Tuple[float, float]:
    """
    Área sob a ROC restrita a FPR ∈ [0, fpr_max].

    A curva é interpolada linearmente no corte. A versão padronizada usa a
    correção de McClish, ½(1 + (raw − min)/(max − min)) com min = fpr_max²/2
    e max = fpr_max. Abaixo da diagonal (raw < min) vale ½·raw/min, que vai
    de 0 em raw = 0 a ½ em raw = min sem saltos; com fpr_max = 1 as duas
    faixas reproduzem a AUC.

    Returns:
        (raw, standardized).
    """
    if not 0.0 < fpr_max <= 1.0:
        raise ConfigError(f"fpr_max deve estar em (0, 1]: {fpr_max}")
    fpr, tpr, _ = roc_curve(scores, labels)

    dentro = fpr <= fpr_max
    x = fpr[dentro]
    yv = tpr[dentro]
    if x[-1] < fpr_max:
        k = int(np.searchsorted(fpr, fpr_max, side="left"))
        # fpr[k-1] < fpr_max <= fpr[k]
        frac = (fpr_max - fpr[k - 1]) / (fpr[k] - fpr[k - 1])
        x = np.r_[x, fpr_max]
        yv = np.r_[yv, tpr[k - 1] + frac * (tpr[k] - tpr[k - 1])]
    raw = float(np.sum(np.diff(x) * (yv[1:] + yv[:-1]) / 2.0))

    area_min = fpr_max * fpr_max / 2.0
    area_max = fpr_max
    if raw < area_min:
        return raw, float(np.clip(0.5 * raw / area_min, 0.0, 0.5))
    padronizada = 0.5 * (1.0 + (raw - area_min) / (area_max - area_min))
    return raw, float(np.clip(padronizada, 0.0, 1.0))


def confusion_at_threshold(scores: Sequence[float], labels: Sequence[int], t: float) -> Confusion:
    s, y = _preparar(scores, labels)
    pred = s >= t
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return Confusion(tp, fp, tn, fn)


def f1_de_confusao(c: Confusion) -> float:
    if c.tp == 0:
        return 0.0
    return 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn)


def f1_at_threshold(scores: Sequence[float], labels: Sequence[int], t: float) -> Tuple[float, Confusion]:
    """Prediz positivo sse score ≥ t; F1 = 0 quando tp = 0."""
    c = confusion_at_threshold(scores, labels, t)
    return f1_de_confusao(c), c


def candidate_thresholds(scores: Sequence[float]) -> np.ndarray:
    """Scores únicos ordenados mais os pontos médios entre vizinhos."""
    unicos = np.unique(np.asarray(scores, dtype=np.float64))
    medios = (unicos[1:] + unicos[:-1]) / 2.0
    return np.unique(np.r_[unicos, medios])


def best_threshold(scores: Sequence[float], labels: Sequence[int],
                   grid: Optional[np.ndarray] = None) -> float:
    """
    Limiar de maior F1 na grade; empates vão para o maior limiar.

    Args:
        scores: Scores.
        labels: Rótulos 0/1.
        grid: Candidatos; por padrão `candidate_thresholds(scores)`.
    """
    s, y = _preparar(scores, labels)
    grade = candidate_thresholds(s) if grid is None else np.sort(np.asarray(grid, dtype=np.float64))
    if grade.size == 0:
        raise ContractError("Grade de limiares vazia")
    pos = np.sort(s[y == 1])
    neg = np.sort(s[y == 0])
    # contagens com score >= t
    tp = pos.size - np.searchsorted(pos, grade, side="left")
    fp = neg.size - np.searchsorted(neg, grade, side="left")
    fn = pos.size - tp
    denominador = 2 * tp + fp + fn
    f1 = np.divide(2.0 * tp, denominador, out=np.zeros(grade.size), where=tp > 0)
    melhor = np.flatnonzero(f1 == f1.max())[-1]
    return float(grade[melhor])


def build_report(scores: Sequence[float], labels: Sequence[int], threshold: float,
                 fpr_max: float = FPR_MAX_PADRAO) -> MetricReport:
    """
    Monta o MetricReport de uma partição com um limiar já escolhido.

    Args:
        scores: Probabilidade da classe positiva.
        labels: Rótulos 0/1.
        threshold: Limiar escolhido na validação.
        fpr_max: Limite da faixa do pAUC.
    """
    s, y = _preparar(scores, labels)
    auc = roc_auc(s, y)
    raw, padronizada = partial_auc(s, y, fpr_max)
    f1, confusao = f1_at_threshold(s, y, threshold)
    n_pos = int(y.sum())
    return MetricReport(
        auc=auc,
        pauc_raw=raw,
        pauc_standardized=padronizada,
        f1=f1,
        threshold=float(threshold),
        confusion=confusao,
        n_pos=n_pos,
        n_neg=int(y.size - n_pos),
        fpr_max=float(fpr_max),
    )

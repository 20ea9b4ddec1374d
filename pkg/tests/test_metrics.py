from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.metrics import roc_auc_score

from src.errors import ConfigError, ContractError, UndefinedMetricError
from src.metrics import (
    Confusion,
    MetricReport,
    best_threshold,
    build_report,
    candidate_thresholds,
    confusion_at_threshold,
    f1_at_threshold,
    partial_auc,
    roc_auc,
    roc_curve,
)


def _auc_por_pares(scores, labels):
    """AUC exata: meios-pares inteiros sobre 2·n_pos·n_neg."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    meios_pares = 0
    for a in pos:
        for b in neg:
            meios_pares += 2 if a > b else 1 if a == b else 0
    return Fraction(meios_pares, 2 * len(pos) * len(neg))


def _caso_aleatorio(rng, n_max=200):
    n = int(rng.integers(2, n_max + 1))
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    # scores discretizados geram empates
    scores = np.round(rng.uniform(size=n), int(rng.integers(1, 4)))
    return scores, labels


@pytest.mark.parametrize("labels, scores, esperado", [
    ((1, 1, 0, 0), (0.9, 0.8, 0.3, 0.2), 1.0),
    ((1, 1, 0, 0), (0.9, 0.3, 0.6, 0.2), 0.75),
    ((1, 1, 0, 0), (0.5, 0.5, 0.5, 0.5), 0.5),
    ((1, 1, 0, 0), (0.1, 0.2, 0.8, 0.9), 0.0),
])
def test_auc_exemplos(labels, scores, esperado):
    assert roc_auc(scores, labels) == esperado


def test_auc_igual_contagem_de_pares():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        scores, labels = _caso_aleatorio(rng)
        # a razão exata arredondada uma vez para float
        assert roc_auc(scores, labels) == float(_auc_por_pares(scores, labels))


def test_auc_confere_com_sklearn():
    rng = np.random.default_rng(8)
    for _ in range(50):
        scores, labels = _caso_aleatorio(rng)
        assert roc_auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_auc_invariante_a_transformacao_monotona(rng):
    for _ in range(50):
        scores, labels = _caso_aleatorio(rng, 60)
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert roc_auc(3.0 * scores - 7.0, labels) == pytest.approx(base, abs=1e-12)


def test_auc_complementar_sem_empates(rng):
    for _ in range(50):
        n = 40
        scores = rng.permutation(n) / n
        labels = rng.integers(0, 2, size=n)
        labels[:2] = (0, 1)
        assert roc_auc(scores, labels) + roc_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("labels", [(1, 1, 1), (0, 0)])
def test_auc_uma_classe_indefinida(labels):
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1] * len(labels), labels)


def test_auc_tamanhos_diferentes():
    with pytest.raises(ContractError):
        roc_auc([0.1, 0.2], [0, 1, 1])


def test_curva_roc_vai_de_zero_a_um():
    fpr, tpr, limiares = roc_curve([0.9, 0.3, 0.6, 0.2], [1, 1, 0, 0])
    assert_allclose(fpr, [0, 0, 0.5, 0.5, 1.0])
    assert_allclose(tpr, [0, 0.5, 0.5, 1.0, 1.0])
    assert np.isinf(limiares[0])


def test_pauc_classificador_perfeito():
    raw, padronizado = partial_auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0], 0.1)
    assert raw == pytest.approx(0.1, abs=1e-15)
    assert padronizado == pytest.approx(1.0, abs=1e-12)


def test_pauc_anti_perfeito_limitado_a_zero():
    raw, padronizado = partial_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0], 0.1)
    assert raw == 0.0
    assert padronizado == 0.0


def test_pauc_faixa_completa_igual_auc():
    raw, padronizado = partial_auc([0.9, 0.3, 0.6, 0.2], [1, 1, 0, 0], 1.0)
    assert raw == pytest.approx(0.75, abs=1e-12)
    assert padronizado == pytest.approx(0.75, abs=1e-12)


def test_pauc_faixa_completa_igual_auc_aleatorio():
    rng = np.random.default_rng(31)
    for _ in range(300):
        scores, labels = _caso_aleatorio(rng)
        raw, padronizado = partial_auc(scores, labels, 1.0)
        auc = roc_auc(scores, labels)
        assert abs(raw - auc) < 1e-12
        assert abs(padronizado - auc) < 1e-12


def test_pauc_interpolado_no_corte():
    # ROC: (0,0) (0,.5) (.5,.5) (.5,1) (1,1); até FPR=.25 a curva fica em TPR=.5
    raw, padronizado = partial_auc([0.9, 0.3, 0.6, 0.2], [1, 1, 0, 0], 0.25)
    assert raw == pytest.approx(0.125, abs=1e-15)
    minimo, maximo = 0.25 ** 2 / 2, 0.25
    assert padronizado == pytest.approx(0.5 * (1 + (0.125 - minimo) / (maximo - minimo)), abs=1e-12)


SCORES_DIAGONAL = [0.9, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3]
LABELS_DIAGONAL = [1, 0, 0, 0, 0, 1, 1, 1]


def test_pauc_na_diagonal_vale_meio():
    # o empate no topo leva a ROC em diagonal até (0.25, 0.25)
    raw, padronizado = partial_auc(SCORES_DIAGONAL, LABELS_DIAGONAL, 0.25)
    assert raw == pytest.approx(0.25 ** 2 / 2, abs=1e-15)
    assert padronizado == pytest.approx(0.5, abs=1e-12)


def test_pauc_abaixo_da_diagonal_e_proporcional():
    # até FPR=0.5: triângulo 0.03125 + retângulo 0.25·0.25; mínimo 0.125
    raw, padronizado = partial_auc(SCORES_DIAGONAL, LABELS_DIAGONAL, 0.5)
    assert raw == pytest.approx(0.09375, abs=1e-15)
    assert padronizado == pytest.approx(0.5 * 0.09375 / 0.125, abs=1e-12)


def test_pauc_padronizado_sem_salto_perto_de_zero():
    rng = np.random.default_rng(12)
    for _ in range(200):
        scores, labels = _caso_aleatorio(rng)
        fpr_max = float(rng.uniform(0.02, 1.0))
        raw, padronizado = partial_auc(scores, labels, fpr_max)
        minimo = fpr_max ** 2 / 2
        if raw < minimo:
            assert padronizado == pytest.approx(0.5 * raw / minimo, abs=1e-12)
        else:
            assert padronizado >= 0.5 - 1e-12


def test_pauc_dentro_dos_limites():
    rng = np.random.default_rng(5)
    for _ in range(200):
        scores, labels = _caso_aleatorio(rng)
        fpr_max = float(rng.uniform(0.01, 1.0))
        raw, padronizado = partial_auc(scores, labels, fpr_max)
        assert -1e-15 <= raw <= fpr_max + 1e-12
        assert 0.0 <= padronizado <= 1.0


@pytest.mark.parametrize("fpr_max", [0.0, -0.1, 1.5])
def test_pauc_fpr_max_invalido(fpr_max):
    with pytest.raises(ConfigError):
        partial_auc([0.1, 0.9], [0, 1], fpr_max)


def test_f1_predicoes_perfeitas():
    f1, c = f1_at_threshold([0.9, 0.8, 0.2], [1, 1, 0], 0.5)
    assert f1 == 1.0
    assert c == Confusion(2, 0, 1, 0)


def test_f1_tudo_positivo_com_prevalencia_de_14():
    labels = np.r_[np.ones(14, dtype=int), np.zeros(86, dtype=int)]
    f1, c = f1_at_threshold(np.full(100, 0.3), labels, 0.3)
    assert c == Confusion(14, 86, 0, 0)
    assert f1 == pytest.approx(0.245614, abs=1e-6)


def test_f1_sem_verdadeiros_positivos():
    f1, c = f1_at_threshold([0.1, 0.2, 0.9], [1, 1, 0], 0.5)
    assert c.tp == 0
    assert f1 == 0.0


def test_f1_confere_com_formula_direta(rng):
    for _ in range(200):
        scores, labels = _caso_aleatorio(rng, 50)
        t = float(rng.uniform())
        f1, c = f1_at_threshold(scores, labels, t)
        pred = scores >= t
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        fn = int(np.sum(~pred & (labels == 1)))
        assert c == confusion_at_threshold(scores, labels, t)
        assert (c.tp, c.fp, c.fn) == (tp, fp, fn)
        assert f1 == (0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))


def test_limiares_candidatos():
    assert_allclose(candidate_thresholds([0.2, 0.6, 0.2, 1.0]), [0.2, 0.4, 0.6, 0.8, 1.0])


def test_melhor_limiar_separacao_perfeita_vai_para_o_maior():
    scores = [0.1, 0.2, 0.7, 0.9]
    labels = [0, 0, 1, 1]
    t = best_threshold(scores, labels)
    # 0.45 e 0.7 empatam com F1 = 1; vence o maior
    assert t == 0.7
    assert f1_at_threshold(scores, labels, t)[0] == 1.0


def test_melhor_limiar_scores_iguais():
    assert best_threshold([0.4, 0.4, 0.4], [0, 1, 1]) == 0.4


def test_melhor_limiar_confere_com_varredura_exaustiva():
    rng = np.random.default_rng(77)
    for _ in range(100):
        scores = np.round(rng.uniform(size=20), 2)
        labels = rng.integers(0, 2, size=20)
        labels[0] = 1
        grade = candidate_thresholds(scores)
        f1s = [f1_at_threshold(scores, labels, t)[0] for t in grade]
        melhor = max(f1s)
        esperado = max(t for t, f in zip(grade, f1s) if f == melhor)
        assert best_threshold(scores, labels) == esperado


def test_relatorio_consistente():
    relatorio = build_report([0.9, 0.3, 0.6, 0.2], [1, 1, 0, 0], 0.5, 0.1)
    assert relatorio.auc == 0.75
    assert relatorio.n_pos == 2 and relatorio.n_neg == 2
    assert relatorio.confusion == Confusion(1, 1, 1, 1)
    assert relatorio.f1 == 0.5
    assert MetricReport.from_dict(relatorio.to_dict()) == relatorio


def test_relatorio_rejeita_confusao_incoerente():
    with pytest.raises(ContractError):
        MetricReport(0.5, 0.0, 0.5, 0.0, 0.5, Confusion(1, 0, 0, 0), n_pos=2, n_neg=0)

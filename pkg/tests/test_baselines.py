import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.baselines import BaselineModel, CrossAttentionParams, fuse_add, fuse_concat, fuse_cross_attention
from src.config import PAPEIS
from src.errors import ConfigError, DimensionError
from src.numerics import Tensor
from src.training import weighted_cross_entropy
from tests.conftest import erros_por_parametro, gerar_entradas


def _vetores(*linhas):
    return [Tensor(np.array([v], dtype=float)) for v in linhas]


def test_fuse_add_exemplo():
    assert_array_equal(fuse_add(_vetores((1, 2), (3, 4), (0, 0), (0, 0))).data, [[4.0, 6.0]])


def test_fuse_add_zeros():
    assert_array_equal(fuse_add(_vetores(*[(0, 0)] * 4)).data, [[0.0, 0.0]])


def test_fuse_add_invariante_a_permutacao(rng):
    vetores = [Tensor(rng.normal(size=(3, 5))) for _ in range(4)]
    base = fuse_add(vetores).data
    for ordem in ([3, 2, 1, 0], [1, 3, 0, 2]):
        assert_allclose(fuse_add([vetores[i] for i in ordem]).data, base, atol=1e-12)


def test_fuse_add_dimensoes_diferentes():
    with pytest.raises(DimensionError):
        fuse_add([Tensor(np.ones((2, 3)))] * 3 + [Tensor(np.ones((3, 3)))])
    with pytest.raises(DimensionError):
        fuse_add(_vetores((1, 2), (3, 4), (5, 6)))


@pytest.mark.parametrize("fusao", [fuse_add, fuse_concat])
@pytest.mark.parametrize("posicao", [1, 2, 3])
def test_largura_divergente_nomeia_a_modalidade(rng, fusao, posicao):
    vetores = [Tensor(rng.normal(size=(3, 8))) for _ in range(4)]
    vetores[posicao] = Tensor(rng.normal(size=(3, 1)))
    with pytest.raises(DimensionError, match=PAPEIS[posicao]):
        fusao(vetores)


def test_atencao_com_largura_divergente(rng):
    params = CrossAttentionParams.inicializar(8, rng)
    vetores = [Tensor(rng.normal(size=(2, 8))) for _ in range(3)] + [Tensor(rng.normal(size=(2, 5)))]
    with pytest.raises(DimensionError, match="numeric"):
        fuse_cross_attention(vetores, params)


def test_fuse_concat_ordem_fixa():
    fundido = fuse_concat(_vetores((1, 2), (3, 4), (5, 6), (7, 8))).data
    assert_array_equal(fundido, [[1, 2, 3, 4, 5, 6, 7, 8]])


def test_fuse_concat_fatias_recuperam_modalidades(rng):
    vetores = [Tensor(rng.normal(size=(2, 3))) for _ in range(4)]
    fundido = fuse_concat(vetores).data
    assert fundido.shape == (2, 12)
    for k, v in enumerate(vetores):
        assert_array_equal(fundido[:, 3 * k:3 * (k + 1)], v.data)
    assert not np.array_equal(fuse_concat(vetores[::-1]).data, fundido)


def _atencao_em_laco(x, params):
    d_f = x[0].shape[1]
    saidas = []
    for m, papel in enumerate(PAPEIS):
        outros = [i for i in range(4) if i != m]
        q = x[m] @ params.queries[papel].data
        ks = [x[o] @ params.keys[PAPEIS[o]].data for o in outros]
        vs = [x[o] @ params.values[PAPEIS[o]].data for o in outros]
        out = np.zeros_like(q)
        for b in range(q.shape[0]):
            logits = [sum(q[b, d] * k[b, d] for d in range(d_f)) / math.sqrt(d_f) for k in ks]
            maximo = max(logits)
            pesos = [math.exp(l - maximo) for l in logits]
            total = sum(pesos)
            for a, v in zip(pesos, vs):
                out[b] += a / total * v[b]
        saidas.append(out)
    return sum(saidas) / 4.0


def test_atencao_confere_com_laco():
    rng = np.random.default_rng(21)
    params = CrossAttentionParams.inicializar(4, rng)
    x = [rng.normal(size=(3, 4)) for _ in range(4)]
    fundido, pesos = fuse_cross_attention([Tensor(v) for v in x], params)
    assert_allclose(fundido.data, _atencao_em_laco(x, params), atol=1e-12)
    for alfa in pesos.values():
        assert alfa.shape == (3, 3)
        assert_allclose(alfa.sum(axis=1), 1.0, atol=1e-12)


def test_atencao_chaves_nulas_fica_uniforme(rng):
    params = CrossAttentionParams.inicializar(4, rng)
    for papel in PAPEIS:
        params.keys[papel].data = np.zeros((4, 4))
    x = [rng.normal(size=(2, 4)) for _ in range(4)]
    fundido, pesos = fuse_cross_attention([Tensor(v) for v in x], params)
    for alfa in pesos.values():
        assert_allclose(alfa, 1.0 / 3.0, atol=1e-15)
    valores = [x[i] @ params.values[p].data for i, p in enumerate(PAPEIS)]
    esperado = np.mean([np.mean([valores[o] for o in range(4) if o != m], axis=0) for m in range(4)], axis=0)
    assert_allclose(fundido.data, esperado, atol=1e-12)


def test_atencao_simetrica_com_projecoes_compartilhadas(rng):
    params = CrossAttentionParams.inicializar(4, rng)
    for papel in PAPEIS[1:]:
        params.queries[papel].data = params.queries[PAPEIS[0]].data
        params.keys[papel].data = params.keys[PAPEIS[0]].data
        params.values[papel].data = params.values[PAPEIS[0]].data
    linha = rng.normal(size=(2, 4))
    fundido, pesos = fuse_cross_attention([Tensor(linha.copy()) for _ in range(4)], params)
    assert_allclose(fundido.data, linha @ params.values[PAPEIS[0]].data, atol=1e-12)
    referencia = pesos[PAPEIS[0]]
    for alfa in pesos.values():
        assert_array_equal(alfa, referencia)


@pytest.mark.parametrize("estrategia, dim_fundida", [("add", 8), ("concat", 32), ("xattn", 8)])
def test_modelo_de_comparacao_dimensoes(config_pequena, dims_pequenas, rng, estrategia, dim_fundida):
    modelo = BaselineModel(estrategia, dims_pequenas, config_pequena, seed=0)
    assert modelo.classifier.tamanhos == [dim_fundida, config_pequena.classifier_hidden, 2]
    probs, trace = modelo.forward(gerar_entradas(rng, 5))
    assert trace is None
    assert probs.shape == (5, 2)
    assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-12)


def test_modelo_de_comparacao_estrategia_invalida(config_pequena, dims_pequenas):
    with pytest.raises(ConfigError):
        BaselineModel("capsnet", dims_pequenas, config_pequena)


def test_modelo_de_comparacao_dimensao_errada(config_pequena, dims_pequenas, rng):
    modelo = BaselineModel("add", dims_pequenas, config_pequena)
    entradas = gerar_entradas(rng, 2)
    entradas["text_b"] = np.ones((2, 2))
    with pytest.raises(DimensionError, match="text_b"):
        modelo.forward(entradas)


def test_parametros_de_atencao_so_no_xattn(config_pequena, dims_pequenas):
    nomes_add = BaselineModel("add", dims_pequenas, config_pequena).parameters()
    nomes_xattn = BaselineModel("xattn", dims_pequenas, config_pequena).parameters()
    assert not any(n.startswith("attention.") for n in nomes_add)
    atencao = [n for n in nomes_xattn if n.startswith("attention.")]
    assert len(atencao) == 12
    assert "attention.image.key" in atencao


@pytest.mark.parametrize("estrategia", ["add", "concat", "xattn"])
def test_gradiente_ponta_a_ponta(config_pequena, dims_pequenas, lote_pequeno, estrategia):
    modelo = BaselineModel(estrategia, dims_pequenas, config_pequena, seed=4)
    entradas, rotulos = lote_pequeno
    erros = erros_por_parametro(
        modelo, lambda: weighted_cross_entropy(modelo.forward(entradas)[0], rotulos, (1.0, 1.0))
    )
    piores = {n: e for n, e in erros.items() if e >= 1e-4}
    assert not piores, piores

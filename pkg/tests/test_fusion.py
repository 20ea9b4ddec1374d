import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.capsules import CapsuleTensor
from src.errors import DimensionError
from src.fusion import (
    ConfidenceVector,
    FusionModel,
    forward,
    fuse_gate,
    image_confidence,
    numeric_confidence,
    text_confidence,
)
from src.numerics import Tensor, finite_diff_check, softmax
from src.run_config import ModelConfig
from src.training import weighted_cross_entropy
from tests.conftest import gerar_entradas


def _caps(*vetores):
    return CapsuleTensor(Tensor(np.array(vetores, dtype=float)[None]))


def test_confianca_imagem_exemplos():
    z = image_confidence(_caps([0.0, 0.0], [1.0, 0.0], [3.0, 4.0])).values.data[0]
    assert_allclose(z, [0.0, 0.5, 25 / 26], atol=1e-6)


def test_confianca_imagem_monotona(rng):
    s = rng.normal(size=(1, 2, 5))
    base = image_confidence(CapsuleTensor(Tensor(s))).values.data
    for a in (1.1, 2.0, 10.0):
        maior = image_confidence(CapsuleTensor(Tensor(a * s))).values.data
        assert (maior > base).all()
    assert ((base >= 0) & (base < 1)).all()


def test_confianca_texto_exemplos():
    z_igual = text_confidence(_caps([1.0, 2.0], [3.0, -1.0]), _caps([1.0, 2.0], [3.0, -1.0]))
    assert_allclose(z_igual.values.data, 1.0, atol=1e-6)
    z = text_confidence(_caps([1.0, 0.0], [1.0, 0.0], [0.0, 0.0]), _caps([0.0, 1.0], [1.0, 1.0], [2.0, 1.0]))
    assert_allclose(z.values.data[0], [0.0, 1 / math.sqrt(2), 0.0], atol=1e-6)


def test_confianca_texto_invariante_a_escala(rng):
    for _ in range(50):
        s1 = rng.normal(size=(3, 2, 8))
        s2 = rng.normal(size=(3, 2, 8))
        a, b = rng.uniform(0.5, 5.0, size=2)
        base = text_confidence(CapsuleTensor(Tensor(s1)), CapsuleTensor(Tensor(s2))).values.data
        escalado = text_confidence(CapsuleTensor(Tensor(a * s1)), CapsuleTensor(Tensor(b * s2))).values.data
        assert_allclose(escalado, base, atol=1e-9)
        assert (np.abs(base) <= 1.0).all()


def test_confianca_texto_formas_diferentes():
    with pytest.raises(DimensionError):
        text_confidence(_caps([1.0, 0.0]), _caps([1.0, 0.0, 0.0]))


def test_confianca_numerica_normas_iguais():
    z = numeric_confidence(_caps([1.0, 0.0], [0.0, 1.0])).values.data[0]
    assert_allclose(z, [1.5, 1.5], atol=1e-12)


def test_confianca_numerica_norma_dominante():
    z = numeric_confidence(_caps([50.0, 0.0], [0.0, 0.0])).values.data[0]
    assert_allclose(z, [1.0, 1.0], atol=1e-12)


def test_confianca_numerica_exemplo_derivado():
    z = numeric_confidence(_caps([math.log(4.0), 0.0], [0.0, 0.0])).values.data[0]
    assert_allclose(z, [1.257543, 1.464386], atol=1e-6)


def test_confianca_numerica_limites(rng):
    maximo = 1.0 + 1.0 / (math.e * math.log(2.0))
    for _ in range(200):
        z = numeric_confidence(CapsuleTensor(Tensor(rng.normal(scale=3.0, size=(4, 3, 5))))).values.data
        assert np.isfinite(z).all()
        assert (z >= 1.0).all()
        assert (z <= maximo + 1e-12).all()


@pytest.fixture
def modelo(config_pequena, dims_pequenas):
    return FusionModel(config_pequena, dims_pequenas, seed=3)


def _confiancas(rng, n=3, n_c=2):
    return (ConfidenceVector(Tensor(rng.uniform(-1, 1, size=(n, n_c))), "text"),
            ConfidenceVector(Tensor(rng.uniform(0, 1, size=(n, n_c))), "image"),
            ConfidenceVector(Tensor(rng.uniform(1, 1.5, size=(n, n_c))), "numeric"))


def test_gate_com_omega_zero(modelo, rng):
    for w in modelo.omega.values():
        w.data = np.array(0.0)
    modelo.gate_bias.data = np.array([0.3, -0.7])
    g, f = fuse_gate(*_confiancas(rng), modelo)
    assert_allclose(f.data, 0.0)
    assert_allclose(g.data, np.tanh([[0.3, -0.7]] * 3))


def test_gate_com_pesos_zerados(modelo, rng):
    modelo.gate_weight.data = np.zeros_like(modelo.gate_weight.data)
    g, _ = fuse_gate(*_confiancas(rng), modelo)
    assert_allclose(g.data, 0.0)


def test_gate_confere_com_laco(modelo, rng):
    modelo.gate_weight.data = rng.uniform(-0.1, 0.1, size=(6, 2))
    modelo.gate_bias.data = rng.uniform(-0.1, 0.1, size=2)
    z_t, z_i, z_n = _confiancas(rng)
    g, f = fuse_gate(z_t, z_i, z_n, modelo)
    for b in range(3):
        vetor_f = list(z_t.values.data[b]) + list(z_i.values.data[b]) + list(z_n.values.data[b])
        assert_allclose(f.data[b], vetor_f, atol=1e-12)
        for c in range(2):
            soma = modelo.gate_bias.data[c]
            for i in range(6):
                soma += vetor_f[i] * modelo.gate_weight.data[i, c]
            assert abs(g.data[b, c] - math.tanh(soma)) < 1e-12


def test_gate_limitado(modelo, rng):
    modelo.gate_weight.data = rng.normal(scale=3.0, size=(6, 2))
    g, _ = fuse_gate(*_confiancas(rng, n=50), modelo)
    assert (np.abs(g.data) < 1.0).all()


def test_gate_rejeita_classes_divergentes(modelo, rng):
    z_t, z_i, _ = _confiancas(rng)
    z_n = ConfidenceVector(Tensor(np.ones((3, 3))), "numeric")
    with pytest.raises(DimensionError):
        fuse_gate(z_t, z_i, z_n, modelo)


def test_forward_probabilidades_somam_um(modelo, rng):
    probs, trace = forward(modelo, gerar_entradas(rng, 7))
    assert probs.shape == (7, 2)
    assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-12)
    assert len(trace) == 7


def test_forward_invariante_ao_lote(modelo, rng):
    entradas = gerar_entradas(rng, 6)
    probs, _ = forward(modelo, entradas)
    for i in range(6):
        sozinho, _ = forward(modelo, {p: x[i:i + 1] for p, x in entradas.items()})
        assert_allclose(sozinho.data[0], probs.data[i], atol=1e-10)


def test_forward_permutacao_permuta_linhas(modelo, rng):
    entradas = gerar_entradas(rng, 5)
    ordem = rng.permutation(5)
    probs, _ = forward(modelo, entradas)
    permutado, _ = forward(modelo, {p: x[ordem] for p, x in entradas.items()})
    assert_allclose(permutado.data, probs.data[ordem], atol=1e-12)


def _zerar_capsulas(modelo):
    for nome, p in modelo.parameters().items():
        if nome.startswith("caps."):
            p.data = np.zeros_like(p.data)
    modelo.gate_bias.data = np.zeros_like(modelo.gate_bias.data)


def test_forward_colapso_para_funcao_constante(modelo, rng):
    _zerar_capsulas(modelo)
    probs, _ = forward(modelo, gerar_entradas(rng, 4))
    assert_allclose(probs.data, np.repeat(probs.data[:1], 4, axis=0), atol=1e-15)


def test_forward_colapso_igual_softmax_do_vies_da_cabeca(modelo, rng):
    _zerar_capsulas(modelo)
    modelo.gate_weight.data = np.zeros_like(modelo.gate_weight.data)
    modelo.head_bias.data = np.array([0.4, -0.2])
    probs, _ = forward(modelo, gerar_entradas(rng, 4))
    esperado = softmax(Tensor([0.4, -0.2])).data
    assert_allclose(probs.data, np.tile(esperado, (4, 1)), atol=1e-15)


def test_forward_dimensao_errada_nomeia_modalidade(modelo, rng):
    entradas = gerar_entradas(rng, 2)
    entradas["image"] = np.ones((2, 7))
    with pytest.raises(DimensionError, match="image"):
        forward(modelo, entradas)


def test_traco_por_amostra(modelo, rng):
    entradas = gerar_entradas(rng, 3)
    _, trace = forward(modelo, entradas)
    registros = trace.to_records(indices=[10, 11, 12], labels=[0, 1, 0])
    assert [r["index"] for r in registros] == [10, 11, 12]
    for r in registros:
        assert set(r["coefficients"]) == {"text_a", "text_b", "image", "numeric"}
        for matriz in r["coefficients"].values():
            assert_allclose(np.sum(matriz, axis=1), 1.0, atol=1e-10)
        assert set(r["confidences"]) == {"text", "image", "numeric"}
        assert r["omega"] == {"text": 1.0, "image": 1.0, "numeric": 1.0}
        assert len(r["f"]) == 6 and len(r["g"]) == 2
        assert_allclose(sum(r["probs"]), 1.0, atol=1e-12)


def test_pesos_de_texto_compartilhados(config_pequena, dims_pequenas):
    config = ModelConfig(**{**config_pequena.__dict__, "share_text_weights": True})
    compartilhado = FusionModel(config, dims_pequenas, seed=0)
    separado = FusionModel(config_pequena, dims_pequenas, seed=0)
    assert compartilhado.stacks["text_b"] is compartilhado.stacks["text_a"]
    assert not any(n.startswith("caps.text_b") for n in compartilhado.parameters())
    assert compartilhado.n_parametros() < separado.n_parametros()


def test_pesos_compartilhados_exigem_mesma_dimensao(config_pequena, dims_pequenas):
    config = ModelConfig(**{**config_pequena.__dict__, "share_text_weights": True})
    with pytest.raises(DimensionError):
        FusionModel(config, {**dims_pequenas, "text_b": 7}, seed=0)


def test_inicializacao_deterministica(config_pequena, dims_pequenas):
    a = FusionModel(config_pequena, dims_pequenas, seed=11).state_dict()
    b = FusionModel(config_pequena, dims_pequenas, seed=11).state_dict()
    assert a.keys() == b.keys()
    for nome in a:
        assert a[nome].tobytes() == b[nome].tobytes()


def test_gradiente_do_modelo_completo(modelo, lote_pequeno):
    entradas, rotulos = lote_pequeno

    def perda(_):
        return weighted_cross_entropy(forward(modelo, entradas)[0], rotulos, (1.0, 1.0))

    params = modelo.parameters()
    assert {n.split(".")[0] for n in params} == {"numeric_encoder", "caps", "omega", "gate", "head"}
    erros = {nome: finite_diff_check(perda, p) for nome, p in params.items()}
    piores = {n: e for n, e in erros.items() if e >= 1e-4}
    assert not piores, piores

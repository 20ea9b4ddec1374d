import numpy as np
import pytest

from src.numerics import backward, no_grad
from src.run_config import ModelConfig

DIMS_PEQUENAS = {"text_a": 5, "text_b": 5, "image": 6, "numeric": 3}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config_pequena():
    return ModelConfig(
        n_primary_capsules=4,
        primary_dim=8,
        digit_dim=8,
        numeric_hidden=[8],
        numeric_embedding_dim=6,
        d_f=8,
        classifier_hidden=6,
    )


@pytest.fixture
def dims_pequenas():
    return dict(DIMS_PEQUENAS)


def gerar_entradas(rng, n, dims=DIMS_PEQUENAS):
    return {papel: rng.uniform(-2.0, 2.0, size=(n, d)) for papel, d in dims.items()}


@pytest.fixture
def lote_pequeno(rng):
    return gerar_entradas(rng, 4), np.array([0, 1, 0, 1])


def erros_por_parametro(modelo, perda, eps=1e-5):
    """
    Erro relativo ‖a − n‖ / max(‖a‖, ‖n‖, 1e-8) entre o gradiente do
    autodiff e diferenças centrais, por parâmetro nomeado.

    Args:
        modelo: ParameterContainer avaliado por `perda`.
        perda: Função sem argumentos que devolve o Tensor escalar.
    """
    modelo.zero_grad()
    backward(perda())
    erros = {}
    for nome, p in modelo.parameters().items():
        plano = p.data.reshape(-1)
        numerico = np.empty(plano.size)
        with no_grad():
            for i in range(plano.size):
                original = plano[i]
                plano[i] = original + eps
                f_mais = perda().item()
                plano[i] = original - eps
                f_menos = perda().item()
                plano[i] = original
                numerico[i] = (f_mais - f_menos) / (2.0 * eps)
        analitico = p.grad.reshape(-1) if p.grad is not None else np.zeros(plano.size)
        escala = max(np.linalg.norm(analitico), np.linalg.norm(numerico), 1e-8)
        erros[nome] = float(np.linalg.norm(analitico - numerico) / escala)
    return erros

"""
Camadas densas e contêiner de parâmetros compartilhados pelos modelos.
"""

import logging
from collections import OrderedDict
from typing import Dict, Sequence

import numpy as np

from src.numerics import Tensor, add_bias, matmul, tanh_elem

logger = logging.getLogger(__name__)


def glorot_uniform(rng: np.random.Generator, forma, fan_in: int, fan_out: int) -> np.ndarray:
    """Amostra uniforme em ±√(6/(fan_in+fan_out))."""
    limite = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limite, limite, size=forma)


class ParameterContainer:
    """Base com a coleção ordenada de parâmetros nomeados."""

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        raise NotImplementedError

    def parameters(self) -> "OrderedDict[str, Tensor]":
        # Parâmetros compartilhados aparecem uma única vez
        unicos: "OrderedDict[str, Tensor]" = OrderedDict()
        vistos = set()
        for nome, p in self.named_parameters().items():
            if id(p) not in vistos:
                vistos.add(id(p))
                unicos[nome] = p
        return unicos

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {nome: p.data.copy() for nome, p in self.parameters().items()}

    def load_state_dict(self, estado: Dict[str, np.ndarray]):
        params = self.parameters()
        faltando = set(params) ^ set(estado)
        if faltando:
            raise KeyError(f"Parâmetros divergentes: {sorted(faltando)}")
        for nome, p in params.items():
            valor = np.asarray(estado[nome], dtype=np.float64)
            if valor.shape != p.shape:
                raise ValueError(f"Parâmetro {nome}: forma {valor.shape}, esperado {p.shape}")
            p.data = valor.copy()

    def n_parametros(self) -> int:
        return sum(p.size for p in self.parameters().values())


def com_prefixo(prefixo: str, params: Dict[str, Tensor]) -> "OrderedDict[str, Tensor]":
    return OrderedDict((f"{prefixo}.{nome}", p) for nome, p in params.items())


class Dense(ParameterContainer):
    """Camada linear x·W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Tensor(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add_bias(matmul(x, self.weight), self.bias)

    def named_parameters(self):
        return OrderedDict([("weight", self.weight), ("bias", self.bias)])


class MLP(ParameterContainer):
    """
    Perceptron multicamadas com tanh nas camadas ocultas e saída linear.

    Args:
        tamanhos: Dimensões [entrada, ocultas..., saída].
        rng: Gerador para a inicialização.
    """

    def __init__(self, tamanhos: Sequence[int], rng: np.random.Generator):
        if len(tamanhos) < 2:
            raise ValueError(f"MLP precisa de ao menos duas dimensões: {tamanhos}")
        self.tamanhos = list(tamanhos)
        self.camadas = [Dense(a, b, rng) for a, b in zip(self.tamanhos[:-1], self.tamanhos[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, camada in enumerate(self.camadas):
            x = camada(x)
            if i < len(self.camadas) - 1:
                x = tanh_elem(x)
        return x

    def named_parameters(self):
        params = OrderedDict()
        for i, camada in enumerate(self.camadas):
            params.update(com_prefixo(str(i), camada.named_parameters()))
        return params

"""
Mecânica de cápsulas: projeção primária, squash, transformação para
cápsulas de dígito e roteamento por concordância.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.config import ITERACOES_ROTEAMENTO, ITERACOES_ROTEAMENTO_MAX
from src.errors import ConfigError, DimensionError
from src.layers import ParameterContainer, com_prefixo, glorot_uniform
from src.numerics import Tensor, add, contract, softmax, squash

logger = logging.getLogger(__name__)

EIXOS_ROTEAMENTO = {"out": 2, "in": 1}


@dataclass
class CapsuleTensor:
    """Ativações batch × n_capsulas × dim_capsula."""

    data: Tensor

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DimensionError(f"CapsuleTensor exige rank 3, recebeu forma {self.data.shape}")

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def n_capsules(self) -> int:
        return self.data.shape[1]

    @property
    def cap_dim(self) -> int:
        return self.data.shape[2]


@dataclass
class RoutingCoefficients:
    """
    Coeficientes c_kj de forma batch × n_in × n_out.

    Com axis="out" cada linha (amostra, k) soma 1 sobre j; com axis="in"
    cada coluna (amostra, j) soma 1 sobre k.
    """

    data: np.ndarray
    axis: str = "out"

    def somas(self) -> np.ndarray:
        return self.data.sum(axis=EIXOS_ROTEAMENTO[self.axis])

    def validar(self, tol: float = 1e-10) -> bool:
        return bool((self.data >= 0).all() and np.all(np.abs(self.somas() - 1.0) <= tol))


class PrimaryCapsuleLayer(ParameterContainer):
    """
    Projeta o embedding de uma modalidade em n_capsules perspectivas.

    Args:
        n_capsules: Número de cápsulas primárias.
        in_dim: Dimensão do embedding da modalidade.
        cap_dim: Dimensão de cada cápsula.
        rng: Gerador para a inicialização.
        apply_squash: Aplica squash em cada cápsula projetada.
    """

    def __init__(self, n_capsules: int, in_dim: int, cap_dim: int,
                 rng: np.random.Generator, apply_squash: bool = True):
        self.n_capsules = n_capsules
        self.in_dim = in_dim
        self.cap_dim = cap_dim
        self.apply_squash = apply_squash
        self.projections = Tensor(
            glorot_uniform(rng, (n_capsules, in_dim, cap_dim), in_dim, cap_dim),
            requires_grad=True,
        )

    def named_parameters(self):
        return OrderedDict([("projections", self.projections)])


class DigitCapsuleLayer(ParameterContainer):
    """
    Transformações W_kj (n_in × n_out matrizes in_dim × out_dim) e roteamento.
    """

    def __init__(self, n_in: int, n_out: int, in_dim: int, out_dim: int,
                 rng: np.random.Generator, routing_iters: int = ITERACOES_ROTEAMENTO,
                 routing_axis: str = "out"):
        if not 1 <= routing_iters <= ITERACOES_ROTEAMENTO_MAX:
            raise ConfigError(
                f"routing_iters deve estar em [1, {ITERACOES_ROTEAMENTO_MAX}], recebeu {routing_iters}"
            )
        if routing_axis not in EIXOS_ROTEAMENTO:
            raise ConfigError(f"routing_axis inválido: {routing_axis!r}")
        self.n_in = n_in
        self.n_out = n_out
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.routing_iters = routing_iters
        self.routing_axis = routing_axis
        self.transforms = Tensor(
            glorot_uniform(rng, (n_in, n_out, in_dim, out_dim), in_dim, out_dim),
            requires_grad=True,
        )

    def named_parameters(self):
        return OrderedDict([("transforms", self.transforms)])


def project_primary(layer: PrimaryCapsuleLayer, e: Tensor) -> CapsuleTensor:
    """Cápsula k = e·W_pc,k, empilhadas na ordem k = 1..n_capsules."""
    if e.ndim != 2 or e.shape[1] != layer.in_dim:
        raise DimensionError(
            f"project_primary: embedding de forma {e.shape}, camada espera (batch, {layer.in_dim})"
        )
    p = contract("bi,nic->bnc", e, layer.projections)
    if layer.apply_squash:
        p = squash(p)
    return CapsuleTensor(p)


def route(layer: DigitCapsuleLayer, p: CapsuleTensor) -> Tuple[CapsuleTensor, RoutingCoefficients]:
    """
    Roteamento por concordância.

    Os logits b começam em zero a cada passagem. Em cada iteração,
    c = softmax(b), s_j = Σ_k c_kj û_{j|k}, v_j = squash(s_j) e
    b_kj += ⟨û_{j|k}, v_j⟩, sem atualizar após a última iteração.

    Returns:
        (s_j não comprimido, coeficientes finais).
    """
    if p.n_capsules != layer.n_in or p.cap_dim != layer.in_dim:
        raise DimensionError(
            f"route: cápsulas {p.n_capsules}×{p.cap_dim}, camada espera {layer.n_in}×{layer.in_dim}"
        )
    eixo = EIXOS_ROTEAMENTO[layer.routing_axis]
    u = contract("bkd,kjde->bkje", p.data, layer.transforms)
    b = Tensor(np.zeros((p.batch, layer.n_in, layer.n_out)))

    for iteracao in range(layer.routing_iters):
        c = softmax(b, axis=eixo)
        s = contract("bkj,bkje->bje", c, u)
        if iteracao < layer.routing_iters - 1:
            v = squash(s)
            b = add(b, contract("bkje,bje->bkj", u, v))

    return CapsuleTensor(s), RoutingCoefficients(c.data.copy(), layer.routing_axis)


class CapsuleStack(ParameterContainer):
    """Camada primária + camada de dígitos de uma modalidade."""

    def __init__(self, primary: PrimaryCapsuleLayer, digit: DigitCapsuleLayer):
        if digit.n_in != primary.n_capsules or digit.in_dim != primary.cap_dim:
            raise DimensionError(
                f"camada de dígitos ({digit.n_in}×{digit.in_dim}) não casa com a primária "
                f"({primary.n_capsules}×{primary.cap_dim})"
            )
        self.primary = primary
        self.digit = digit

    def __call__(self, e: Tensor) -> Tuple[CapsuleTensor, RoutingCoefficients]:
        return route(self.digit, project_primary(self.primary, e))

    def named_parameters(self):
        params = com_prefixo("primary", self.primary.named_parameters())
        params.update(com_prefixo("digit", self.digit.named_parameters()))
        return params

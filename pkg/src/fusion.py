"""
Cabeça FusionCapsNet: métricas de confiança por modalidade, pesos ω,
gate adaptativo, cabeça de saída e forward multimodal completo.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.capsules import CapsuleStack, CapsuleTensor, DigitCapsuleLayer, PrimaryCapsuleLayer, RoutingCoefficients
from src.config import EPS_NORMA, PAPEIS
from src.errors import DimensionError
from src.layers import MLP, ParameterContainer, com_prefixo, glorot_uniform
from src.numerics import (
    Tensor,
    add_bias,
    add_scalar,
    concat,
    div,
    matmul,
    mul,
    norm,
    plog2p,
    scale,
    softmax,
    squash,
    sum_,
    tanh_elem,
)
from src.run_config import ModelConfig

logger = logging.getLogger(__name__)

FONTES_CONFIANCA = ("text", "image", "numeric")


@dataclass
class ConfidenceVector:
    """Confianças batch × N_c de uma modalidade."""

    values: Tensor
    modality: str

    def __post_init__(self):
        if self.modality not in FONTES_CONFIANCA:
            raise ValueError(f"Modalidade de confiança inválida: {self.modality!r}")
        if self.values.ndim != 2:
            raise DimensionError(f"Confiança '{self.modality}' deve ser batch × N_c, forma {self.values.shape}")


def image_confidence(s: CapsuleTensor) -> ConfidenceVector:
    """z_c = ‖squash(S_c)‖, a probabilidade de presença de cada classe."""
    return ConfidenceVector(norm(squash(s.data), axis=-1), "image")


def text_confidence(s1: CapsuleTensor, s2: CapsuleTensor) -> ConfidenceVector:
    """Cosseno por classe entre as cápsulas dos dois canais de texto."""
    if s1.data.shape != s2.data.shape:
        raise DimensionError(f"text_confidence: formas {s1.data.shape} e {s2.data.shape}")
    produto = sum_(mul(s1.data, s2.data), axis=-1)
    normas = add_scalar(mul(norm(s1.data, axis=-1), norm(s2.data, axis=-1)), EPS_NORMA)
    return ConfidenceVector(div(produto, normas), "text")


def numeric_confidence(s: CapsuleTensor) -> ConfidenceVector:
    """
    Certeza por entropia negativa.

    ℓ_c = ‖S_c‖, p = softmax(ℓ) e z_c = 1 − p_c·log₂p_c, com p log p → 0
    quando p → 0.
    """
    p = softmax(norm(s.data, axis=-1), axis=-1)
    return ConfidenceVector(add_scalar(scale(plog2p(p), -1.0), 1.0), "numeric")


class FusionModel(ParameterContainer):
    """
    Todos os parâmetros treináveis da FusionCapsNet.

    Args:
        config: Hiperparâmetros do modelo.
        dims: Dimensão de entrada de cada papel (text_a, text_b, image, numeric).
        seed: Semente da inicialização.
    """

    strategy = "capsnet"

    def __init__(self, config: ModelConfig, dims: Mapping[str, int], seed: int = 0):
        faltando = [p for p in PAPEIS if p not in dims]
        if faltando:
            raise DimensionError(f"Dimensões ausentes para {faltando}")
        if config.share_text_weights and dims["text_a"] != dims["text_b"]:
            raise DimensionError(
                f"share_text_weights exige text_a e text_b de mesma dimensão: "
                f"{dims['text_a']} vs {dims['text_b']}"
            )
        self.config = config
        self.dims = {p: int(dims[p]) for p in PAPEIS}
        rng = np.random.default_rng(seed)
        n_c = config.n_classes

        self.numeric_encoder = MLP(
            [self.dims["numeric"], *config.numeric_hidden, config.numeric_embedding_dim], rng
        )
        entradas_capsula = {
            "text_a": self.dims["text_a"],
            "text_b": self.dims["text_b"],
            "image": self.dims["image"],
            "numeric": config.numeric_embedding_dim,
        }
        self.stacks: Dict[str, CapsuleStack] = {}
        for papel in PAPEIS:
            if papel == "text_b" and config.share_text_weights:
                self.stacks[papel] = self.stacks["text_a"]
                continue
            primaria = PrimaryCapsuleLayer(config.n_primary_capsules, entradas_capsula[papel],
                                           config.primary_dim, rng, config.apply_squash_primary)
            digitos = DigitCapsuleLayer(config.n_primary_capsules, n_c, config.primary_dim,
                                        config.digit_dim, rng, config.routing_iters, config.routing_axis)
            self.stacks[papel] = CapsuleStack(primaria, digitos)

        self.omega = OrderedDict((fonte, Tensor(np.array(1.0), requires_grad=True))
                                 for fonte in FONTES_CONFIANCA)
        self.gate_weight = Tensor(glorot_uniform(rng, (3 * n_c, n_c), 3 * n_c, n_c), requires_grad=True)
        self.gate_bias = Tensor(np.zeros(n_c), requires_grad=True)
        self.head_weight = Tensor(glorot_uniform(rng, (n_c, n_c), n_c, n_c), requires_grad=True)
        self.head_bias = Tensor(np.zeros(n_c), requires_grad=True)

        logger.info(
            f"FusionModel inicializado: {self.n_parametros()} parâmetros, "
            f"N_pc={config.n_primary_capsules}, roteamento={config.routing_iters}x ({config.routing_axis})"
        )

    def named_parameters(self):
        params = com_prefixo("numeric_encoder", self.numeric_encoder.named_parameters())
        for papel, stack in self.stacks.items():
            params.update(com_prefixo(f"caps.{papel}", stack.named_parameters()))
        for fonte, w in self.omega.items():
            params[f"omega.{fonte}"] = w
        params["gate.weight"] = self.gate_weight
        params["gate.bias"] = self.gate_bias
        params["head.weight"] = self.head_weight
        params["head.bias"] = self.head_bias
        return params

    def forward(self, inputs: Mapping[str, np.ndarray]) -> Tuple[Tensor, "RoutingTrace"]:
        return forward(self, inputs)


def fuse_gate(z_t: ConfidenceVector, z_img: ConfidenceVector, z_n: ConfidenceVector,
              model: FusionModel) -> Tuple[Tensor, Tensor]:
    """
    f = [ω_t z_t ‖ ω_img z_img ‖ ω_n z_n] e g = tanh(f W_g + b_g).

    Returns:
        (g, f).
    """
    n_c = model.gate_bias.shape[0]
    for z in (z_t, z_img, z_n):
        if z.values.shape[-1] != n_c:
            raise DimensionError(f"Confiança '{z.modality}' com {z.values.shape[-1]} classes, esperado {n_c}")
    f = concat([
        scale(z_t.values, model.omega["text"]),
        scale(z_img.values, model.omega["image"]),
        scale(z_n.values, model.omega["numeric"]),
    ], axis=-1)
    g = tanh_elem(add_bias(matmul(f, model.gate_weight), model.gate_bias))
    return g, f


@dataclass
class RoutingTrace:
    """Intermediários do forward, com um registro por amostra em `to_records`."""

    coefficients: Dict[str, RoutingCoefficients]
    confidences: Dict[str, np.ndarray]
    omega: Dict[str, float]
    f: np.ndarray
    g: np.ndarray
    probs: np.ndarray
    routing_axis: str

    def __len__(self) -> int:
        return self.probs.shape[0]

    def to_records(self, indices: Optional[Sequence[int]] = None,
                   labels: Optional[Sequence[int]] = None) -> List[Dict]:
        registros = []
        for b in range(len(self)):
            registros.append({
                "index": int(indices[b]) if indices is not None else b,
                "label": int(labels[b]) if labels is not None else None,
                "coefficients": {p: c.data[b].tolist() for p, c in self.coefficients.items()},
                "routing_axis": self.routing_axis,
                "confidences": {fonte: z[b].tolist() for fonte, z in self.confidences.items()},
                "omega": dict(self.omega),
                "f": self.f[b].tolist(),
                "g": self.g[b].tolist(),
                "probs": self.probs[b].tolist(),
            })
        return registros


def _entrada(inputs: Mapping[str, np.ndarray], papel: str, dim: int) -> Tensor:
    if papel not in inputs:
        raise DimensionError(f"Modalidade '{papel}' ausente do lote")
    x = np.asarray(inputs[papel], dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(f"Modalidade '{papel}': forma {x.shape}, modelo espera (batch, {dim})")
    return Tensor(x)


def forward(model: FusionModel, inputs: Mapping[str, np.ndarray]) -> Tuple[Tensor, RoutingTrace]:
    """
    Forward completo da FusionCapsNet.

    Args:
        model: Modelo.
        inputs: Papel → matriz batch × dim (numérico com features brutas).

    Returns:
        (probabilidades batch × N_c, traço de roteamento).
    """
    embeddings = {p: _entrada(inputs, p, model.dims[p]) for p in PAPEIS}
    tamanhos = {p: e.shape[0] for p, e in embeddings.items()}
    if len(set(tamanhos.values())) != 1:
        raise DimensionError(f"Modalidades com números de amostras diferentes: {tamanhos}")
    embeddings["numeric"] = model.numeric_encoder(embeddings["numeric"])

    digitos: Dict[str, CapsuleTensor] = {}
    coeficientes: Dict[str, RoutingCoefficients] = {}
    for papel in PAPEIS:
        digitos[papel], coeficientes[papel] = model.stacks[papel](embeddings[papel])

    z_t = text_confidence(digitos["text_a"], digitos["text_b"])
    z_img = image_confidence(digitos["image"])
    z_n = numeric_confidence(digitos["numeric"])
    g, f = fuse_gate(z_t, z_img, z_n, model)
    probs = softmax(add_bias(matmul(g, model.head_weight), model.head_bias), axis=-1)

    trace = RoutingTrace(
        coefficients=coeficientes,
        confidences={z.modality: z.values.data.copy() for z in (z_t, z_img, z_n)},
        omega={fonte: float(w.item()) for fonte, w in model.omega.items()},
        f=f.data.copy(),
        g=g.data.copy(),
        probs=probs.data.copy(),
        routing_axis=model.config.routing_axis,
    )
    return probs, trace

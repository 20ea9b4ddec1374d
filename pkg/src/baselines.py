"""
Fusões de comparação: adição, concatenação e cross-attention.

Todas partem dos mesmos quatro embeddings, reduzidos a uma dimensão comum
d_f por adaptadores lineares, e terminam num classificador MLP.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.config import PAPEIS
from src.errors import ConfigError, DimensionError
from src.layers import MLP, Dense, ParameterContainer, com_prefixo, glorot_uniform
from src.numerics import Tensor, add, concat, contract, matmul, scale, softmax, stack
from src.run_config import ModelConfig

logger = logging.getLogger(__name__)

ESTRATEGIAS_BASELINE = ("add", "concat", "xattn")


def _validar_adaptados(adapted: Sequence[Tensor]):
    if len(adapted) != len(PAPEIS):
        raise DimensionError(f"Esperados {len(PAPEIS)} vetores adaptados, recebeu {len(adapted)}")
    formas = [t.shape for t in adapted]
    if any(len(f) != 2 for f in formas) or len({f[0] for f in formas}) != 1:
        raise DimensionError(f"Vetores adaptados com formas incompatíveis: {formas}")
    # todas as modalidades na largura de text_a
    largura = formas[0][1]
    for papel, forma in zip(PAPEIS, formas):
        if forma[1] != largura:
            raise DimensionError(
                f"Modalidade '{papel}': vetor adaptado com largura {forma[1]}, esperado {largura} como text_a"
            )


def fuse_add(adapted: Sequence[Tensor]) -> Tensor:
    """Soma elementar dos quatro vetores."""
    _validar_adaptados(adapted)
    fundido = adapted[0]
    for t in adapted[1:]:
        fundido = add(fundido, t)
    return fundido


def fuse_concat(adapted: Sequence[Tensor]) -> Tensor:
    """Concatenação na ordem text_a, text_b, image, numeric."""
    _validar_adaptados(adapted)
    return concat(list(adapted), axis=-1)


@dataclass
class CrossAttentionParams:
    """Matrizes W_Q, W_K, W_V (d_f × d_f) de cada modalidade."""

    queries: Dict[str, Tensor]
    keys: Dict[str, Tensor]
    values: Dict[str, Tensor]

    @classmethod
    def inicializar(cls, d_f: int, rng: np.random.Generator) -> "CrossAttentionParams":
        def _matriz():
            return Tensor(glorot_uniform(rng, (d_f, d_f), d_f, d_f), requires_grad=True)

        queries, keys, values = {}, {}, {}
        for papel in PAPEIS:
            queries[papel] = _matriz()
            keys[papel] = _matriz()
            values[papel] = _matriz()
        return cls(queries, keys, values)

    def named_parameters(self):
        params = OrderedDict()
        for papel in PAPEIS:
            params[f"{papel}.query"] = self.queries[papel]
            params[f"{papel}.key"] = self.keys[papel]
            params[f"{papel}.value"] = self.values[papel]
        return params


def fuse_cross_attention(adapted: Sequence[Tensor],
                         params: CrossAttentionParams) -> Tuple[Tensor, Dict[str, np.ndarray]]:
    """
    Atenção de uma cabeça: cada modalidade consulta as outras três.

    q_m = x_m W_Q,m; chaves e valores das demais modalidades m' usam
    W_K,m' e W_V,m'; α = softmax(q·kᵀ/√d_f); out_m = Σ α v e o vetor
    fundido é a média de out_m sobre m.

    Returns:
        (vetor fundido batch × d_f, pesos de atenção batch × 3 por modalidade).
    """
    _validar_adaptados(adapted)
    x = dict(zip(PAPEIS, adapted))
    d_f = adapted[0].shape[1]
    saidas = []
    pesos = {}
    for papel in PAPEIS:
        outros = [o for o in PAPEIS if o != papel]
        q = matmul(x[papel], params.queries[papel])
        k = stack([matmul(x[o], params.keys[o]) for o in outros], axis=1)
        v = stack([matmul(x[o], params.values[o]) for o in outros], axis=1)
        alfa = softmax(scale(contract("bd,bjd->bj", q, k), 1.0 / np.sqrt(d_f)), axis=-1)
        saidas.append(contract("bj,bjd->bd", alfa, v))
        pesos[papel] = alfa.data.copy()
    return scale(fuse_add(saidas), 1.0 / len(saidas)), pesos


class BaselineModel(ParameterContainer):
    """
    Modelo de comparação com codificador numérico, adaptadores e classificador.

    Args:
        strategy: "add", "concat" ou "xattn".
        dims: Dimensão de entrada de cada papel.
        config: Hiperparâmetros (d_f, camadas numéricas, camada oculta).
        seed: Semente da inicialização.
    """

    def __init__(self, strategy: str, dims: Mapping[str, int], config: ModelConfig, seed: int = 0):
        if strategy not in ESTRATEGIAS_BASELINE:
            raise ConfigError(f"Estratégia de baseline inválida {strategy!r}; opções: {ESTRATEGIAS_BASELINE}")
        faltando = [p for p in PAPEIS if p not in dims]
        if faltando:
            raise DimensionError(f"Dimensões ausentes para {faltando}")
        self.strategy = strategy
        self.config = config
        self.dims = {p: int(dims[p]) for p in PAPEIS}
        rng = np.random.default_rng(seed)
        d_f = config.d_f

        self.numeric_encoder = MLP(
            [self.dims["numeric"], *config.numeric_hidden, config.numeric_embedding_dim], rng
        )
        entradas = dict(self.dims, numeric=config.numeric_embedding_dim)
        self.adapters = OrderedDict((p, Dense(entradas[p], d_f, rng)) for p in PAPEIS)
        self.attention: Optional[CrossAttentionParams] = (
            CrossAttentionParams.inicializar(d_f, rng) if strategy == "xattn" else None
        )
        dim_fundida = len(PAPEIS) * d_f if strategy == "concat" else d_f
        self.classifier = MLP([dim_fundida, config.classifier_hidden, config.n_classes], rng)

        logger.info(f"BaselineModel '{strategy}' inicializado: {self.n_parametros()} parâmetros, d_f={d_f}")

    def named_parameters(self):
        params = com_prefixo("numeric_encoder", self.numeric_encoder.named_parameters())
        for papel, adaptador in self.adapters.items():
            params.update(com_prefixo(f"adapter.{papel}", adaptador.named_parameters()))
        if self.attention is not None:
            params.update(com_prefixo("attention", self.attention.named_parameters()))
        params.update(com_prefixo("classifier", self.classifier.named_parameters()))
        return params

    def adapt(self, inputs: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
        embeddings = {}
        for papel in PAPEIS:
            if papel not in inputs:
                raise DimensionError(f"Modalidade '{papel}' ausente do lote")
            x = np.asarray(inputs[papel], dtype=np.float64)
            if x.ndim != 2 or x.shape[1] != self.dims[papel]:
                raise DimensionError(
                    f"Modalidade '{papel}': forma {x.shape}, modelo espera (batch, {self.dims[papel]})"
                )
            embeddings[papel] = Tensor(x)
        embeddings["numeric"] = self.numeric_encoder(embeddings["numeric"])
        return {p: self.adapters[p](embeddings[p]) for p in PAPEIS}

    def forward(self, inputs: Mapping[str, np.ndarray]) -> Tuple[Tensor, None]:
        adaptados = list(self.adapt(inputs).values())
        if self.strategy == "add":
            fundido = fuse_add(adaptados)
        elif self.strategy == "concat":
            fundido = fuse_concat(adaptados)
        else:
            fundido, _ = fuse_cross_attention(adaptados, self.attention)
        return softmax(self.classifier(fundido), axis=-1), None

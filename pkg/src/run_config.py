"""
Configuração de execução: seções data, model, train, eval e output.

Chaves desconhecidas em qualquer nível são rejeitadas; chaves ausentes
assumem os padrões de src.config.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.config import (
    CAMADA_OCULTA_CLASSIFICADOR,
    CAMADAS_NUMERICAS,
    DIM_CAPSULA_DIGITO,
    DIM_CAPSULA_PRIMARIA,
    DIM_EMBEDDING_NUMERICO,
    DIM_FUSAO_BASELINE,
    EPOCAS,
    ESTRATEGIAS,
    FPR_MAX_PADRAO,
    FRACOES_SPLIT,
    ITERACOES_ROTEAMENTO,
    ITERACOES_ROTEAMENTO_MAX,
    N_CAPSULAS_PRIMARIAS,
    N_CLASSES,
    N_SEEDS_PADRAO,
    OUTPUT_DIR,
    PACIENCIA,
    TAMANHO_LOTE,
    TAXA_APRENDIZADO,
)
from src.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    fusion: str = "capsnet"
    n_classes: int = N_CLASSES
    n_primary_capsules: int = N_CAPSULAS_PRIMARIAS
    primary_dim: int = DIM_CAPSULA_PRIMARIA
    digit_dim: int = DIM_CAPSULA_DIGITO
    routing_iters: int = ITERACOES_ROTEAMENTO
    routing_axis: str = "out"
    apply_squash_primary: bool = True
    share_text_weights: bool = False
    numeric_hidden: List[int] = field(default_factory=lambda: list(CAMADAS_NUMERICAS))
    numeric_embedding_dim: int = DIM_EMBEDDING_NUMERICO
    d_f: int = DIM_FUSAO_BASELINE
    classifier_hidden: int = CAMADA_OCULTA_CLASSIFICADOR

    def __post_init__(self):
        if self.fusion not in ESTRATEGIAS:
            raise ConfigError(f"fusion deve ser um de {ESTRATEGIAS}, recebeu {self.fusion!r}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes deve ser >= 2, recebeu {self.n_classes}")
        if not 1 <= self.routing_iters <= ITERACOES_ROTEAMENTO_MAX:
            raise ConfigError(f"routing_iters fora de [1, {ITERACOES_ROTEAMENTO_MAX}]: {self.routing_iters}")
        if self.routing_axis not in ("out", "in"):
            raise ConfigError(f"routing_axis deve ser 'out' ou 'in', recebeu {self.routing_axis!r}")
        positivos = {
            "n_primary_capsules": self.n_primary_capsules,
            "primary_dim": self.primary_dim,
            "digit_dim": self.digit_dim,
            "numeric_embedding_dim": self.numeric_embedding_dim,
            "d_f": self.d_f,
            "classifier_hidden": self.classifier_hidden,
        }
        for nome, valor in positivos.items():
            if int(valor) < 1:
                raise ConfigError(f"{nome} deve ser positivo, recebeu {valor}")
        if any(int(h) < 1 for h in self.numeric_hidden):
            raise ConfigError(f"numeric_hidden com dimensão não positiva: {self.numeric_hidden}")
        self.numeric_hidden = [int(h) for h in self.numeric_hidden]


@dataclass
class TrainConfig:
    epochs: int = EPOCAS
    batch_size: int = TAMANHO_LOTE
    learning_rate: float = TAXA_APRENDIZADO
    optimizer: str = "adam"
    class_weights: Union[str, List[float]] = "auto"
    seed: int = 0
    patience: int = PACIENCIA
    split: List[float] = field(default_factory=lambda: list(FRACOES_SPLIT))
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs e batch_size devem ser positivos: {self.epochs}, {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate deve ser positivo: {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer deve ser 'adam' ou 'sgd', recebeu {self.optimizer!r}")
        if self.loss not in ("cross_entropy", "margin"):
            raise ConfigError(f"loss deve ser 'cross_entropy' ou 'margin', recebeu {self.loss!r}")
        if self.patience < 0:
            raise ConfigError(f"patience não pode ser negativa: {self.patience}")
        if isinstance(self.class_weights, str):
            if self.class_weights != "auto":
                raise ConfigError(f"class_weights deve ser 'auto' ou uma lista: {self.class_weights!r}")
        elif any(w <= 0 for w in self.class_weights):
            raise ConfigError(f"class_weights devem ser positivos: {self.class_weights}")
        if len(self.split) != 3 or any(f <= 0 for f in self.split):
            raise ConfigError(f"split deve ter três frações positivas: {self.split}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"frações do split devem somar 1: {self.split}")
        self.split = [float(f) for f in self.split]


@dataclass
class EvalConfig:
    fpr_max: float = FPR_MAX_PADRAO
    n_seeds: int = N_SEEDS_PADRAO

    def __post_init__(self):
        if not 0 < self.fpr_max <= 1:
            raise ConfigError(f"fpr_max deve estar em (0, 1]: {self.fpr_max}")
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds deve ser positivo: {self.n_seeds}")


@dataclass
class DataConfig:
    path: Optional[str] = None


@dataclass
class OutputConfig:
    directory: str = str(OUTPUT_DIR)


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


SECOES = {
    "data": DataConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "output": OutputConfig,
}


def secao_de_dict(cls, dados: Dict[str, Any], secao: str):
    """Instancia uma seção rejeitando chaves desconhecidas."""
    if not isinstance(dados, dict):
        raise ConfigError(f"Seção '{secao}' deve ser um objeto JSON")
    conhecidas = {f.name for f in fields(cls)}
    desconhecidas = sorted(set(dados) - conhecidas)
    if desconhecidas:
        raise ConfigError(f"Chaves desconhecidas em '{secao}': {desconhecidas}")
    try:
        return cls(**dados)
    except TypeError as e:
        raise ConfigError(f"Seção '{secao}' inválida: {e}")


def run_config_de_dict(dados: Dict[str, Any]) -> RunConfig:
    if not isinstance(dados, dict):
        raise ConfigError("Configuração deve ser um objeto JSON")
    desconhecidas = sorted(set(dados) - set(SECOES))
    if desconhecidas:
        raise ConfigError(f"Seções desconhecidas: {desconhecidas}")
    return RunConfig(**{nome: secao_de_dict(cls, dados.get(nome, {}), nome)
                        for nome, cls in SECOES.items()})


def carregar_run_config(caminho: Path) -> RunConfig:
    """
    Lê um RunConfig de um arquivo JSON.

    Args:
        caminho: Caminho do JSON.

    Returns:
        RunConfig validado.
    """
    caminho = Path(caminho)
    if not caminho.exists():
        raise ConfigError(f"Arquivo de configuração não encontrado: {caminho}")
    try:
        dados = json.loads(caminho.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON inválido em {caminho}: {e}")
    config = run_config_de_dict(dados)
    logger.info(f"✓ Configuração carregada: {caminho.name} (fusion={config.model.fusion})")
    return config

"""
Treinamento: perdas, otimizadores, split estratificado, laço de
mini-lotes com early stopping, avaliação e execução multi-seed.
"""

import logging
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.baselines import BaselineModel
from src.config import (
    ADAM_BETAS,
    ADAM_EPS,
    ENV_THREADS,
    EPS_LOG,
    FPR_MAX_PADRAO,
    LAMBDA_MARGEM,
    MARGEM_NEGATIVA,
    MARGEM_POSITIVA,
    SGD_MOMENTO,
)
from src.dataset import MultimodalDataset
from src.errors import ConfigError, ContractError, DimensionError, UndefinedMetricError
from src.fusion import FusionModel
from src.layers import Dense, ParameterContainer
from src.metrics import MetricReport, best_threshold, build_report, roc_auc
from src.numerics import (
    Tensor,
    add,
    add_scalar,
    backward,
    log,
    mean,
    mul,
    no_grad,
    relu,
    scale,
    softmax,
    sum_,
)
from src.run_config import ModelConfig, RunConfig, TrainConfig

logger = logging.getLogger(__name__)

Modelo = Union[FusionModel, BaselineModel, "ProbeModel"]


# Perdas

def _validar_rotulos(probs: Tensor, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise ContractError("Lote vazio")
    if probs.ndim != 2 or probs.shape[0] != labels.size:
        raise DimensionError(f"probs {probs.shape} incompatível com {labels.size} rótulos")
    n_c = probs.shape[1]
    if labels.min() < 0 or labels.max() >= n_c:
        raise ContractError(f"Rótulo fora de [0, {n_c - 1}]: {labels.min()}..{labels.max()}")
    return labels.astype(np.int64)


def compute_class_weights(labels: Sequence[int], n_classes: int = 2) -> np.ndarray:
    """
    Pesos inversos à frequência: w_c = B / (N_c · count_c).

    Args:
        labels: Rótulos do conjunto de treino.
        n_classes: Número de classes.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    contagens = np.bincount(labels, minlength=n_classes)
    if (contagens == 0).any():
        raise UndefinedMetricError(f"Classe ausente no treino: contagens {contagens.tolist()}")
    return labels.size / (n_classes * contagens.astype(np.float64))


def _one_hot(labels: np.ndarray, n_c: int) -> np.ndarray:
    return np.eye(n_c)[labels]


def weighted_cross_entropy(probs: Tensor, labels: np.ndarray, weights: Sequence[float]) -> Tensor:
    """−(1/B)·Σ w_y·ln(p[b, y] + 1e-12)."""
    labels = _validar_rotulos(probs, labels)
    w = np.asarray(weights, dtype=np.float64)[labels]
    escolhida = sum_(mul(probs, Tensor(_one_hot(labels, probs.shape[1]))), axis=-1)
    termos = mul(log(add_scalar(escolhida, EPS_LOG)), Tensor(w))
    return scale(sum_(termos), -1.0 / labels.size)


def margin_loss(probs: Tensor, labels: np.ndarray, weights: Sequence[float],
                m_pos: float = MARGEM_POSITIVA, m_neg: float = MARGEM_NEGATIVA,
                lam: float = LAMBDA_MARGEM) -> Tensor:
    """
    Margin loss das redes de cápsulas sobre as probabilidades de classe.

    L_b = w_y · Σ_c [T_c·max(0, m⁺ − p_c)² + λ·(1 − T_c)·max(0, p_c − m⁻)²]
    """
    labels = _validar_rotulos(probs, labels)
    alvo = _one_hot(labels, probs.shape[1])
    faltante = relu(add_scalar(scale(probs, -1.0), m_pos))
    excesso = relu(add_scalar(probs, -m_neg))
    termos = sum_(mul(Tensor(alvo), mul(faltante, faltante)), axis=-1)
    termos_neg = sum_(mul(Tensor(lam * (1.0 - alvo)), mul(excesso, excesso)), axis=-1)
    w = Tensor(np.asarray(weights, dtype=np.float64)[labels])
    return mean(mul(add(termos, termos_neg), w))


PERDAS = {"cross_entropy": weighted_cross_entropy, "margin": margin_loss}


# Otimizadores

@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, Optional[np.ndarray]],
              state: AdamState, lr: float, betas: Tuple[float, float] = ADAM_BETAS,
              eps: float = ADAM_EPS) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    Um passo de Adam com correção de viés.

    Gradiente ausente conta como zero.

    Returns:
        (novos parâmetros, novo estado).
    """
    b1, b2 = betas
    t = state.t + 1
    novos, m_novo, v_novo = {}, {}, {}
    for nome, p in params.items():
        if state.m[nome].shape != p.shape:
            raise ContractError(f"Estado de Adam com forma {state.m[nome].shape} para '{nome}' {p.shape}")
        g = grads.get(nome)
        if g is None:
            g = np.zeros_like(p)
        m = b1 * state.m[nome] + (1.0 - b1) * g
        v = b2 * state.v[nome] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        novos[nome] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_novo[nome], v_novo[nome] = m, v
    return novos, AdamState(m_novo, v_novo, t)


class Adam:
    """Adam sobre os parâmetros de um ParameterContainer."""

    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float):
        self.params = params
        self.lr = lr
        self.state = AdamState.zeros({k: p.data for k, p in params.items()})

    def step(self):
        novos, self.state = adam_step({k: p.data for k, p in self.params.items()},
                                      {k: p.grad for k, p in self.params.items()},
                                      self.state, self.lr)
        for nome, p in self.params.items():
            p.data = novos[nome]


class SGD:
    """SGD com momento."""

    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float, momentum: float = SGD_MOMENTO):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocidade = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        for nome, p in self.params.items():
            if p.grad is None:
                continue
            self.velocidade[nome] = self.momentum * self.velocidade[nome] + p.grad
            p.data = p.data - self.lr * self.velocidade[nome]


def criar_otimizador(model: ParameterContainer, config: TrainConfig):
    params = model.parameters()
    if config.optimizer == "adam":
        return Adam(params, config.learning_rate)
    return SGD(params, config.learning_rate)


# Split e registro de treino

@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def stratified_split(labels: Sequence[int], fractions: Sequence[float], seed: int) -> SplitIndices:
    """
    Divide índices por classe nas frações treino/validação/teste.

    Cada classe é embaralhada com o seed; validação e teste recebem
    round(fração · contagem) amostras da classe e o treino fica com o resto.
    """
    labels = np.asarray(labels).reshape(-1)
    rng = np.random.default_rng(seed)
    partes: Dict[str, List[np.ndarray]] = {"train": [], "val": [], "test": []}
    for classe in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == classe))
        n_val = int(round(fractions[1] * idx.size))
        n_test = int(round(fractions[2] * idx.size))
        partes["val"].append(idx[:n_val])
        partes["test"].append(idx[n_val:n_val + n_test])
        partes["train"].append(idx[n_val + n_test:])
    return SplitIndices(**{k: np.sort(np.concatenate(v)).astype(np.int64) for k, v in partes.items()})


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_auc: float


@dataclass
class TrainLog:
    """Registros por época e o relatório final de teste."""

    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    test_report: Optional[MetricReport] = None
    split: Optional[SplitIndices] = None

    def append(self, registro: EpochRecord):
        if self.records and registro.epoch <= self.records[-1].epoch:
            raise ContractError(f"Épocas devem ser crescentes: {registro.epoch} após {self.records[-1].epoch}")
        self.records.append(registro)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records],
                            columns=["epoch", "train_loss", "val_loss", "val_auc"])

    def __eq__(self, outro) -> bool:
        if not isinstance(outro, TrainLog):
            return NotImplemented
        return self.records == outro.records and self.best_epoch == outro.best_epoch


# Modelos

class ProbeModel(ParameterContainer):
    """Sonda logística sobre uma única modalidade (camada densa + softmax)."""

    strategy = "probe"

    def __init__(self, role: str, dim: int, n_classes: int = 2, seed: int = 0):
        self.role = role
        self.n_classes = n_classes
        self.dims = {role: int(dim)}
        self.linear = Dense(dim, n_classes, np.random.default_rng(seed))

    def named_parameters(self):
        return self.linear.named_parameters()

    def forward(self, inputs: Mapping[str, np.ndarray]) -> Tuple[Tensor, None]:
        x = np.asarray(inputs[self.role], dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dims[self.role]:
            raise DimensionError(f"Modalidade '{self.role}': forma {x.shape}, sonda espera {self.dims[self.role]}")
        return softmax(self.linear(Tensor(x)), axis=-1), None


def build_model(config: ModelConfig, dims: Mapping[str, int], seed: int = 0) -> Modelo:
    if config.fusion == "capsnet":
        return FusionModel(config, dims, seed)
    return BaselineModel(config.fusion, dims, config, seed)


def _checar_dims(model: Modelo, dataset: MultimodalDataset):
    dims = dataset.dims()
    for papel, dim in model.dims.items():
        if dims.get(papel) != dim:
            raise DimensionError(f"Modalidade '{papel}': dataset tem dim {dims.get(papel)}, modelo espera {dim}")


def _exigir_classes(nome: str, labels: np.ndarray):
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetricError(f"Partição '{nome}' com uma só classe ({n_pos}/{labels.size} positivos)")


def predict_proba(model: Modelo, dataset: MultimodalDataset, indices: np.ndarray,
                  batch_size: int = 256) -> np.ndarray:
    """Probabilidades das amostras `indices`, sem gravar o grafo."""
    blocos = []
    with no_grad():
        for inicio in range(0, len(indices), batch_size):
            lote = dataset.batch(indices[inicio:inicio + batch_size])
            probs, _ = model.forward(lote.inputs)
            blocos.append(probs.data)
    return np.concatenate(blocos, axis=0)


def predict_scores(model: Modelo, dataset: MultimodalDataset, indices: np.ndarray) -> np.ndarray:
    return predict_proba(model, dataset, indices)[:, 1]


def _perda_avaliacao(model: Modelo, dataset: MultimodalDataset, indices: np.ndarray,
                     pesos: np.ndarray, funcao_perda) -> Tuple[float, np.ndarray]:
    probs = predict_proba(model, dataset, indices)
    with no_grad():
        perda = funcao_perda(Tensor(probs), dataset.labels[indices].astype(np.int64), pesos).item()
    return perda, probs[:, 1]


def train(model: Modelo, dataset: MultimodalDataset, config: TrainConfig) -> Tuple[Modelo, TrainLog]:
    """
    Treina o modelo em mini-lotes embaralhados por época.

    Com patience > 0 o treino para após `patience` épocas sem melhora da
    AUC de validação e restaura os parâmetros da melhor época. Com
    patience = 0 roda todas as épocas e mantém os parâmetros finais.

    Args:
        model: Modelo a treinar (alterado no lugar).
        dataset: Dataset completo; o split usa config.split e config.seed.
        config: Hiperparâmetros de treino.

    Returns:
        (modelo treinado, TrainLog com o split usado).
    """
    _checar_dims(model, dataset)
    split = stratified_split(dataset.labels, config.split, config.seed)
    if split.train.size < config.batch_size:
        raise ContractError(
            f"Treino com {split.train.size} amostras, menor que um lote de {config.batch_size}"
        )
    for nome in ("train", "val"):
        _exigir_classes(nome, dataset.labels[getattr(split, nome)])

    n_c = model.n_classes if isinstance(model, ProbeModel) else model.config.n_classes
    if config.class_weights == "auto":
        pesos = compute_class_weights(dataset.labels[split.train], n_c)
    else:
        pesos = np.asarray(config.class_weights, dtype=np.float64)
        if pesos.size != n_c:
            raise ConfigError(f"class_weights com {pesos.size} valores para {n_c} classes")
    funcao_perda = PERDAS[config.loss]
    otimizador = criar_otimizador(model, config)
    rng = np.random.default_rng([config.seed, 1])
    log_treino = TrainLog(split=split)

    melhor_auc = -np.inf
    melhor_estado = None
    sem_melhora = 0
    logger.info(
        f"Treinando {model.strategy}: {split.train.size}/{split.val.size}/{split.test.size} amostras, "
        f"pesos={np.round(pesos, 4).tolist()}, seed={config.seed}"
    )

    for epoca in range(1, config.epochs + 1):
        ordem = split.train[rng.permutation(split.train.size)]
        soma_perda = 0.0
        for inicio in range(0, ordem.size, config.batch_size):
            lote = dataset.batch(ordem[inicio:inicio + config.batch_size])
            probs, _ = model.forward(lote.inputs)
            perda = funcao_perda(probs, lote.labels, pesos)
            model.zero_grad()
            backward(perda)
            otimizador.step()
            soma_perda += perda.item() * len(lote)
            logger.debug(f"  época {epoca}, lote {inicio // config.batch_size}: perda={perda.item():.6f}")

        perda_val, scores_val = _perda_avaliacao(model, dataset, split.val, pesos, funcao_perda)
        auc_val = roc_auc(scores_val, dataset.labels[split.val])
        log_treino.append(EpochRecord(epoca, soma_perda / ordem.size, perda_val, auc_val))
        logger.info(
            f"Época {epoca}/{config.epochs}: train_loss={soma_perda / ordem.size:.6f} "
            f"val_loss={perda_val:.6f} val_auc={auc_val:.4f}"
        )

        if config.patience == 0:
            continue
        if auc_val > melhor_auc:
            melhor_auc = auc_val
            melhor_estado = model.state_dict()
            log_treino.best_epoch = epoca
            sem_melhora = 0
        else:
            sem_melhora += 1
            if sem_melhora >= config.patience:
                logger.info(f"Early stopping na época {epoca} (melhor: {log_treino.best_epoch})")
                break

    if melhor_estado is not None:
        model.load_state_dict(melhor_estado)
    else:
        log_treino.best_epoch = log_treino.records[-1].epoch
    logger.info(f"✓ Treino concluído: melhor época {log_treino.best_epoch}")
    return model, log_treino


def evaluate(model: Modelo, dataset: MultimodalDataset, split: SplitIndices,
             fpr_max: float = FPR_MAX_PADRAO) -> MetricReport:
    """
    Avalia no teste com o limiar de melhor F1 escolhido na validação.

    Args:
        model: Modelo treinado.
        dataset: Dataset completo.
        split: Índices de validação e teste.
        fpr_max: Limite da faixa do pAUC.
    """
    _checar_dims(model, dataset)
    for nome in ("val", "test"):
        _exigir_classes(nome, dataset.labels[getattr(split, nome)])
    limiar = best_threshold(predict_scores(model, dataset, split.val), dataset.labels[split.val])
    relatorio = build_report(predict_scores(model, dataset, split.test), dataset.labels[split.test],
                             limiar, fpr_max)
    logger.info(
        f"✓ Avaliação: AUC={relatorio.auc:.4f} pAUC={relatorio.pauc_standardized:.4f} "
        f"F1={relatorio.f1:.4f} (limiar {limiar:.4f})"
    )
    return relatorio


# Execução multi-seed

@dataclass
class SeedResult:
    seed: int
    report: MetricReport
    log: TrainLog
    model: Modelo


def run_seed(dataset: MultimodalDataset, config: RunConfig, seed: int) -> SeedResult:
    """Constrói, treina e avalia um modelo com um seed."""
    train_config = replace(config.train, seed=seed)
    model = build_model(config.model, dataset.dims(), seed)
    model, log_treino = train(model, dataset, train_config)
    log_treino.test_report = evaluate(model, dataset, log_treino.split, config.eval.fpr_max)
    return SeedResult(seed, log_treino.test_report, log_treino, model)


def workers_configurados() -> int:
    valor = os.environ.get(ENV_THREADS, "1")
    try:
        workers = int(valor)
    except ValueError:
        raise ConfigError(f"{ENV_THREADS} deve ser inteiro, recebeu {valor!r}")
    if workers < 1:
        raise ConfigError(f"{ENV_THREADS} deve ser >= 1, recebeu {workers}")
    return workers


def run_seeds(dataset: MultimodalDataset, config: RunConfig, seeds: Sequence[int],
              workers: Optional[int] = None) -> List[SeedResult]:
    """
    Executa um seed por tarefa isolada e devolve os resultados ordenados por seed.

    Args:
        dataset: Dataset completo.
        config: Configuração da execução.
        seeds: Seeds a executar.
        workers: Processos simultâneos; por padrão CAPSFUSE_THREADS (1 = sequencial).
    """
    workers = workers_configurados() if workers is None else workers
    workers = max(1, min(workers, len(seeds)))
    logger.info(f"Executando {len(seeds)} seeds ({config.model.fusion}) com {workers} worker(s)")
    if workers == 1:
        resultados = [run_seed(dataset, config, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futuros = [executor.submit(run_seed, dataset, config, s) for s in seeds]
            resultados = [f.result() for f in futuros]
    return sorted(resultados, key=lambda r: r.seed)


def linear_probe(dataset: MultimodalDataset, role: str, config: TrainConfig,
                 fpr_max: float = FPR_MAX_PADRAO) -> MetricReport:
    """
    Treina uma sonda logística em uma modalidade e devolve o relatório de teste.

    Usa o mesmo split, otimizador e perda do treino multimodal.
    """
    dims = dataset.dims()
    if role not in dims:
        raise ConfigError(f"Modalidade desconhecida {role!r}; opções: {list(dims)}")
    sonda = ProbeModel(role, dims[role], seed=config.seed)
    sonda, log_treino = train(sonda, dataset, config)
    relatorio = evaluate(sonda, dataset, log_treino.split, fpr_max)
    logger.info(f"✓ Sonda linear '{role}': AUC={relatorio.auc:.4f}")
    return relatorio

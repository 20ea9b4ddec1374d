"""
Categorias de notícias: agregação de sentimento, matriz de similaridade
por cosseno e seleção de categorias semanticamente independentes.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from src.errors import ConfigError, DatasetValidationError, InvalidMatrixError

logger = logging.getLogger(__name__)

TOLERANCIA_MATRIZ = 1e-9
REGRAS_SELECAO = ("anchor_distinct", "min_pair")


@dataclass
class SimilarityMatrix:
    """
    Matriz k × k de similaridades entre categorias.

    Args:
        names: Nomes das categorias, na ordem das linhas e colunas.
        values: Matriz simétrica, diagonal unitária, valores em [-1, 1].
    """

    names: List[str]
    values: np.ndarray

    def __post_init__(self):
        self.names = [str(n) for n in self.names]
        self.values = np.asarray(self.values, dtype=np.float64)
        self.validar()

    def validar(self):
        k = len(self.names)
        if self.values.shape != (k, k):
            raise InvalidMatrixError(f"Matriz {self.values.shape} para {k} categorias")
        if len(set(self.names)) != k:
            raise InvalidMatrixError(f"Nomes de categoria repetidos: {self.names}")
        if not np.isfinite(self.values).all():
            raise InvalidMatrixError("Matriz com valores não finitos")
        assimetria = np.abs(self.values - self.values.T)
        if assimetria.max(initial=0.0) > TOLERANCIA_MATRIZ:
            i, j = np.unravel_index(np.argmax(assimetria), assimetria.shape)
            raise InvalidMatrixError(
                f"Matriz não simétrica em ({self.names[i]}, {self.names[j]}): "
                f"{self.values[i, j]} vs {self.values[j, i]}"
            )
        desvio_diagonal = np.abs(np.diag(self.values) - 1.0)
        if desvio_diagonal.max(initial=0.0) > TOLERANCIA_MATRIZ:
            i = int(np.argmax(desvio_diagonal))
            raise InvalidMatrixError(f"Diagonal não unitária em {self.names[i]}: {self.values[i, i]}")
        if (np.abs(self.values) > 1.0 + TOLERANCIA_MATRIZ).any():
            raise InvalidMatrixError("Similaridades fora de [-1, 1]")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.names, columns=self.names)


@dataclass
class SentimentTable:
    """Categoria → lista de scores compostos por documento, em [-1, 1]."""

    scores: Dict[str, List[float]] = field(default_factory=dict)

    def __post_init__(self):
        for categoria, valores in self.scores.items():
            arr = np.asarray(valores, dtype=np.float64)
            if not np.isfinite(arr).all() or (np.abs(arr) > 1.0).any():
                raise DatasetValidationError(f"Categoria '{categoria}': scores fora de [-1, 1]")


def aggregate_sentiment(table: SentimentTable) -> Dict[str, float]:
    """
    Média aritmética dos scores de cada categoria.

    Args:
        table: Scores por categoria.

    Returns:
        Dicionário {categoria: média}, na ordem da tabela.
    """
    medias = {}
    for categoria, valores in table.scores.items():
        if len(valores) == 0:
            raise DatasetValidationError(f"Categoria '{categoria}' sem documentos")
        medias[categoria] = float(pd.Series(valores, dtype="float64").mean())
    logger.info(f"✓ Sentimento agregado: {len(medias)} categorias")
    return medias


def ler_tabela_sentimento(caminho: Path) -> SentimentTable:
    """Lê CSV largo: uma coluna por categoria, um score de documento por linha."""
    df = pd.read_csv(caminho)
    scores = {str(coluna): df[coluna].dropna().astype(float).tolist() for coluna in df.columns}
    return SentimentTable(scores)


def cosine_matrix(embeddings: Mapping[str, Sequence[float]]) -> SimilarityMatrix:
    nomes = list(embeddings)
    if len(nomes) < 1:
        raise DatasetValidationError("Nenhuma categoria informada")
    try:
        vetores = np.stack([np.asarray(embeddings[n], dtype=np.float64) for n in nomes])
    except ValueError:
        raise DatasetValidationError("Embeddings de categoria com dimensões diferentes")
    normas = np.linalg.norm(vetores, axis=1)
    if (normas == 0).any():
        raise DatasetValidationError(f"Vetor nulo na categoria '{nomes[int(np.argmin(normas))]}'")
    unitarios = vetores / normas[:, None]
    valores = np.clip(unitarios @ unitarios.T, -1.0, 1.0)
    valores = 0.5 * (valores + valores.T)
    np.fill_diagonal(valores, 1.0)
    return SimilarityMatrix(nomes, valores)


def ler_matriz_similaridade(caminho: Path) -> SimilarityMatrix:
    """CSV com cabeçalho de categorias e a primeira coluna com os nomes das linhas."""
    df = pd.read_csv(caminho, index_col=0)
    linhas = [str(n).strip() for n in df.index]
    colunas = [str(n).strip() for n in df.columns]
    if linhas != colunas:
        raise InvalidMatrixError(f"Linhas {linhas} não correspondem às colunas {colunas}")
    try:
        valores = df.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise InvalidMatrixError(f"Valor não numérico na matriz: {e}")
    return SimilarityMatrix(colunas, valores)


def ler_embeddings_categorias(caminho: Path) -> Dict[str, np.ndarray]:
    """CSV largo: uma coluna por categoria, uma dimensão do embedding por linha."""
    df = pd.read_csv(caminho)
    if df.isna().any().any():
        raise DatasetValidationError(f"{Path(caminho).name}: embeddings com valores ausentes")
    return {str(c): df[c].to_numpy(dtype=np.float64) for c in df.columns}


def _par_ordenado(a: str, b: str) -> Tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def select_categories(m: SimilarityMatrix, rule: str = "anchor_distinct") -> Tuple[Tuple[str, str], Dict]:
    """
    Seleciona duas categorias e monta o relatório de ranking.

    anchor_distinct: âncora = maior similaridade média fora da diagonal,
    complemento = menor média. min_pair: o par não ordenado de menor
    similaridade. Empates resolvidos pela ordem lexicográfica dos nomes.

    Returns:
        (par selecionado, relatório com médias, par máximo e par mínimo).
    """
    if rule not in REGRAS_SELECAO:
        raise ConfigError(f"Regra de seleção inválida {rule!r}; opções: {REGRAS_SELECAO}")
    k = len(m.names)
    if k < 2:
        raise DatasetValidationError("Seleção exige pelo menos duas categorias")

    fora_diagonal = ~np.eye(k, dtype=bool)
    medias = {nome: float(m.values[i][fora_diagonal[i]].mean()) for i, nome in enumerate(m.names)}

    pares = []
    for i in range(k):
        for j in range(i + 1, k):
            pares.append((float(m.values[i, j]), _par_ordenado(m.names[i], m.names[j])))
    par_min = min(pares, key=lambda p: (p[0], p[1]))
    par_max = min(pares, key=lambda p: (-p[0], p[1]))

    por_media = sorted(medias.items(), key=lambda kv: (-kv[1], kv[0]))
    ancora = por_media[0][0]
    restantes = [(nome, media) for nome, media in medias.items() if nome != ancora]
    complemento = min(restantes, key=lambda kv: (kv[1], kv[0]))[0]

    selecionado = (ancora, complemento) if rule == "anchor_distinct" else par_min[1]
    relatorio = {
        "rule": rule,
        "selected": list(selecionado),
        "mean_similarity": [{"category": nome, "mean": media} for nome, media in por_media],
        "max_pair": {"pair": list(par_max[1]), "similarity": par_max[0]},
        "min_pair": {"pair": list(par_min[1]), "similarity": par_min[0]},
    }
    logger.info(f"✓ Categorias selecionadas ({rule}): {selecionado[0]} e {selecionado[1]}")
    return selecionado, relatorio

"""
Módulo de análises e consolidações dos resultados por seed e por estratégia.
"""

import logging
from typing import Dict, List, Sequence

import pandas as pd

from src.metrics import MetricReport

logger = logging.getLogger(__name__)

METRICAS_AGREGADAS = {"auc": "auc", "pauc": "pauc_std", "f1": "f1"}


def linhas_por_seed(seeds: Sequence[int], reports: Sequence[MetricReport]) -> List[Dict]:
    return [
        {"seed": int(seed), "auc": r.auc, "pauc_std": r.pauc_standardized, "f1": r.f1, "threshold": r.threshold}
        for seed, r in zip(seeds, reports)
    ]


def agregar(per_seed: List[Dict]) -> Dict[str, float]:
    """
    Média e desvio padrão amostral (ddof=1) de cada métrica.

    Com um único seed o desvio é 0.

    Args:
        per_seed: Linhas de `linhas_por_seed`.

    Returns:
        Dicionário {auc_mean, auc_std, pauc_mean, pauc_std, f1_mean, f1_std}.
    """
    df = pd.DataFrame(per_seed)
    agregado = {}
    for nome, coluna in METRICAS_AGREGADAS.items():
        agregado[f"{nome}_mean"] = float(df[coluna].mean())
        agregado[f"{nome}_std"] = float(pd.Series([df[coluna].std(ddof=1)]).fillna(0.0).iloc[0])
    return agregado


def montar_relatorio(strategy: str, seeds: Sequence[int], reports: Sequence[MetricReport]) -> Dict:
    per_seed = linhas_por_seed(seeds, reports)
    relatorio = {
        "strategy": strategy,
        "seeds": [int(s) for s in seeds],
        "per_seed": per_seed,
        "aggregate": agregar(per_seed),
    }
    logger.info(
        f"✓ Relatório '{strategy}': AUC {relatorio['aggregate']['auc_mean']:.4f} "
        f"± {relatorio['aggregate']['auc_std']:.4f} ({len(seeds)} seeds)"
    )
    return relatorio


class ResultsAnalyzer:
    """Classe para comparar relatórios de várias estratégias de fusão."""

    def __init__(self, relatorios: List[Dict]):
        """
        Inicializa o analisador.

        Args:
            relatorios: Relatórios JSON de treino, um por estratégia.
        """
        self.relatorios = relatorios

        logger.info(f"Analisador inicializado: {len(relatorios)} relatórios")

    def gerar_tabela_comparativa(self) -> pd.DataFrame:
        """
        Gera a tabela estratégia × métricas (média e desvio).

        Returns:
            DataFrame ordenado por AUC média decrescente.
        """
        logger.info("Gerando tabela comparativa...")

        if not self.relatorios:
            return pd.DataFrame()

        linhas = [{"strategy": r["strategy"], "n_seeds": len(r["seeds"]), **r["aggregate"]}
                  for r in self.relatorios]
        df = pd.DataFrame(linhas).sort_values(["auc_mean", "strategy"], ascending=[False, True])
        df = df.reset_index(drop=True)

        logger.info(f"✓ Tabela comparativa gerada: {len(df)} estratégias")
        return df

    def gerar_tabelas_por_seed(self) -> Dict[str, pd.DataFrame]:
        return {r["strategy"]: pd.DataFrame(r["per_seed"]) for r in self.relatorios}

    def gerar_markdown(self, casas: int = 3) -> str:
        """Tabela Markdown com colunas AUC, pAUC e F1 no formato média ± desvio."""
        df = self.gerar_tabela_comparativa()
        linhas = ["| Fusion strategy | AUC | pAUC | F1 |", "|---|---|---|---|"]
        for _, r in df.iterrows():
            celulas = [f"{r[f'{m}_mean']:.{casas}f} ± {r[f'{m}_std']:.{casas}f}" for m in METRICAS_AGREGADAS]
            linhas.append(f"| {r['strategy']} | " + " | ".join(celulas) + " |")
        return "\n".join(linhas) + "\n"

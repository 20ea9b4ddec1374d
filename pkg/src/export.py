"""
Módulo para exportação de resultados em JSON, CSV, JSONL, Markdown e Excel.

Toda escrita é atômica: o conteúdo vai para um arquivo temporário no mesmo
diretório e depois substitui o destino com os.replace.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping

import pandas as pd

logger = logging.getLogger(__name__)


def escrever_bytes_atomico(caminho: Path, conteudo: bytes):
    """
    Grava bytes de forma atômica.

    Args:
        caminho: Destino final.
        conteudo: Bytes a gravar.
    """
    caminho = Path(caminho)
    caminho.parent.mkdir(parents=True, exist_ok=True)
    fd, temporario = tempfile.mkstemp(dir=caminho.parent, prefix=f".{caminho.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(conteudo)
        os.replace(temporario, caminho)
    except BaseException:
        if os.path.exists(temporario):
            os.remove(temporario)
        raise


def escrever_texto_atomico(caminho: Path, texto: str):
    escrever_bytes_atomico(caminho, texto.encode("utf-8"))


def json_deterministico(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


class ReportExporter:
    """Classe para exportar relatórios e artefatos de execução."""

    def __init__(self, output_dir: Path):
        """
        Inicializa o exportador.

        Args:
            output_dir: Diretório para salvar os arquivos.
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        logger.info(f"Exportador inicializado: {self.output_dir}")

    def _caminho(self, nome_arquivo: str) -> Path:
        caminho = Path(nome_arquivo)
        return caminho if caminho.is_absolute() else self.output_dir / caminho

    def exportar_json(self, obj: Any, nome_arquivo: str) -> Path:
        caminho = self._caminho(nome_arquivo)
        escrever_texto_atomico(caminho, json_deterministico(obj))
        logger.info(f"✓ JSON exportado: {caminho.name}")
        return caminho

    def exportar_csv(self, df: pd.DataFrame, nome_arquivo: str) -> Path:
        """
        Exporta DataFrame para CSV.

        Args:
            df: DataFrame a exportar.
            nome_arquivo: Nome do arquivo (com extensão).
        """
        caminho = self._caminho(nome_arquivo)
        if df.empty:
            logger.warning(f"DataFrame vazio, exportando apenas o cabeçalho: {caminho.name}")
        escrever_texto_atomico(caminho, df.to_csv(index=False, lineterminator="\n"))
        logger.info(f"✓ CSV exportado: {caminho.name} ({len(df)} linhas)")
        return caminho

    def exportar_jsonl(self, registros: Iterable[Mapping[str, Any]], nome_arquivo: str) -> Path:
        caminho = self._caminho(nome_arquivo)
        linhas = [json.dumps(r, ensure_ascii=False, allow_nan=False) for r in registros]
        escrever_texto_atomico(caminho, "".join(f"{linha}\n" for linha in linhas))
        logger.info(f"✓ JSONL exportado: {caminho.name} ({len(linhas)} registros)")
        return caminho

    def exportar_markdown(self, texto: str, nome_arquivo: str) -> Path:
        caminho = self._caminho(nome_arquivo)
        escrever_texto_atomico(caminho, texto)
        logger.info(f"✓ Markdown exportado: {caminho.name}")
        return caminho

    def exportar_excel(self, dados: Dict[str, pd.DataFrame], nome_arquivo: str) -> Path:
        """
        Exporta múltiplos DataFrames para Excel com abas.

        Args:
            dados: Dicionário {nome_aba: DataFrame}.
            nome_arquivo: Nome do arquivo Excel.
        """
        caminho = self._caminho(nome_arquivo)
        caminho.parent.mkdir(parents=True, exist_ok=True)
        fd, temporario = tempfile.mkstemp(dir=caminho.parent, prefix=f".{caminho.name}.", suffix=".xlsx")
        os.close(fd)

        logger.info(f"Exportando Excel: {caminho.name}")

        try:
            with pd.ExcelWriter(temporario, engine="openpyxl") as writer:
                for nome_aba, df in dados.items():
                    if df.empty:
                        logger.warning(f"Aba '{nome_aba}' vazia, pulando")
                        continue

                    # Limitar nome da aba a 31 caracteres (limite do Excel)
                    nome_aba_limpo = nome_aba[:31]

                    df.to_excel(writer, sheet_name=nome_aba_limpo, index=False)
                    logger.info(f"  ✓ Aba '{nome_aba_limpo}': {len(df)} linhas")
            os.replace(temporario, caminho)
        except BaseException:
            if os.path.exists(temporario):
                os.remove(temporario)
            raise

        logger.info(f"✓ Excel exportado: {caminho.name}")
        return caminho

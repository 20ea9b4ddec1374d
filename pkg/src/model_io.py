"""
Arquivos de modelo CFMD: cabeçalho JSON + parâmetros float64 little-endian.
"""

import json
import logging
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from src.config import MAGIC_MODELO, VERSAO_FORMATO
from src.errors import DatasetCorruptionError, DatasetFormatError
from src.export import escrever_bytes_atomico
from src.run_config import ModelConfig, secao_de_dict
from src.training import Modelo, build_model

logger = logging.getLogger(__name__)


def montar_cabecalho(model: Modelo, train_seed: int, split: Sequence[float], fpr_max: float) -> Dict:
    return {
        "strategy": model.strategy,
        "model": asdict(model.config),
        "dims": dict(model.dims),
        "train": {"seed": int(train_seed), "split": [float(f) for f in split]},
        "eval": {"fpr_max": float(fpr_max)},
    }


def save_model(model: Modelo, path: Path, header: Dict):
    """
    Grava o modelo de forma atômica.

    Args:
        model: Modelo treinado.
        path: Destino.
        header: Cabeçalho de `montar_cabecalho`.
    """
    cabecalho = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = model.parameters()
    partes = [MAGIC_MODELO, struct.pack("<II", VERSAO_FORMATO, len(cabecalho)), cabecalho,
              struct.pack("<I", len(params))]
    for nome, p in params.items():
        nome_bytes = nome.encode("utf-8")
        partes.append(struct.pack("<H", len(nome_bytes)))
        partes.append(nome_bytes)
        partes.append(struct.pack(f"<B{p.ndim}I", p.ndim, *p.shape))
        partes.append(p.data.astype("<f8").tobytes())
    escrever_bytes_atomico(path, b"".join(partes))
    logger.info(f"✓ Modelo gravado: {Path(path).name} ({len(params)} tensores, {model.n_parametros()} valores)")


def load_model(path: Path) -> Tuple[Modelo, Dict]:
    """
    Lê um arquivo CFMD e reconstrói o modelo.

    Returns:
        (modelo, cabeçalho).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"Arquivo de modelo não encontrado: {path}")
    bruto = path.read_bytes()
    if bruto[:4] != MAGIC_MODELO:
        raise DatasetFormatError(f"{path.name}: assinatura de modelo inválida {bruto[:4]!r}")
    try:
        versao, tam = struct.unpack_from("<II", bruto, 4)
        if versao != VERSAO_FORMATO:
            raise DatasetFormatError(f"{path.name}: versão de modelo {versao} não suportada")
        pos = 12
        header = json.loads(bruto[pos:pos + tam].decode("utf-8"))
        pos += tam
        (n_params,) = struct.unpack_from("<I", bruto, pos)
        pos += 4
        estado = {}
        for _ in range(n_params):
            (tam_nome,) = struct.unpack_from("<H", bruto, pos)
            pos += 2
            nome = bruto[pos:pos + tam_nome].decode("utf-8")
            pos += tam_nome
            (rank,) = struct.unpack_from("<B", bruto, pos)
            pos += 1
            forma = struct.unpack_from(f"<{rank}I", bruto, pos)
            pos += 4 * rank
            n = int(np.prod(forma, dtype=np.int64))
            if pos + 8 * n > len(bruto):
                raise DatasetCorruptionError(f"{path.name}: parâmetro '{nome}' truncado")
            estado[nome] = np.frombuffer(bruto, dtype="<f8", count=n, offset=pos).reshape(forma).astype(np.float64)
            pos += 8 * n
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetCorruptionError(f"{path.name}: arquivo de modelo corrompido: {e}")
    if pos != len(bruto):
        raise DatasetCorruptionError(f"{path.name}: {len(bruto) - pos} bytes sobrando após os parâmetros")

    config = secao_de_dict(ModelConfig, header["model"], "model")
    model = build_model(config, header["dims"])
    try:
        model.load_state_dict(estado)
    except (KeyError, ValueError) as e:
        raise DatasetCorruptionError(f"{path.name}: parâmetros incompatíveis com o cabeçalho: {e}")
    logger.info(f"✓ Modelo lido: {path.name} (strategy={header['strategy']})")
    return model, header

"""
Datasets multimodais: formato binário CFDS, alternativa CSV e gerador
sintético.

Os embeddings de texto e imagem chegam prontos de codificadores externos;
a modalidade numérica chega como features brutas.
"""

import logging
import re
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import (
    CODIGOS_PAPEL,
    DIMS_SINTETICAS,
    MAGIC_DATASET,
    MODOS_SINTETICOS,
    NOISE_SIGMA_PADRAO,
    PAPEIS,
    POSITIVE_RATE_PADRAO,
    VERSAO_FORMATO,
)
from src.errors import (
    ConfigError,
    DatasetCorruptionError,
    DatasetFormatError,
    DatasetValidationError,
)
from src.export import escrever_bytes_atomico, escrever_texto_atomico

logger = logging.getLogger(__name__)

PAPEL_POR_CODIGO = {codigo: papel for papel, codigo in CODIGOS_PAPEL.items()}
_COLUNA_CSV = re.compile(r"^(?P<nome>[^:]+):(?P<indice>\d+)$")


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    role: str
    dim: int


@dataclass
class Batch:
    """Lote pronto para o forward: entradas float64 por papel e rótulos."""

    inputs: Dict[str, np.ndarray]
    labels: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


class MultimodalDataset:
    """
    Amostras com quatro modalidades concatenadas na ordem do cabeçalho.

    Args:
        modalities: Modalidades na ordem do cabeçalho.
        values: Matriz n × soma das dimensões (armazenada em float32).
        labels: n rótulos em {0, 1}.
    """

    def __init__(self, modalities: Sequence[ModalitySpec], values: np.ndarray, labels: np.ndarray):
        self.modalities = list(modalities)
        self.values = np.ascontiguousarray(values, dtype=np.float32)
        self.labels = np.ascontiguousarray(labels, dtype=np.uint8)
        self._fatias = {}
        inicio = 0
        for m in self.modalities:
            self._fatias[m.role] = slice(inicio, inicio + m.dim)
            inicio += m.dim
        self.validar()

    def validar(self):
        papeis = [m.role for m in self.modalities]
        if sorted(papeis) != sorted(PAPEIS):
            raise DatasetValidationError(f"Cada papel deve aparecer uma vez: {papeis}")
        if any(m.dim < 1 for m in self.modalities):
            raise DatasetValidationError(f"Dimensões não positivas: {self.dims()}")
        n = len(self.labels)
        if n < 1:
            raise DatasetValidationError("Dataset vazio")
        total = sum(m.dim for m in self.modalities)
        if self.values.shape != (n, total):
            raise DatasetValidationError(
                f"Matriz de valores {self.values.shape}, esperado ({n}, {total})"
            )
        ruins = ~np.isfinite(self.values).all(axis=1)
        if ruins.any():
            linha = int(np.flatnonzero(ruins)[0])
            raise DatasetValidationError(f"Valor NaN/Inf na amostra {linha}")
        rotulos_ruins = self.labels > 1
        if rotulos_ruins.any():
            linha = int(np.flatnonzero(rotulos_ruins)[0])
            raise DatasetValidationError(f"Rótulo fora de {{0,1}} na amostra {linha}: {self.labels[linha]}")

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, outro) -> bool:
        if not isinstance(outro, MultimodalDataset):
            return NotImplemented
        return (self.modalities == outro.modalities
                and self.values.tobytes() == outro.values.tobytes()
                and self.labels.tobytes() == outro.labels.tobytes())

    def dims(self) -> Dict[str, int]:
        return {m.role: m.dim for m in self.modalities}

    def modality(self, role: str) -> np.ndarray:
        return self.values[:, self._fatias[role]]

    @property
    def n_positivos(self) -> int:
        return int(self.labels.sum())

    def batch(self, indices: np.ndarray) -> Batch:
        indices = np.asarray(indices, dtype=np.int64)
        return Batch(
            inputs={papel: self.values[indices, fatia].astype(np.float64)
                    for papel, fatia in self._fatias.items()},
            labels=self.labels[indices].astype(np.int64),
            indices=indices,
        )

    def subset(self, indices: np.ndarray) -> "MultimodalDataset":
        return MultimodalDataset(self.modalities, self.values[indices], self.labels[indices])


def _dtype_registro(total: int) -> np.dtype:
    return np.dtype([("x", "<f4", (total,)), ("y", "u1")])


def write_dataset(ds: MultimodalDataset, path: Path):
    """
    Grava o dataset; sufixo .csv usa a alternativa CSV, o resto o binário.

    Args:
        ds: Dataset a gravar.
        path: Destino.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _gravar_csv(ds, path)
    else:
        _gravar_binario(ds, path)
    logger.info(f"✓ Dataset gravado: {path.name} ({len(ds)} amostras, {ds.n_positivos} positivas)")


def read_dataset(path: Path) -> MultimodalDataset:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"Arquivo de dataset não encontrado: {path}")
    ds = _ler_csv(path) if path.suffix.lower() == ".csv" else _ler_binario(path)
    logger.info(f"✓ Dataset lido: {path.name} ({len(ds)} amostras, dims={ds.dims()})")
    return ds


def _gravar_binario(ds: MultimodalDataset, path: Path):
    partes = [MAGIC_DATASET, struct.pack("<III", VERSAO_FORMATO, len(ds), len(ds.modalities))]
    for m in ds.modalities:
        nome = m.name.encode("utf-8")
        partes.append(struct.pack("<H", len(nome)))
        partes.append(nome)
        partes.append(struct.pack("<BI", CODIGOS_PAPEL[m.role], m.dim))
    registros = np.empty(len(ds), dtype=_dtype_registro(ds.values.shape[1]))
    registros["x"] = ds.values
    registros["y"] = ds.labels
    partes.append(registros.tobytes())
    escrever_bytes_atomico(path, b"".join(partes))


def _ler_binario(path: Path) -> MultimodalDataset:
    bruto = path.read_bytes()
    if bruto[:4] != MAGIC_DATASET:
        raise DatasetFormatError(f"{path.name}: assinatura inválida {bruto[:4]!r}")
    try:
        versao, n, n_mod = struct.unpack_from("<III", bruto, 4)
        if versao != VERSAO_FORMATO:
            raise DatasetFormatError(f"{path.name}: versão {versao} não suportada")
        pos = 16
        modalidades = []
        for _ in range(n_mod):
            (tam,) = struct.unpack_from("<H", bruto, pos)
            pos += 2
            if pos + tam > len(bruto):
                raise DatasetCorruptionError(f"{path.name}: cabeçalho truncado")
            nome = bruto[pos:pos + tam].decode("utf-8")
            pos += tam
            codigo, dim = struct.unpack_from("<BI", bruto, pos)
            pos += 5
            if codigo not in PAPEL_POR_CODIGO:
                raise DatasetFormatError(f"{path.name}: código de papel desconhecido {codigo}")
            modalidades.append(ModalitySpec(nome, PAPEL_POR_CODIGO[codigo], dim))
    except struct.error:
        raise DatasetCorruptionError(f"{path.name}: cabeçalho truncado")
    except UnicodeDecodeError:
        raise DatasetCorruptionError(f"{path.name}: nome de modalidade não é UTF-8")

    dtype = _dtype_registro(sum(m.dim for m in modalidades))
    esperado = n * dtype.itemsize
    restante = len(bruto) - pos
    if restante != esperado:
        raise DatasetCorruptionError(
            f"{path.name}: cabeçalho indica {n} amostras ({esperado} bytes), encontrados {restante} bytes"
        )
    registros = np.frombuffer(bruto, dtype=dtype, count=n, offset=pos)
    return MultimodalDataset(modalidades, registros["x"].copy(), registros["y"].copy())


def _gravar_csv(ds: MultimodalDataset, path: Path):
    colunas = {"label": ds.labels.astype(np.int64)}
    for m in ds.modalities:
        bloco = ds.modality(m.role)
        for i in range(m.dim):
            colunas[f"{m.name}:{i}"] = bloco[:, i]
    df = pd.DataFrame(colunas)
    escrever_texto_atomico(path, df.to_csv(index=False, float_format="%.9g", lineterminator="\n"))


def _ler_csv(path: Path) -> MultimodalDataset:
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DatasetValidationError(f"{path.name}: CSV malformado: {e}")
    if not isinstance(df.index, pd.RangeIndex):
        raise DatasetValidationError(f"{path.name}: linhas com mais valores que o cabeçalho")
    if "label" not in df.columns or df.columns[0] != "label":
        raise DatasetValidationError(f"{path.name}: primeira coluna deve ser 'label'")

    ordem: List[str] = []
    indices: Dict[str, List[int]] = {}
    for coluna in df.columns[1:]:
        casamento = _COLUNA_CSV.match(str(coluna))
        if not casamento:
            raise DatasetValidationError(f"{path.name}: coluna inválida {coluna!r}")
        nome = casamento.group("nome")
        if nome not in indices:
            ordem.append(nome)
            indices[nome] = []
        indices[nome].append(int(casamento.group("indice")))
    modalidades = []
    for nome in ordem:
        if indices[nome] != list(range(len(indices[nome]))):
            raise DatasetValidationError(f"{path.name}: índices fora de ordem em '{nome}'")
        if nome not in CODIGOS_PAPEL:
            raise DatasetValidationError(f"{path.name}: modalidade '{nome}' não é um papel {PAPEIS}")
        modalidades.append(ModalitySpec(nome, nome, len(indices[nome])))

    try:
        valores = df.iloc[:, 1:].to_numpy(dtype=np.float64)
        rotulos = df["label"].to_numpy(dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DatasetValidationError(f"{path.name}: valor não numérico: {e}")
    ruins = ~np.isfinite(valores).all(axis=1) | ~np.isfinite(rotulos)
    if ruins.any():
        linha = int(np.flatnonzero(ruins)[0])
        raise DatasetValidationError(
            f"{path.name}: linha {linha + 1} com valor ausente ou não finito "
            f"(cabeçalho declara {valores.shape[1]} valores)"
        )
    if not np.isin(rotulos, (0.0, 1.0)).all():
        linha = int(np.flatnonzero(~np.isin(rotulos, (0.0, 1.0)))[0])
        raise DatasetValidationError(f"{path.name}: linha {linha + 1} com rótulo inválido {rotulos[linha]}")
    return MultimodalDataset(modalidades, valores.astype(np.float32), rotulos.astype(np.uint8))


@dataclass
class SyntheticSpec:
    """Parâmetros do gerador sintético."""

    n: int = 1000
    dims: Dict[str, int] = field(default_factory=lambda: dict(DIMS_SINTETICAS))
    mode: str = "separable"
    noisy_role: Optional[str] = None
    positive_rate: float = POSITIVE_RATE_PADRAO
    noise_sigma: float = NOISE_SIGMA_PADRAO
    seed: int = 0

    def __post_init__(self):
        if self.mode == "xor":
            self.mode = "xor_cross_modal"
        if self.mode not in MODOS_SINTETICOS:
            raise ConfigError(f"Modo inválido {self.mode!r}; opções: {MODOS_SINTETICOS}")
        if self.n < 20:
            raise ConfigError(f"n deve ser >= 20, recebeu {self.n}")
        if sorted(self.dims) != sorted(PAPEIS):
            raise ConfigError(f"dims deve ter exatamente os papéis {PAPEIS}: {sorted(self.dims)}")
        if any(d < 2 for d in self.dims.values()):
            raise ConfigError(f"Cada dimensão deve ser >= 2: {self.dims}")
        if not 0.0 < self.positive_rate < 1.0:
            raise ConfigError(f"positive_rate deve estar em (0, 1), recebeu {self.positive_rate}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma não pode ser negativo: {self.noise_sigma}")
        if self.mode == "noisy_modality" and self.noisy_role not in PAPEIS:
            raise ConfigError(f"noisy_modality exige noisy_role em {PAPEIS}, recebeu {self.noisy_role!r}")

    def to_dict(self) -> Dict:
        return asdict(self)


def gen_synthetic(spec: SyntheticSpec) -> MultimodalDataset:
    """
    Gera um dataset multimodal determinístico dado o seed.

    Modos:
        separable: o sinal ±1 do rótulo aparece numa direção aleatória de
            cada modalidade, com ruído independente de desvio noise_sigma.
        redundant: todas as modalidades carregam o mesmo latente escalar
            ruidoso (ruído compartilhado).
        xor_cross_modal: latentes u, v = ±1 com rótulo 1 sse u·v = +1;
            u só nos textos, v só na imagem, numérico é ruído puro.
        noisy_modality: como separable, mas noisy_role vira ruído puro.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    rotulos = (rng.random(n) < spec.positive_rate).astype(np.uint8)
    sinal = 2.0 * rotulos.astype(np.float64) - 1.0
    u = rng.choice(np.array([-1.0, 1.0]), size=n)
    v = np.where(rotulos == 1, u, -u)
    latente = sinal + spec.noise_sigma * rng.standard_normal(n)

    blocos = []
    for papel in PAPEIS:
        dim = spec.dims[papel]
        direcao = rng.standard_normal(dim)
        direcao /= np.linalg.norm(direcao)
        ruido = rng.standard_normal((n, dim))

        if spec.mode == "separable" or (spec.mode == "noisy_modality" and papel != spec.noisy_role):
            bloco = sinal[:, None] * direcao + spec.noise_sigma * ruido
        elif spec.mode == "noisy_modality":
            bloco = ruido
        elif spec.mode == "redundant":
            bloco = latente[:, None] * direcao + 0.1 * spec.noise_sigma * ruido
        elif papel in ("text_a", "text_b"):
            bloco = u[:, None] * direcao + spec.noise_sigma * ruido
        elif papel == "image":
            bloco = v[:, None] * direcao + spec.noise_sigma * ruido
        else:
            bloco = ruido
        blocos.append(bloco)

    modalidades = [ModalitySpec(papel, papel, spec.dims[papel]) for papel in PAPEIS]
    ds = MultimodalDataset(modalidades, np.concatenate(blocos, axis=1).astype(np.float32), rotulos)
    logger.info(
        f"✓ Dataset sintético gerado: modo={spec.mode}, n={n}, positivos={ds.n_positivos}, seed={spec.seed}"
    )
    return ds

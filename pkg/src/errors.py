"""
Hierarquia de exceções do projeto, cada uma com seu código de saída.
"""

from src.config import (
    EXIT_DADOS_DEGENERADOS,
    EXIT_DIMENSAO,
    EXIT_MATRIZ_INVALIDA,
    EXIT_USO,
)


class CapsFuseError(Exception):
    """Erro base; `exit_code` é usado pela CLI."""

    exit_code = 1


class ConfigError(CapsFuseError):
    exit_code = EXIT_USO


class ContractError(CapsFuseError):
    """Pré-condição de uma operação violada."""

    exit_code = EXIT_USO


class NumericError(CapsFuseError):
    exit_code = EXIT_USO


class DimensionError(CapsFuseError, ValueError):
    """Formas incompatíveis entre tensores, modalidades ou modelo/dataset."""

    exit_code = EXIT_DIMENSAO


class DatasetFormatError(CapsFuseError):
    exit_code = EXIT_DIMENSAO


class DatasetCorruptionError(CapsFuseError):
    exit_code = EXIT_DIMENSAO


class DatasetValidationError(CapsFuseError):
    exit_code = EXIT_DIMENSAO


class UndefinedMetricError(CapsFuseError):
    """Métrica indefinida, por exemplo AUC com uma só classe."""

    exit_code = EXIT_DADOS_DEGENERADOS


class InvalidMatrixError(CapsFuseError):
    exit_code = EXIT_MATRIZ_INVALIDA

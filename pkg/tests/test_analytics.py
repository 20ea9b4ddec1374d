import json

import pandas as pd
import pytest

from src.analytics import ResultsAnalyzer, agregar, linhas_por_seed, montar_relatorio
from src.export import ReportExporter, json_deterministico
from src.metrics import Confusion, MetricReport


def _relatorio(auc, pauc, f1):
    return MetricReport(auc, pauc / 10, pauc, f1, 0.5, Confusion(1, 1, 1, 1), n_pos=2, n_neg=2)


@pytest.fixture
def relatorios():
    return [_relatorio(0.9, 0.8, 0.6), _relatorio(0.7, 0.6, 0.4), _relatorio(0.8, 0.7, 0.5)]


def test_agregar_media_e_desvio_amostral(relatorios):
    agregado = agregar(linhas_por_seed([0, 1, 2], relatorios))
    assert agregado["auc_mean"] == pytest.approx(0.8)
    assert agregado["auc_std"] == pytest.approx(0.1)
    assert agregado["pauc_mean"] == pytest.approx(0.7)
    assert agregado["f1_std"] == pytest.approx(0.1)


def test_agregar_um_seed_tem_desvio_zero(relatorios):
    agregado = agregar(linhas_por_seed([3], relatorios[:1]))
    assert agregado == {
        "auc_mean": 0.9, "auc_std": 0.0,
        "pauc_mean": 0.8, "pauc_std": 0.0,
        "f1_mean": 0.6, "f1_std": 0.0,
    }


def test_relatorio_de_treino_tem_esquema_fixo(relatorios):
    relatorio = montar_relatorio("add", [0, 1, 2], relatorios)
    assert set(relatorio) == {"strategy", "seeds", "per_seed", "aggregate"}
    assert relatorio["seeds"] == [0, 1, 2]
    assert relatorio["per_seed"][1] == {"seed": 1, "auc": 0.7, "pauc_std": 0.6, "f1": 0.4, "threshold": 0.5}
    # serializável sem NaN
    json.loads(json_deterministico(relatorio))


def test_tabela_comparativa_ordenada_por_auc(relatorios):
    analyzer = ResultsAnalyzer([
        montar_relatorio("add", [0], relatorios[1:2]),
        montar_relatorio("capsnet", [0, 1], relatorios[:2]),
        montar_relatorio("concat", [0], relatorios[2:]),
    ])
    df = analyzer.gerar_tabela_comparativa()
    assert df["strategy"].tolist() == ["capsnet", "concat", "add"]
    assert df.loc[0, "n_seeds"] == 2


def test_tabela_vazia():
    assert ResultsAnalyzer([]).gerar_tabela_comparativa().empty


def test_tabelas_por_seed(relatorios):
    tabelas = ResultsAnalyzer([montar_relatorio("xattn", [5, 6], relatorios[:2])]).gerar_tabelas_por_seed()
    assert tabelas["xattn"]["seed"].tolist() == [5, 6]


def test_markdown_media_mais_ou_menos_desvio(relatorios):
    texto = ResultsAnalyzer([montar_relatorio("capsnet", [0, 1, 2], relatorios)]).gerar_markdown()
    linhas = texto.splitlines()
    assert linhas[0] == "| Fusion strategy | AUC | pAUC | F1 |"
    assert linhas[2] == "| capsnet | 0.800 ± 0.100 | 0.700 ± 0.100 | 0.500 ± 0.100 |"


def test_exportador_json_e_jsonl(tmp_path):
    exporter = ReportExporter(tmp_path / "saida")
    caminho = exporter.exportar_json({"b": 1, "a": [1.5]}, "r.json")
    assert json.loads(caminho.read_text()) == {"b": 1, "a": [1.5]}
    caminho = exporter.exportar_jsonl([{"i": 0}, {"i": 1}], "t.jsonl")
    assert caminho.read_text().splitlines() == ['{"i": 0}', '{"i": 1}']
    assert not list((tmp_path / "saida").glob("*.tmp"))


def test_exportador_rejeita_nan(tmp_path):
    with pytest.raises(ValueError):
        ReportExporter(tmp_path).exportar_json({"auc": float("nan")}, "r.json")
    assert not (tmp_path / "r.json").exists()


def test_exportador_excel_pula_aba_vazia(tmp_path):
    exporter = ReportExporter(tmp_path)
    caminho = exporter.exportar_excel(
        {"comparacao": pd.DataFrame({"strategy": ["add"], "auc_mean": [0.7]}), "vazia": pd.DataFrame()},
        "r.xlsx",
    )
    assert pd.ExcelFile(caminho).sheet_names == ["comparacao"]

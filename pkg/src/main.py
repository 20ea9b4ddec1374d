"""
Módulo principal: linha de comando para gerar dados, treinar, avaliar e
comparar as estratégias de fusão.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from src import __version__
from src.analytics import ResultsAnalyzer, montar_relatorio
from src.categories import (
    REGRAS_SELECAO,
    aggregate_sentiment,
    cosine_matrix,
    ler_embeddings_categorias,
    ler_matriz_similaridade,
    ler_tabela_sentimento,
    select_categories,
)
from src.config import (
    DIMS_SINTETICAS,
    ESTRATEGIAS,
    EXIT_ERRO,
    EXIT_OK,
    EXIT_USO,
    LOG_FORMAT,
    LOG_LEVEL,
    MODOS_SINTETICOS,
    NOISE_SIGMA_PADRAO,
    PAPEIS,
    POSITIVE_RATE_PADRAO,
)
from src.dataset import SyntheticSpec, gen_synthetic, read_dataset, write_dataset
from src.errors import CapsFuseError, ConfigError
from src.export import ReportExporter, escrever_texto_atomico, json_deterministico
from src.fusion import FusionModel
from src.model_io import load_model, montar_cabecalho, save_model
from src.numerics import no_grad
from src.run_config import RunConfig, carregar_run_config
from src.training import evaluate, linear_probe, run_seeds, stratified_split, workers_configurados

logger = logging.getLogger(__name__)


def configurar_logging(verbose: bool = False):
    """Configura o sistema de logging."""
    logging.basicConfig(
        level="DEBUG" if verbose else LOG_LEVEL,
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler(sys.stdout)
        ],
        force=True,
    )


def _banner(titulo: str):
    print("\n" + "=" * 60)
    print(f"  {titulo}")
    print("=" * 60 + "\n")


def _parse_dims(texto: str) -> Dict[str, int]:
    dims = {}
    for parte in texto.split(","):
        nome, _, valor = parte.partition("=")
        try:
            dims[nome.strip()] = int(valor)
        except ValueError:
            raise ConfigError(f"--dims inválido: {parte!r} (use papel=dim)")
    return dims


def _carregar_config(args) -> RunConfig:
    config = carregar_run_config(Path(args.config)) if args.config else RunConfig()
    if getattr(args, "data", None):
        config = replace(config, data=replace(config.data, path=args.data))
    if getattr(args, "fusion", None):
        config = replace(config, model=replace(config.model, fusion=args.fusion))
    if getattr(args, "seed", None) is not None:
        config = replace(config, train=replace(config.train, seed=args.seed))
    if getattr(args, "epochs", None) is not None:
        config = replace(config, train=replace(config.train, epochs=args.epochs))
    if getattr(args, "n_seeds", None) is not None:
        config = replace(config, eval=replace(config.eval, n_seeds=args.n_seeds))
    if getattr(args, "fpr_max", None) is not None:
        config = replace(config, eval=replace(config.eval, fpr_max=args.fpr_max))
    if getattr(args, "out", None):
        config = replace(config, output=replace(config.output, directory=args.out))
    if not config.data.path:
        raise ConfigError("Dataset não informado (--data ou data.path na configuração)")
    return config


def _gravar_metadados(exporter: ReportExporter, comando: str, extra: Dict):
    metadados = {
        "command": comando,
        "version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "workers": workers_configurados(),
        **extra,
    }
    exporter.exportar_json(metadados, "run_metadata.json")


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n=args.n,
        dims=_parse_dims(args.dims) if args.dims else dict(DIMS_SINTETICAS),
        mode=args.mode,
        noisy_role=args.noisy_role,
        positive_rate=args.positive_rate,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    destino = Path(args.out)
    ds = gen_synthetic(spec)
    write_dataset(ds, destino)
    lateral = destino.with_name(destino.name + ".json")
    escrever_texto_atomico(lateral, json_deterministico({"generator": spec.to_dict(), "n_positive": ds.n_positivos}))
    print(f"Dataset: {destino} ({len(ds)} amostras, {ds.n_positivos} positivas)")
    print(f"Especificação: {lateral}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _carregar_config(args)
    _banner(f"TREINO - {config.model.fusion}")
    ds = read_dataset(Path(config.data.path))
    seeds = [config.train.seed + i for i in range(config.eval.n_seeds)]
    resultados = run_seeds(ds, config, seeds)

    exporter = ReportExporter(Path(config.output.directory))
    estrategia = config.model.fusion
    for r in resultados:
        exporter.exportar_csv(r.log.to_frame(), f"trainlog_{estrategia}_seed{r.seed}.csv")
        cabecalho = montar_cabecalho(r.model, r.seed, config.train.split, config.eval.fpr_max)
        save_model(r.model, exporter.output_dir / f"model_{estrategia}_seed{r.seed}.cfmd", cabecalho)
    relatorio = montar_relatorio(estrategia, seeds, [r.report for r in resultados])
    caminho = exporter.exportar_json(relatorio, f"report_{estrategia}.json")
    exporter.exportar_json(config.to_dict(), f"config_{estrategia}.json")
    _gravar_metadados(exporter, "train", {"strategy": estrategia, "seeds": seeds})

    ag = relatorio["aggregate"]
    print(f"\nResumo ({len(seeds)} seeds):")
    print(f"   - AUC:  {ag['auc_mean']:.4f} ± {ag['auc_std']:.4f}")
    print(f"   - pAUC: {ag['pauc_mean']:.4f} ± {ag['pauc_std']:.4f}")
    print(f"   - F1:   {ag['f1_mean']:.4f} ± {ag['f1_std']:.4f}")
    print(f"\nRelatório: {caminho}\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, cabecalho = load_model(Path(args.model))
    ds = read_dataset(Path(args.data))
    split = stratified_split(ds.labels, cabecalho["train"]["split"], cabecalho["train"]["seed"])
    fpr_max = args.fpr_max if args.fpr_max is not None else cabecalho["eval"]["fpr_max"]
    relatorio = evaluate(model, ds, split, fpr_max)

    exporter = ReportExporter(Path(args.out))
    exporter.exportar_json(relatorio.to_dict(), args.report)
    if args.trace:
        if not isinstance(model, FusionModel):
            raise ConfigError(f"--trace exige um modelo capsnet, recebeu '{cabecalho['strategy']}'")
        lote = ds.batch(split.test)
        with no_grad():
            _, trace = model.forward(lote.inputs)
        for papel, coef in trace.coefficients.items():
            if not coef.validar():
                logger.warning(f"Coeficientes de '{papel}' não normalizados no traço")
        exporter.exportar_jsonl(trace.to_records(lote.indices, lote.labels), args.trace)
    print(json.dumps(relatorio.to_dict(), indent=2))
    return EXIT_OK


def cmd_select_categories(args) -> int:
    if bool(args.matrix) == bool(args.embeddings):
        raise ConfigError("Informe exatamente um de --matrix ou --embeddings")
    if args.matrix:
        matriz = ler_matriz_similaridade(Path(args.matrix))
    else:
        matriz = cosine_matrix(ler_embeddings_categorias(Path(args.embeddings)))
    saida = {"categories": matriz.names}
    for regra in REGRAS_SELECAO:
        _, saida[regra] = select_categories(matriz, regra)
    texto = json_deterministico(saida)
    if args.out:
        escrever_texto_atomico(Path(args.out), texto)
    print(texto, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    relatorios = []
    for caminho in args.reports:
        try:
            relatorios.append(json.loads(Path(caminho).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Relatório ilegível {caminho}: {e}")
    analyzer = ResultsAnalyzer(relatorios)
    markdown = analyzer.gerar_markdown()
    if args.markdown:
        escrever_texto_atomico(Path(args.markdown), markdown)
    if args.excel:
        destino = Path(args.excel)
        abas = {"comparacao": analyzer.gerar_tabela_comparativa(), **analyzer.gerar_tabelas_por_seed()}
        ReportExporter(destino.parent).exportar_excel(abas, destino.name)
    print(markdown, end="")
    return EXIT_OK


def cmd_probe(args) -> int:
    config = _carregar_config(args)
    ds = read_dataset(Path(config.data.path))
    papeis = list(PAPEIS) if args.modality == "all" else [args.modality]
    saida = {}
    for papel in papeis:
        saida[papel] = linear_probe(ds, papel, config.train, config.eval.fpr_max).to_dict()
    texto = json_deterministico(saida)
    if args.report:
        escrever_texto_atomico(Path(args.report), texto)
    for papel, r in saida.items():
        print(f"   - {papel}: AUC {r['auc']:.4f}")
    return EXIT_OK


def cmd_sentiment(args) -> int:
    medias = aggregate_sentiment(ler_tabela_sentimento(Path(args.table)))
    texto = json_deterministico(medias)
    if args.out:
        escrever_texto_atomico(Path(args.out), texto)
    print(texto, end="")
    return EXIT_OK


EPILOGO = (
    "Códigos de saída: 0 ok, 1 erro inesperado, 2 uso/configuração, 3 dimensão/dataset, "
    "4 dados degenerados (uma só classe), 5 matriz inválida.\n"
    "Padrões da configuração (JSON com seções data, model, train, eval, output):\n"
)


def criar_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capsfuse",
        description="Fusão multimodal com cápsulas e baselines de comparação.",
        epilog=EPILOGO + json.dumps(RunConfig().to_dict(), indent=2),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="logging em nível DEBUG")
    sub = parser.add_subparsers(dest="comando", required=True)
    padroes = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="gera dataset sintético", formatter_class=padroes)
    p.add_argument("--mode", default="separable", help=f"um de {MODOS_SINTETICOS} (ou xor)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positive-rate", type=float, default=POSITIVE_RATE_PADRAO)
    p.add_argument("--noise-sigma", type=float, default=NOISE_SIGMA_PADRAO)
    p.add_argument("--noisy-role", choices=PAPEIS, default=None)
    p.add_argument("--dims", default=None, help="ex.: text_a=32,text_b=32,image=32,numeric=6")
    p.add_argument("--out", required=True, help="arquivo .cfds (ou .csv)")
    p.set_defaults(funcao=cmd_synth)

    def _opcoes_execucao(p):
        p.add_argument("--config", default=None, help="RunConfig JSON")
        p.add_argument("--data", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--fpr-max", type=float, default=None)
        p.add_argument("--out", default=None, help="diretório de saída")

    p = sub.add_parser("train", help="treina e avalia em n seeds", formatter_class=padroes)
    _opcoes_execucao(p)
    p.add_argument("--fusion", choices=ESTRATEGIAS, default=None)
    p.add_argument("--n-seeds", type=int, default=None)
    p.set_defaults(funcao=cmd_train)

    p = sub.add_parser("eval", help="avalia um modelo salvo no split de teste", formatter_class=padroes)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fpr-max", type=float, default=None)
    p.add_argument("--out", default=".", help="diretório de saída")
    p.add_argument("--report", default="eval_report.json")
    p.add_argument("--trace", default=None, help="JSONL com o traço de roteamento")
    p.set_defaults(funcao=cmd_eval)

    p = sub.add_parser("select-categories", help="ranking de categorias por similaridade",
                       formatter_class=padroes)
    p.add_argument("--matrix", default=None, help="CSV da matriz de similaridade")
    p.add_argument("--embeddings", default=None, help="CSV de embeddings (uma coluna por categoria)")
    p.add_argument("--out", default=None)
    p.set_defaults(funcao=cmd_select_categories)

    p = sub.add_parser("report", help="tabela comparativa de relatórios", formatter_class=padroes)
    p.add_argument("reports", nargs="+")
    p.add_argument("--markdown", default=None)
    p.add_argument("--excel", default=None)
    p.set_defaults(funcao=cmd_report)

    p = sub.add_parser("probe", help="sonda linear por modalidade", formatter_class=padroes)
    _opcoes_execucao(p)
    p.add_argument("--modality", choices=list(PAPEIS) + ["all"], default="all")
    p.add_argument("--report", default=None)
    p.set_defaults(funcao=cmd_probe)

    p = sub.add_parser("sentiment", help="média de sentimento por categoria", formatter_class=padroes)
    p.add_argument("--table", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(funcao=cmd_sentiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Função principal que despacha o subcomando."""
    parser = criar_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USO if e.code not in (0, None) else EXIT_OK

    configurar_logging(args.verbose)

    try:
        return args.funcao(args)
    except CapsFuseError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"\nERRO: {e}\n", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Erro durante a execucao: {e}", exc_info=True)
        print(f"\nERRO: {e}\n", file=sys.stderr)
        return EXIT_ERRO


if __name__ == "__main__":
    sys.exit(main())

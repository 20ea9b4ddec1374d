"""
Configurações do projeto de fusão multimodal com cápsulas.
"""

from pathlib import Path

# Caminhos do projeto
PROJECT_ROOT = Path(__file__).parent.parent
OUTPUT_DIR = PROJECT_ROOT / "saida_experimentos"

# Papéis das modalidades (ordem fixa do cabeçalho e da concatenação)
PAPEIS = ("text_a", "text_b", "image", "numeric")
CODIGOS_PAPEL = {"text_a": 0, "text_b": 1, "image": 2, "numeric": 3}

# Estratégias de fusão aceitas na linha de comando
ESTRATEGIAS = ("capsnet", "add", "concat", "xattn")

# Guardas numéricas
EPS_NORMA = 1e-9
EPS_PLOGP = 1e-12
EPS_LOG = 1e-12

# Cápsulas
N_CLASSES = 2
N_CAPSULAS_PRIMARIAS = 8
DIM_CAPSULA_PRIMARIA = 16
DIM_CAPSULA_DIGITO = 16
ITERACOES_ROTEAMENTO = 3
ITERACOES_ROTEAMENTO_MAX = 10

# Codificador numérico e baselines
CAMADAS_NUMERICAS = (32, 32)
DIM_EMBEDDING_NUMERICO = 16
DIM_FUSAO_BASELINE = 64
CAMADA_OCULTA_CLASSIFICADOR = 32

# Treinamento
EPOCAS = 50
TAMANHO_LOTE = 32
TAXA_APRENDIZADO = 1e-3
PACIENCIA = 10
FRACOES_SPLIT = (0.70, 0.15, 0.15)
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
SGD_MOMENTO = 0.9

# Margin loss (convenção das redes de cápsulas)
MARGEM_POSITIVA = 0.9
MARGEM_NEGATIVA = 0.1
LAMBDA_MARGEM = 0.5

# Avaliação
FPR_MAX_PADRAO = 0.10
N_SEEDS_PADRAO = 5

# Gerador sintético
POSITIVE_RATE_PADRAO = 0.14
NOISE_SIGMA_PADRAO = 0.5
DIMS_SINTETICAS = {"text_a": 32, "text_b": 32, "image": 32, "numeric": 6}
MODOS_SINTETICOS = ("separable", "redundant", "xor_cross_modal", "noisy_modality")

# Formatos binários
MAGIC_DATASET = b"CFDS"
MAGIC_MODELO = b"CFMD"
VERSAO_FORMATO = 1

# Códigos de saída da CLI
EXIT_OK = 0
EXIT_ERRO = 1
EXIT_USO = 2
EXIT_DIMENSAO = 3
EXIT_DADOS_DEGENERADOS = 4
EXIT_MATRIZ_INVALIDA = 5

# Paralelismo entre seeds
ENV_THREADS = "CAPSFUSE_THREADS"

# Configuração de logging
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = "INFO"

"""
Tensores densos em float64 com diferenciação automática em modo reverso.

Cada operação executada com gravação ativa registra um nó com índice de
construção crescente; o backward percorre os nós em ordem inversa de
construção, acumulando gradientes (+=) nos tensores com requires_grad.
"""

import itertools
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import EPS_NORMA, EPS_PLOGP
from src.errors import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

_contador_nos = itertools.count()
_estado = threading.local()

Escalar = Union[float, int]


def _gravacao_ativa() -> bool:
    return getattr(_estado, "gravando", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Desativa a gravação de nós (inferência e diferenças finitas)."""
    anterior = _gravacao_ativa()
    _estado.gravando = False
    try:
        yield
    finally:
        _estado.gravando = anterior


class Tensor:
    """Array float64 com gradiente opcional."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, copy=True, order="C")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional["Node"] = None

    @classmethod
    def _de_array(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.ascontiguousarray(arr, dtype=np.float64)
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._node = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() exige tensor escalar, forma {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._de_array(self.data.copy(), requires_grad=False)

    def backward(self):
        backward(self)

    def __repr__(self) -> str:
        nome = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{nome})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


FuncaoBackward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    """Registro de uma operação: tipo, entradas, saída e regra de gradiente."""

    index: int
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: FuncaoBackward = field(repr=False)


def _registrar(op: str, entradas: Sequence[Tensor], saida: np.ndarray,
               backward_fn: FuncaoBackward) -> Tensor:
    requer = _gravacao_ativa() and any(t.requires_grad for t in entradas)
    out = Tensor._de_array(saida, requires_grad=requer)
    if requer:
        out._node = Node(next(_contador_nos), op, tuple(entradas), out, backward_fn)
    return out


class ComputeGraph:
    """Lista de nós em ordem de construção (topológica por construção)."""

    def __init__(self, nodes: List[Node], leaves: List[Tensor]):
        self.nodes = nodes
        self.leaves = leaves

    @classmethod
    def from_loss(cls, loss: Tensor) -> "ComputeGraph":
        nos: List[Node] = []
        folhas: List[Tensor] = []
        vistos = set()
        pilha = [loss]
        while pilha:
            t = pilha.pop()
            if id(t) in vistos:
                continue
            vistos.add(id(t))
            if t._node is None:
                if t.requires_grad:
                    folhas.append(t)
                continue
            nos.append(t._node)
            pilha.extend(t._node.inputs)
        nos.sort(key=lambda n: n.index)
        return cls(nos, folhas)

    def __len__(self) -> int:
        return len(self.nodes)


def _acumular(t: Tensor, g: np.ndarray):
    t.grad = g.copy() if t.grad is None else t.grad + g


def backward(loss: Tensor, graph: Optional[ComputeGraph] = None):
    """
    Propaga gradientes a partir de uma perda escalar.

    Args:
        loss: Tensor escalar.
        graph: Grafo já construído; se None, é derivado da perda.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward exige perda escalar, recebeu forma {loss.shape}")
    if graph is None:
        graph = ComputeGraph.from_loss(loss)

    adjuntos = {id(loss): np.ones_like(loss.data)}
    for no in reversed(graph.nodes):
        g = adjuntos.pop(id(no.output), None)
        if g is None:
            continue
        _acumular(no.output, g)
        for entrada, ge in zip(no.inputs, no.backward_fn(g)):
            if ge is None or not entrada.requires_grad:
                continue
            if ge.shape != entrada.shape:
                raise ContractError(
                    f"gradiente de '{no.op}' com forma {ge.shape}, esperado {entrada.shape}"
                )
            chave = id(entrada)
            adjuntos[chave] = adjuntos[chave] + ge if chave in adjuntos else ge

    for folha in graph.leaves:
        g = adjuntos.get(id(folha))
        if g is not None:
            _acumular(folha, g)


def _como_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _mesma_forma(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: formas incompatíveis {a.shape} e {b.shape}")


# Operações elementares

def add(a: Tensor, b: Tensor) -> Tensor:
    _mesma_forma("add", a, b)
    return _registrar("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _mesma_forma("sub", a, b)
    return _registrar("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _mesma_forma("mul", a, b)
    da, db = a.data, b.data
    return _registrar("mul", (a, b), da * db, lambda g: (g * db, g * da))


def div(a: Tensor, b: Tensor) -> Tensor:
    _mesma_forma("div", a, b)
    da, db = a.data, b.data
    return _registrar("div", (a, b), da / db,
                      lambda g: (g / db, -g * da / (db * db)))


def add_scalar(a: Tensor, c: Escalar) -> Tensor:
    return _registrar("add_scalar", (a,), a.data + float(c), lambda g: (g,))


def scale(a: Tensor, s: Union[Escalar, Tensor]) -> Tensor:
    """Escalar × tensor; `s` pode ser um Tensor escalar treinável."""
    da = a.data
    if not isinstance(s, Tensor):
        fator = float(s)
        return _registrar("scale", (a,), da * fator, lambda g: (g * fator,))
    if s.data.size != 1:
        raise DimensionError(f"scale: fator deve ser escalar, forma {s.shape}")
    fator = float(s.data.reshape(-1)[0])
    forma_s = s.shape
    return _registrar("scale", (a, s), da * fator,
                      lambda g: (g * fator, np.full(forma_s, np.sum(g * da))))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Soma um vetor de viés ao último eixo, repetido sobre os eixos iniciais."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: formas incompatíveis {x.shape} e {b.shape}")
    n = b.shape[0]
    return _registrar("add_bias", (x, b), x.data + b.data,
                      lambda g: (g, g.reshape(-1, n).sum(axis=0)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: formas incompatíveis {a.shape} e {b.shape}")
    da, db = a.data, b.data
    return _registrar("matmul", (a, b), da @ db, lambda g: (g @ db.T, da.T @ g))


def _analisar_contracao(subscritos: str) -> Tuple[str, str, str]:
    try:
        entradas, saida = subscritos.replace(" ", "").split("->")
        sa, sb = entradas.split(",")
    except ValueError:
        raise ContractError(f"contract: subscritos inválidos '{subscritos}'")
    for nome, s, outros in (("A", sa, sb + saida), ("B", sb, sa + saida)):
        if len(set(s)) != len(s):
            raise ContractError(f"contract: índice repetido no operando {nome} de '{subscritos}'")
        faltando = [c for c in s if c not in outros]
        if faltando:
            raise ContractError(
                f"contract: índices {faltando} do operando {nome} não aparecem em outro lugar"
            )
    return sa, sb, saida


def contract(subscritos: str, a: Tensor, b: Tensor) -> Tensor:
    """
    Contração de dois operandos no estilo einsum.

    Cada índice de um operando precisa aparecer no outro operando ou na
    saída; assim o gradiente de cada operando é outra contração.
    """
    sa, sb, sc = _analisar_contracao(subscritos)
    da, db = a.data, b.data
    try:
        saida = np.einsum(subscritos, da, db)
    except ValueError as e:
        raise DimensionError(f"contract '{subscritos}': formas {a.shape} e {b.shape}: {e}")

    def _grad(g):
        return (np.einsum(f"{sc},{sb}->{sa}", g, db),
                np.einsum(f"{sa},{sc}->{sb}", da, g))

    return _registrar("contract", (a, b), saida, _grad)


# Não linearidades

def tanh_elem(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _registrar("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    mascara = (x.data > 0).astype(np.float64)
    return _registrar("relu", (x,), x.data * mascara, lambda g: (g * mascara,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _registrar("exp", (x,), y, lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    dx = x.data
    if np.isnan(dx).any() or (dx <= 0).any():
        raise NumericError("log: entrada não positiva ou NaN")
    return _registrar("log", (x,), np.log(dx), lambda g: (g / dx,))


def softmax(v: Tensor, axis: int = -1) -> Tensor:
    if not np.isfinite(v.data).all():
        raise NumericError(f"softmax: entrada não finita (forma {v.shape})")
    deslocado = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(deslocado)
    y = e / e.sum(axis=axis, keepdims=True)

    def _grad(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _registrar("softmax", (v,), y, _grad)


def plog2p(p: Tensor) -> Tensor:
    """p·log₂p elementar, com p < 1e-12 tratado como termo nulo."""
    dp = p.data
    ativo = dp >= EPS_PLOGP
    seguro = np.where(ativo, dp, 1.0)
    log2p = np.log2(seguro)
    y = np.where(ativo, dp * log2p, 0.0)
    derivada = np.where(ativo, log2p + 1.0 / np.log(2.0), 0.0)
    return _registrar("plog2p", (p,), y, lambda g: (g * derivada,))


def norm(x: Tensor, axis: int = -1) -> Tensor:
    """Norma euclidiana ao longo de `axis`; subgradiente nulo no vetor zero."""
    dx = x.data
    r = np.sqrt(np.sum(dx * dx, axis=axis))
    r_exp = np.expand_dims(r, axis)
    unitario = np.divide(dx, r_exp, out=np.zeros_like(dx), where=r_exp > 0)
    return _registrar("norm", (x,), r, lambda g: (np.expand_dims(g, axis) * unitario,))


def squash(s: Tensor, axis: int = -1, eps: float = EPS_NORMA) -> Tensor:
    """
    squash(s) = ‖s‖²/(1+‖s‖²) · s/(‖s‖+eps).

    Preserva a direção e leva a norma para dentro de [0, 1). O vetor zero
    vai para zero e o gradiente permanece finito ali.
    """
    ds = s.data
    sq = np.sum(ds * ds, axis=axis, keepdims=True)
    r = np.sqrt(sq)
    denom = (1.0 + sq) * (r + eps)
    h = sq / denom
    # h'(r)/r, finito inclusive em r = 0
    d_denom = 2.0 * r * (r + eps) + (1.0 + sq)
    h_sobre_r = (2.0 * denom - r * d_denom) / (denom * denom)

    def _grad(g):
        return (h * g + h_sobre_r * np.sum(ds * g, axis=axis, keepdims=True) * ds,)

    return _registrar("squash", (s,), h * ds, _grad)


# Reduções e reorganização

def sum_(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    forma = x.shape
    saida = np.sum(x.data, axis=axis, keepdims=keepdims)

    def _grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, forma).copy(),)

    return _registrar("sum", (x,), np.asarray(saida), _grad)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis=axis), 1.0 / n)


def reshape(x: Tensor, forma: Tuple[int, ...]) -> Tensor:
    original = x.shape
    try:
        saida = x.data.reshape(forma)
    except ValueError:
        raise DimensionError(f"reshape: {original} não cabe em {forma}")
    return _registrar("reshape", (x,), saida, lambda g: (g.reshape(original),))


def concat(tensores: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        saida = np.concatenate([t.data for t in tensores], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: formas incompatíveis {[t.shape for t in tensores]}")
    cortes = np.cumsum([t.shape[axis] for t in tensores])[:-1]
    return _registrar("concat", tuple(tensores), saida,
                      lambda g: tuple(np.split(g, cortes, axis=axis)))


def stack(tensores: Sequence[Tensor], axis: int = 0) -> Tensor:
    try:
        saida = np.stack([t.data for t in tensores], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: formas incompatíveis {[t.shape for t in tensores]}")
    n = len(tensores)
    return _registrar("stack", tuple(tensores), saida,
                      lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# Verificação de gradiente

def finite_diff_check(fn: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """
    Compara o gradiente do autodiff com diferenças centrais.

    Args:
        fn: Função de `x` que devolve um Tensor escalar.
        x: Tensor com requires_grad, perturbado coordenada a coordenada.
        eps: Passo das diferenças, em (0, 1e-2].

    Returns:
        Maior erro relativo |a-n| / max(|a|, |n|, 1e-8).
    """
    if not 0 < eps <= 1e-2:
        raise ContractError(f"eps fora de (0, 1e-2]: {eps}")
    if not x.requires_grad:
        raise ContractError("finite_diff_check exige x com requires_grad")

    grad_anterior = x.grad
    x.grad = None
    backward(fn(x))
    analitico = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = grad_anterior

    plano = x.data.reshape(-1)
    numerico = np.empty(plano.size)
    with no_grad():
        for i in range(plano.size):
            original = plano[i]
            plano[i] = original + eps
            f_mais = fn(x).item()
            plano[i] = original - eps
            f_menos = fn(x).item()
            plano[i] = original
            numerico[i] = (f_mais - f_menos) / (2.0 * eps)

    a = analitico.reshape(-1)
    denominador = np.maximum(np.maximum(np.abs(a), np.abs(numerico)), 1e-8)
    erro = float(np.max(np.abs(a - numerico) / denominador)) if plano.size else 0.0
    logger.debug(f"finite_diff_check: {plano.size} coordenadas, erro máximo {erro:.3e}")
    return erro

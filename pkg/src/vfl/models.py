"""
Models: Cabeça global e extratores locais com gradientes por amostra exatos

- GlobalModel: camada densa (d_H x S) + viés, softmax cross-entropy
- LocalModel: 1-2 camadas tanh de largura 32, camada final sem viés para
  d_H(i) e adaptadores LoRA paralelos (um por camada oculta) somados à saída
- backprop_local: propaga ∂L/∂H recebido do servidor (divisão split learning)
- local_jacobians: ∂H_j/∂φ^L por amostra via retropropagação de vetores unitários
"""

import io
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"VFLCKPT1"


@dataclass
class ModelConfig:
    """Formato dos modelos locais e dos adaptadores."""
    hidden: int = 32                 # largura das camadas ocultas
    hidden_layers: int = 1           # 1 ou 2
    embedding_dim: int = 16          # d_H(i)
    adapters: bool = True            # adaptadores LoRA paralelos
    adapter_rank: int = 8
    adapter_alpha: float = 1.0
    adapter_init: str = "zero"       # 'zero' (U = 0) ou 'random'
    jacobian_layer: str = "last"     # 'last' (último adaptador), 'final' ou 'adapters'

    def validate(self) -> List[str]:
        problems = []
        if self.hidden < 1:
            problems.append(f"model.hidden deve ser >= 1 (recebido {self.hidden})")
        if self.hidden_layers not in (1, 2):
            problems.append(f"model.hidden_layers deve ser 1 ou 2 (recebido {self.hidden_layers})")
        if self.embedding_dim < 1:
            problems.append(f"model.embedding_dim deve ser >= 1 (recebido {self.embedding_dim})")
        if self.adapter_rank < 1:
            problems.append(f"model.adapter_rank deve ser >= 1 (recebido {self.adapter_rank})")
        if self.adapter_init not in ("zero", "random"):
            problems.append(f"model.adapter_init inválido: '{self.adapter_init}'")
        if self.jacobian_layer not in ("last", "final", "adapters"):
            problems.append(f"model.jacobian_layer inválido: '{self.jacobian_layer}'")
        return problems


# ----------------------------------------------------------------------
# Modelo global
# ----------------------------------------------------------------------

@dataclass
class GlobalModel:
    """Camada densa H @ W + b."""
    W: np.ndarray
    b: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    @property
    def classes(self) -> int:
        return self.W.shape[1]

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size

    def logits(self, H: np.ndarray) -> np.ndarray:
        return H @ self.W + self.b

    def theta(self) -> np.ndarray:
        """θ achatado: W (linha a linha) seguido de b."""
        return np.concatenate([self.W.reshape(-1), self.b])

    def set_theta(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError(f"θ com {theta.size} entradas, esperado {self.n_params}")
        self.W = theta[:self.W.size].reshape(self.W.shape).copy()
        self.b = theta[self.W.size:].copy()

    def copy(self) -> "GlobalModel":
        return GlobalModel(self.W.copy(), self.b.copy())


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(y: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(y), classes), dtype=np.float64)
    out[np.arange(len(y)), np.asarray(y, dtype=np.int64)] = 1.0
    return out


@dataclass
class PerSampleGradients:
    """Perdas e gradientes por amostra da cabeça global."""
    losses: np.ndarray    # (B,)
    W: np.ndarray         # (B, d_H, S)
    b: np.ndarray         # (B, S)
    H: np.ndarray         # (B, d_H)

    def flat_theta(self) -> np.ndarray:
        """(B, n_θ) na ordem de GlobalModel.theta()."""
        B = self.W.shape[0]
        return np.concatenate([self.W.reshape(B, -1), self.b], axis=1)


def loss_and_per_sample_grads(model: GlobalModel, H: np.ndarray, y: np.ndarray) -> PerSampleGradients:
    """
    Softmax cross-entropy por amostra; δ = softmax(Z) - onehot(y) alimenta
    ∂L/∂W = H ⊗ δ, ∂L/∂b = δ e ∂L/∂H = δ Wᵀ.

    Args:
        model: cabeça global
        H: embeddings concatenados (B x d_H)
        y: rótulos em [0, S)
    """
    y = np.asarray(y, dtype=np.int64)
    if y.min() < 0 or y.max() >= model.classes:
        raise ValueError(f"Rótulos fora de [0, {model.classes})")
    logits = model.logits(H)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    losses = -log_probs[np.arange(len(y)), y]
    delta = np.exp(log_probs) - one_hot(y, model.classes)
    return PerSampleGradients(
        losses=losses,
        W=np.einsum("bi,bs->bis", H, delta),
        b=delta,
        H=delta @ model.W.T,
    )


def create_global_model(input_dim: int, classes: int, seed: int = 0) -> GlobalModel:
    """Factory function: pesos uniformes em ±1/sqrt(fan_in), viés zero."""
    rng = np.random.default_rng([seed, 7919])
    bound = 1.0 / np.sqrt(input_dim)
    return GlobalModel(W=rng.uniform(-bound, bound, size=(input_dim, classes)),
                       b=np.zeros(classes))


# ----------------------------------------------------------------------
# Modelo local
# ----------------------------------------------------------------------

class LocalModel:
    """
    Extrator local de um cliente.

    Parâmetros (ordem fixa):
        layer{k}.W, layer{k}.b   camadas ocultas tanh
        final.W                  camada final linear sem viés
        adapter{k}.D, adapter{k}.U  adaptador k (lê h_k, rank r)

    H = h_L W_final + (α/r) Σ_k (h_k D_k) U_k
    """

    def __init__(self, input_dim: int, config: ModelConfig, params: Dict[str, np.ndarray]):
        self.input_dim = input_dim
        self.config = config
        self.params = params

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    @property
    def adapter_scale(self) -> float:
        return self.config.adapter_alpha / self.config.adapter_rank

    @property
    def num_hidden(self) -> int:
        return self.config.hidden_layers

    def parameter_names(self) -> List[str]:
        return list(self.params)

    def adapter_names(self, k: Optional[int] = None) -> List[str]:
        if not self.config.adapters:
            return []
        layers = range(1, self.num_hidden + 1) if k is None else [k]
        return [name for i in layers for name in (f"adapter{i}.D", f"adapter{i}.U")]

    def trainable_parameters(self) -> List[str]:
        """Adaptadores quando habilitados; caso contrário, todos os parâmetros."""
        return self.adapter_names() if self.config.adapters else self.parameter_names()

    def layer_parameters(self, layer: str) -> List[str]:
        """
        Parâmetros da camada designada para as jacobianas.

        Args:
            layer: 'final', 'adapter:<k>', 'adapters' ou 'last'
        """
        if layer == "final":
            return ["final.W"]
        if layer == "adapters":
            names = self.adapter_names()
        elif layer == "last":
            names = self.adapter_names(self.num_hidden) if self.config.adapters else ["final.W"]
        elif layer.startswith("adapter:"):
            names = self.adapter_names(int(layer.split(":", 1)[1]))
        else:
            raise ValueError(f"Camada desconhecida: '{layer}'")
        if not names or any(n not in self.params for n in names):
            raise ValueError(f"Camada '{layer}' inexistente neste modelo")
        return names

    def layer_size(self, layer: str) -> int:
        return sum(self.params[n].size for n in self.layer_parameters(layer))

    def copy(self) -> "LocalModel":
        return LocalModel(self.input_dim, self.config, {k: v.copy() for k, v in self.params.items()})

    # Forward / backward

    def _forward(self, X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"Entrada com formato {X.shape}, esperado (B, {self.input_dim})")
        activations = [X]
        h = X
        for k in range(1, self.num_hidden + 1):
            h = np.tanh(h @ self.params[f"layer{k}.W"] + self.params[f"layer{k}.b"])
            activations.append(h)
        H = h @ self.params["final.W"]
        if self.config.adapters:
            for k in range(1, self.num_hidden + 1):
                H = H + self.adapter_scale * (activations[k] @ self.params[f"adapter{k}.D"]) @ self.params[f"adapter{k}.U"]
        return H, activations

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self._forward(X)[0]

    def backward(self, X: np.ndarray, g_H: np.ndarray, per_sample: bool = False,
                 names: Optional[Sequence[str]] = None) -> Dict[str, np.ndarray]:
        """
        Gradientes de Σ_j <H_j, g_H,j> em relação aos parâmetros.

        Args:
            X: lote (B x d_x)
            g_H: ∂L/∂H por amostra (B x d_H)
            per_sample: mantém o eixo do lote (B, ...) em vez de somar
            names: subconjunto de parâmetros (padrão: todos)
        """
        _, acts = self._forward(X)
        g_H = np.asarray(g_H, dtype=np.float64)
        if g_H.shape != (acts[0].shape[0], self.embedding_dim):
            raise ValueError(f"g_H com formato {g_H.shape}, esperado ({acts[0].shape[0]}, {self.embedding_dim})")
        wanted = set(names if names is not None else self.params)
        s = self.adapter_scale

        def outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
            per = np.einsum("bi,bj->bij", a, b)
            return per if per_sample else per.sum(axis=0)

        def bias(a: np.ndarray) -> np.ndarray:
            return a if per_sample else a.sum(axis=0)

        grads: Dict[str, np.ndarray] = {}
        L = self.num_hidden
        if "final.W" in wanted:
            grads["final.W"] = outer(acts[L], g_H)

        # gradiente chegando em h_k por cada caminho
        dh = {k: np.zeros_like(acts[k]) for k in range(1, L + 1)}
        dh[L] += g_H @ self.params["final.W"].T
        if self.config.adapters:
            for k in range(1, L + 1):
                D, U = self.params[f"adapter{k}.D"], self.params[f"adapter{k}.U"]
                g_low = s * (g_H @ U.T)
                if f"adapter{k}.U" in wanted:
                    grads[f"adapter{k}.U"] = outer(s * (acts[k] @ D), g_H)
                if f"adapter{k}.D" in wanted:
                    grads[f"adapter{k}.D"] = outer(acts[k], g_low)
                dh[k] += g_low @ D.T

        for k in range(L, 0, -1):
            da = dh[k] * (1.0 - acts[k] ** 2)
            if f"layer{k}.W" in wanted:
                grads[f"layer{k}.W"] = outer(acts[k - 1], da)
            if f"layer{k}.b" in wanted:
                grads[f"layer{k}.b"] = bias(da)
            if k > 1:
                dh[k - 1] += da @ self.params[f"layer{k}.W"].T

        return {name: grads[name] for name in self.params if name in grads}


def create_local_model(input_dim: int, config: Optional[ModelConfig] = None, seed: int = 0) -> LocalModel:
    """
    Factory function: uniforme em ±1/sqrt(fan_in); U dos adaptadores zerado
    (ou aleatório com adapter_init='random').
    """
    config = config or ModelConfig()
    rng = np.random.default_rng([seed, 104729])

    def dense(fan_in: int, fan_out: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    params: Dict[str, np.ndarray] = {}
    fan_in = input_dim
    for k in range(1, config.hidden_layers + 1):
        params[f"layer{k}.W"] = dense(fan_in, config.hidden)
        params[f"layer{k}.b"] = np.zeros(config.hidden)
        fan_in = config.hidden
    params["final.W"] = dense(config.hidden, config.embedding_dim)
    if config.adapters:
        for k in range(1, config.hidden_layers + 1):
            params[f"adapter{k}.D"] = dense(config.hidden, config.adapter_rank)
            if config.adapter_init == "random":
                params[f"adapter{k}.U"] = dense(config.adapter_rank, config.embedding_dim)
            else:
                params[f"adapter{k}.U"] = np.zeros((config.adapter_rank, config.embedding_dim))
    return LocalModel(input_dim, config, params)


# ----------------------------------------------------------------------
# Operações
# ----------------------------------------------------------------------

def forward_local(model: LocalModel, X: np.ndarray) -> np.ndarray:
    """Embeddings B x d_H(i) de um lote."""
    if len(X) == 0:
        raise ValueError("Lote vazio")
    return model.forward(X)


def backprop_local(model: LocalModel, X: np.ndarray, g_H: np.ndarray,
                   trainable: Optional[Sequence[str]] = None,
                   per_sample: bool = False, mean: bool = False) -> Dict[str, np.ndarray]:
    """
    Gradientes locais a partir de ∂L/∂H (regra da cadeia no cliente).

    Args:
        trainable: parâmetros desejados (padrão: trainable_parameters())
        per_sample: devolve (B, ...) por parâmetro
        mean: divide a soma pelo tamanho do lote
    """
    names = list(trainable) if trainable is not None else model.trainable_parameters()
    grads = model.backward(X, g_H, per_sample=per_sample, names=names)
    if mean and not per_sample:
        grads = {k: v / len(X) for k, v in grads.items()}
    return grads


def flatten_params(params: Dict[str, np.ndarray], names: Sequence[str], batch: bool = False) -> np.ndarray:
    """Concatena parâmetros (ou gradientes por amostra com batch=True)."""
    if batch:
        B = params[names[0]].shape[0]
        return np.concatenate([params[n].reshape(B, -1) for n in names], axis=1)
    return np.concatenate([params[n].reshape(-1) for n in names])


def unflatten_params(flat: np.ndarray, like: Dict[str, np.ndarray], names: Sequence[str]) -> Dict[str, np.ndarray]:
    out, offset = {}, 0
    for n in names:
        size = like[n].size
        out[n] = np.asarray(flat[offset:offset + size]).reshape(like[n].shape)
        offset += size
    if offset != np.size(flat):
        raise ValueError(f"Vetor com {np.size(flat)} entradas, esperado {offset}")
    return out


def local_jacobians(model: LocalModel, X: np.ndarray, layer: str) -> np.ndarray:
    """
    ∂H_j/∂φ^L para cada amostra do lote.

    Returns:
        (B, n^L, d_H): linha r = parâmetro r da camada (achatado na ordem de
        layer_parameters), coluna c = coordenada c de H
    """
    names = model.layer_parameters(layer)
    B, d = len(X), model.embedding_dim
    columns = []
    for c in range(d):
        unit = np.zeros((B, d))
        unit[:, c] = 1.0
        grads = model.backward(X, unit, per_sample=True, names=names)
        columns.append(flatten_params(grads, names, batch=True))
    return np.stack(columns, axis=-1)


def local_jacobian(model: LocalModel, x: np.ndarray, layer: str) -> np.ndarray:
    """Jacobiana n^L x d_H de uma única amostra."""
    return local_jacobians(model, np.asarray(x, dtype=np.float64).reshape(1, -1), layer)[0]


def sgd_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], eta: float) -> Dict[str, np.ndarray]:
    """params ← params - η·grad (in place) para cada gradiente fornecido."""
    for name, grad in grads.items():
        if params[name].shape != np.shape(grad):
            raise ValueError(f"Formato incompatível em '{name}': {params[name].shape} vs {np.shape(grad)}")
        params[name] -= eta * grad
    return params


def predict(global_model: GlobalModel, local_models: Sequence[LocalModel],
            parts: Sequence[np.ndarray]) -> np.ndarray:
    H = np.concatenate([m.forward(x) for m, x in zip(local_models, parts)], axis=1)
    return np.argmax(global_model.logits(H), axis=1)


def accuracy(global_model: GlobalModel, local_models: Sequence[LocalModel],
             parts: Sequence[np.ndarray], labels: np.ndarray) -> float:
    return float(np.mean(predict(global_model, local_models, parts) == np.asarray(labels)))


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------

def save_checkpoint(path: str, arrays: Dict[str, np.ndarray]) -> None:
    """
    Formato: magic b"VFLCKPT1", contagem (uint32 LE) e, por array, nome
    (uint32 LE + UTF-8) seguido de um registro .npy.
    """
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(arrays)))
        for name, value in arrays.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            np.lib.format.write_array(f, np.ascontiguousarray(value, dtype=np.float64), allow_pickle=False)
    logger.info(f"💾 Checkpoint salvo: {output} ({len(arrays)} arrays)")


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"Arquivo não é um checkpoint: {path}")
    stream = io.BytesIO(data[len(CHECKPOINT_MAGIC):])
    (count,) = struct.unpack("<I", stream.read(4))
    arrays = {}
    for _ in range(count):
        (length,) = struct.unpack("<I", stream.read(4))
        name = stream.read(length).decode("utf-8")
        arrays[name] = np.lib.format.read_array(stream, allow_pickle=False)
    return arrays


def model_arrays(global_model: GlobalModel, local_models: Sequence[LocalModel]) -> Dict[str, np.ndarray]:
    """Todos os parâmetros com nomes qualificados para checkpoint."""
    arrays = {"global.W": global_model.W, "global.b": global_model.b}
    for i, model in enumerate(local_models):
        for name, value in model.params.items():
            arrays[f"client{i}.{name}"] = value
    return arrays

"""
Secure Layers: Passos do treinamento da cabeça global sobre o ABB

FWD (logits, softmax), BWD (gradientes por amostra de θ e de H), recorte
conjunto por amostra, agregação com ruído e atualização SGD de θ. Nada
aqui abre valores; as aberturas ficam a cargo dos protocolos.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

try:
    from ..mpc import secure_math
    from ..mpc.abb import SecretBackend, SecretValue
except ImportError:
    # Para execução direta
    from mpc import secure_math
    from mpc.abb import SecretBackend, SecretValue

logger = logging.getLogger(__name__)


@dataclass
class SharedGlobalModel:
    """θ = (W, b) mantido em compartilhamentos."""
    W: SecretValue
    b: SecretValue

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size

    def flat(self) -> SecretValue:
        bk = self.W.backend
        return bk.concat([bk.reshape(self.W, (self.W.size,)), self.b], axis=0)


@dataclass
class SecureGradients:
    """Gradientes por amostra calculados pela coorte."""
    theta: SecretValue       # (B, n_θ)
    embeddings: SecretValue  # (B, d_H)


def share_global_model(backend: SecretBackend, W: np.ndarray, b: np.ndarray) -> SharedGlobalModel:
    """Inicialização pública (compartilhamento trivial)."""
    return SharedGlobalModel(W=backend.public(W), b=backend.public(b))


def secure_logits(backend: SecretBackend, H: SecretValue, model: SharedGlobalModel) -> SecretValue:
    return backend.add(backend.matmul(H, model.W), model.b)


def per_sample_gradients(backend: SecretBackend, H: SecretValue, labels: SecretValue,
                         model: SharedGlobalModel) -> SecureGradients:
    """
    δ = softmax(Z) - Y; g_W,j = H_j ⊗ δ_j, g_b,j = δ_j e g_H,j = δ_j Wᵀ.

    Args:
        H: embeddings concatenados (B x d_H)
        labels: one-hot (B x S)
    """
    B, d = H.shape
    S = labels.shape[1]
    probs = secure_math.softmax(secure_logits(backend, H, model))
    delta = backend.sub(probs, labels)
    g_W = backend.mul(backend.expand_dims(H, 2), backend.expand_dims(delta, 1))
    theta = backend.concat([backend.reshape(g_W, (B, d * S)), delta], axis=1)
    g_H = backend.matmul(delta, backend.transpose(model.W))
    return SecureGradients(theta=theta, embeddings=g_H)


def local_layer_gradients(backend: SecretBackend, jacobians: SecretValue,
                          g_H: SecretValue) -> SecretValue:
    """
    g_φ,j = J_j · g_H,j para cada amostra.

    Args:
        jacobians: (B, n^L, d_H(i))
        g_H: (B, d_H(i))

    Returns:
        (B, n^L)
    """
    B, rows, _ = jacobians.shape
    column = backend.expand_dims(g_H, -1)
    return backend.reshape(backend.matmul(jacobians, column), (B, rows))


def clip_per_sample(gradients: SecretValue, gamma: float) -> SecretValue:
    """g_j / max(1, ‖g_j‖/γ) sob o ABB."""
    return secure_math.clip_rows(gradients, gamma)


def noisy_mean(backend: SecretBackend, summed: SecretValue, noise_row: SecretValue,
               batch_size: int) -> SecretValue:
    """
    (Σ_j g_j + ruído) / B.

    A linha de ruído já vem com escala f + g e o fator 1/B embutido; a soma
    é levada à mesma escala por um produto público local e um único
    truncamento devolve a escala f.
    """
    extra = noise_row.frac_bits - summed.frac_bits
    scaled = backend.mul_public_fixed(summed, 1.0 / batch_size, frac_bits=extra)
    return backend.truncate(backend.add(scaled, noise_row), extra)


def sgd_update(backend: SecretBackend, model: SharedGlobalModel, gradient: SecretValue,
               eta: float) -> SharedGlobalModel:
    """θ ← θ - η·g̃ com g̃ achatado na ordem (W, b)."""
    n_w = model.W.size
    step = backend.scale_public(backend.index(gradient, slice(0, model.n_params)), eta)
    W = backend.sub(model.W, backend.reshape(backend.index(step, slice(0, n_w)), model.W.shape))
    b = backend.sub(model.b, backend.index(step, slice(n_w, model.n_params)))
    return SharedGlobalModel(W=W, b=b)


def split_columns(backend: SecretBackend, value: SecretValue, widths: Sequence[int]) -> List[SecretValue]:
    """Fatias consecutivas do último eixo."""
    out, offset = [], 0
    for width in widths:
        out.append(backend.index(value, (Ellipsis, slice(offset, offset + width))))
        offset += width
    return out

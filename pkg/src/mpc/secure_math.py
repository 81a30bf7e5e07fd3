"""
Secure Math: Funções compostas sobre as primitivas do ABB

Todas as funções usam apenas primitivas (mul, ltz, truncamento e operações
locais), portanto valem para qualquer backend e herdam o custo dele.

- div / reciprocal: normalização por bits de faixa + Newton (15 iterações)
- sqrt: normalização + Newton para 1/sqrt (15 iterações)
- exp: clamp em [-16, 16], base cúbica com f+8 bits e 8 quadraturas
- maximum / max_one / clamp / row_max: seleção via ltz
- softmax, l2_norm, clip_rows
"""

import logging
from typing import List, Sequence

import numpy as np

try:
    from .abb import ALL_SERVERS, SecretBackend, SecretValue
    from .errors import DomainError
except ImportError:
    # Para execução direta
    from abb import ALL_SERVERS, SecretBackend, SecretValue
    from errors import DomainError

logger = logging.getLogger(__name__)

NEWTON_ITERATIONS = 15
EXP_CLAMP = 16.0
EXP_EXTRA_BITS = 8
EXP_SQUARINGS = 8

DIV_INITIAL_A = 2.9142
SQRT_INITIAL_A = 1.8284
SQRT_INITIAL_B = 0.8284


def _backend(value: SecretValue) -> SecretBackend:
    return value.backend


def _guard(bad: SecretValue, step: str) -> None:
    """Abre aos servidores apenas a contagem agregada de violações."""
    bk = _backend(bad)
    if not bk.config.domain_guards:
        return
    count = bk.open(bk.sum(bad), step, ALL_SERVERS, kind="guard")
    violations = int(round(float(np.asarray(count))))
    if violations > 0:
        logger.error(f"❌ {violations} elemento(s) fora do domínio em '{step}'")
        raise DomainError(f"{violations} elemento(s) fora do domínio em '{step}'")


def _range_bits(value: SecretValue, exponents: Sequence[int], extra: Sequence[SecretValue] = ()) -> SecretValue:
    """
    Um único ltz em lote para [value < 2^j] de cada expoente (e valores extras).

    Returns:
        Bits (escala 0) com um eixo inicial de tamanho len(exponents) + len(extra)
    """
    bk = _backend(value)
    count = len(exponents)
    stacked = bk.broadcast_to(bk.expand_dims(value, 0), (count,) + value.shape)
    powers = np.array([2.0 ** j for j in exponents]).reshape((count,) + (1,) * value.ndim)
    stacked = bk.add_public(stacked, -powers)
    if extra:
        stacked = bk.concat([stacked] + [bk.expand_dims(e, 0) for e in extra], axis=0)
    return bk.ltz(stacked)


def _weights(delta: SecretValue, constants: Sequence[float], frac_bits: int) -> SecretValue:
    """Σ δ_j · enc(c_j), local: δ são bits e c_j constantes públicas."""
    bk = _backend(delta)
    encoded = np.array([int(round(c * 2 ** frac_bits)) for c in constants], dtype=np.int64)
    encoded = encoded.reshape((len(constants),) + (1,) * (delta.ndim - 1))
    weighted = bk.sum(bk.mul_public_ring(delta, encoded), axis=0)
    return bk.reinterpret(weighted, frac_bits)


def maximum(a: SecretValue, b: SecretValue) -> SecretValue:
    """max(a, b) = a + [a < b]·(b - a)."""
    bk = _backend(a)
    diff = bk.sub(b, a)
    return bk.add(a, bk.mul(bk.ltz(bk.sub(a, b)), diff))


def max_one(x: SecretValue) -> SecretValue:
    """max(1, x) = x - [x < 1]·(x - 1)."""
    bk = _backend(x)
    z = bk.add_public(x, -1.0)
    return bk.sub(x, bk.mul(bk.ltz(z), z))


def clamp(x: SecretValue, lo: float, hi: float) -> SecretValue:
    """Satura x em [lo, hi] com um ltz e um produto em lote."""
    bk = _backend(x)
    below = bk.add_public(x, -lo)
    above = bk.add_public(bk.neg(x), hi)
    bits = bk.ltz(bk.stack([below, above]))
    offsets = bk.stack([below, bk.add_public(x, -hi)])
    moved = bk.mul(bits, offsets)
    return bk.sub(bk.sub(x, moved[0]), moved[1])


def row_max(x: SecretValue) -> SecretValue:
    """Máximo ao longo do último eixo por redução em árvore."""
    bk = _backend(x)
    current = x
    while current.shape[-1] > 1:
        width = current.shape[-1]
        half = width // 2
        left = current[..., :half]
        right = current[..., half:2 * half]
        merged = maximum(left, right)
        if width % 2:
            merged = bk.concat([merged, current[..., 2 * half:]], axis=-1)
        current = merged
    return current[..., 0]


def div(a: SecretValue, b: SecretValue) -> SecretValue:
    """
    Divisão a/b para 2^(-f/2) <= |b| < 2^f.

    O expoente de |b| é localizado por bits de faixa; |b|·2^-(j+1) fica em
    [0.5, 1) e a recíproca converge por Newton a partir de 2.9142 - 2x.

    Raises:
        DomainError: |b| fora do domínio (via abertura de guarda)
    """
    bk = _backend(b)
    f = bk.spec.frac_bits
    exponents = list(range(-(f // 2), f + 1))

    negative = bk.ltz(b)
    sign = bk.add_public(bk.mul_public_ring(negative, -2), 1.0)
    magnitude = bk.mul(b, sign)

    below = _range_bits(magnitude, exponents)
    at_least = bk.add_public(bk.neg(below), 1.0)
    _guard(bk.add(bk.add_public(bk.neg(at_least[0]), 1.0), at_least[-1]), "div_guard")

    delta = bk.sub(at_least[:-1], at_least[1:])
    scale = _weights(delta, [2.0 ** -(j + 1) for j in exponents[:-1]], f)

    normalized = bk.mul(magnitude, scale)
    y = bk.add_public(bk.mul_public_ring(normalized, -2), DIV_INITIAL_A)
    for _ in range(NEWTON_ITERATIONS):
        error = bk.add_public(bk.neg(bk.mul(normalized, y)), 2.0)
        y = bk.mul(y, error)

    signed_a = bk.mul(a, sign)
    bk.cost.count("div")
    return bk.mul(bk.mul(signed_a, scale), y)


def reciprocal(b: SecretValue) -> SecretValue:
    bk = _backend(b)
    return div(bk.public(np.ones(b.shape)), b)


def sqrt(a: SecretValue) -> SecretValue:
    """
    Raiz quadrada para 0 <= a < 2^f; sqrt(0) = 0.

    a·2^-(j+1) ∈ [0.5, 1) converge para 1/sqrt por Newton e o resultado
    é reescalado por 2^((j+1)/2) codificado com f+8 bits.

    Raises:
        DomainError: a negativo ou a >= 2^f
    """
    bk = _backend(a)
    f = bk.spec.frac_bits
    exponents = list(range(-f, f + 1))

    below = _range_bits(a, exponents, extra=[a])
    negative = below[-1]
    at_least = bk.add_public(bk.neg(below[:-1]), 1.0)
    _guard(bk.add(negative, at_least[-1]), "sqrt_guard")

    delta = bk.sub(at_least[:-1], at_least[1:])
    norm_scale = _weights(delta, [2.0 ** -(j + 1) for j in exponents[:-1]], f)
    root_scale = _weights(delta, [2.0 ** ((j + 1) / 2.0) for j in exponents[:-1]], f + 8)

    normalized = bk.mul(a, norm_scale)
    half = bk.reinterpret(normalized, f + 1)
    y = bk.add_public(bk.scale_public(normalized, -SQRT_INITIAL_B), SQRT_INITIAL_A)
    for _ in range(NEWTON_ITERATIONS):
        y2 = bk.mul(y, y)
        t = bk.mul(half, y2, out_frac=f)
        y = bk.mul(y, bk.add_public(bk.neg(t), 1.5))

    root = bk.mul(normalized, y)
    bk.cost.count("sqrt")
    return bk.mul(root, root_scale, out_frac=f)


def exp(x: SecretValue) -> SecretValue:
    """
    e^x com x saturado em [-16, 16].

    x/2^8 (reinterpretado com f+8 bits) alimenta uma base cúbica; oito
    quadraturas recompõem e^x. A sétima desce para f bits.

    Raises:
        ValueError: se k < 2f + 32
    """
    bk = _backend(x)
    f = bk.spec.frac_bits
    if bk.spec.total_bits < 2 * f + 32:
        raise ValueError(f"exp exige k >= 2f + 32 (k={bk.spec.total_bits}, f={f})")
    wide = f + EXP_EXTRA_BITS

    clamped = clamp(x, -EXP_CLAMP, EXP_CLAMP)
    u = bk.reinterpret(bk.rescale(clamped, f), wide)

    # 1 + u(1 + u(1/2 + u/6))
    inner = bk.add_public(bk.scale_public(u, 1.0 / 6.0), 0.5)
    middle = bk.add_public(bk.mul(u, inner), 1.0)
    y = bk.add_public(bk.mul(u, middle), 1.0)

    for _ in range(EXP_SQUARINGS - 2):
        y = bk.mul(y, y)
    y = bk.mul(y, y, out_frac=f)
    y = bk.mul(y, y)
    bk.cost.count("exp")
    return y


def softmax(logits: SecretValue) -> SecretValue:
    """Softmax por linha com deslocamento pelo máximo."""
    bk = _backend(logits)
    shifted = bk.sub(logits, bk.expand_dims(row_max(logits), -1))
    numerators = exp(shifted)
    inverse = reciprocal(bk.sum(numerators, axis=-1))
    return bk.mul(numerators, bk.expand_dims(inverse, -1))


def l2_norm(g: SecretValue, axis: int = -1) -> SecretValue:
    bk = _backend(g)
    return sqrt(bk.sum(bk.mul(g, g), axis=axis))


def clip_rows(g: SecretValue, gamma: float) -> SecretValue:
    """
    Recorte por amostra: g_j / max(1, ‖g_j‖/γ) em cada linha.

    Args:
        g: gradientes por amostra (B x n)
        gamma: limiar de recorte (> 0)
    """
    if gamma <= 0:
        raise ValueError(f"gamma deve ser positivo, recebido {gamma}")
    bk = _backend(g)
    ratio = bk.scale_public(l2_norm(g), 1.0 / gamma)
    factor = reciprocal(max_one(ratio))
    return bk.mul(g, bk.expand_dims(factor, -1))


def secure_sum(values: List[SecretValue]) -> SecretValue:
    bk = _backend(values[0])
    total = values[0]
    for value in values[1:]:
        total = bk.add(total, value)
    return total

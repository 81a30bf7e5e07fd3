"""
Numerics: Aritmética de ponto fixo sobre o anel Z_{2^k}

Representação:
- k <= 64: arrays numpy uint64 mascarados (o wrap natural do uint64 é mod 2^64)
- k = 128: arrays numpy de objetos com inteiros Python

Valores reais x são codificados como round(x * 2^f) mod 2^k em complemento de dois.
"""

import logging
from dataclasses import dataclass
from typing import Any, Optional, Tuple, Union

import numpy as np

try:
    from .errors import FixedPointOverflowError, ShapeMismatchError
except ImportError:
    # Para execução direta
    from errors import FixedPointOverflowError, ShapeMismatchError

logger = logging.getLogger(__name__)

ALLOWED_RING_BITS = (32, 64, 128)
TEST_RING_BITS = (8, 16)

_LITTLE_ENDIAN_DTYPES = {1: "<u1", 2: "<u2", 4: "<u4", 8: "<u8"}

RingArray = np.ndarray


@dataclass(frozen=True)
class FixedPointSpec:
    """
    Especificação do anel de ponto fixo.

    Attributes:
        total_bits: k, tamanho do anel em bits
        frac_bits: f, bits fracionários
    """
    total_bits: int = 64   # k ∈ {32, 64, 128}; {8, 16} só para testes estatísticos
    frac_bits: int = 16    # f, 0 < f < k

    def __post_init__(self):
        if self.total_bits not in ALLOWED_RING_BITS + TEST_RING_BITS:
            raise ValueError(
                f"total_bits={self.total_bits} inválido; use um de {ALLOWED_RING_BITS + TEST_RING_BITS}"
            )
        if not 0 < self.frac_bits < self.total_bits:
            raise ValueError(
                f"frac_bits={self.frac_bits} deve satisfazer 0 < f < k={self.total_bits}"
            )

    @property
    def modulus(self) -> int:
        return 1 << self.total_bits

    @property
    def mask(self) -> int:
        return self.modulus - 1

    @property
    def is_wide(self) -> bool:
        return self.total_bits > 64

    @property
    def element_bytes(self) -> int:
        return (self.total_bits + 7) // 8

    @property
    def max_magnitude(self) -> float:
        """Maior |x| representável (exclusivo): 2^(k-f-1)."""
        return float(2 ** (self.total_bits - self.frac_bits - 1))

    # ------------------------------------------------------------------
    # Conversões básicas
    # ------------------------------------------------------------------

    def reduce(self, values: Any) -> RingArray:
        """Reduz inteiros (uint64/int64/objeto) para o anel."""
        if self.is_wide:
            arr = np.asarray(values, dtype=object)
            return np.asarray(arr % self.modulus, dtype=object)
        arr = np.asarray(values)
        if arr.dtype == object:
            arr = np.asarray([int(v) % self.modulus for v in arr.ravel()],
                             dtype=np.uint64).reshape(arr.shape)
        elif arr.dtype != np.uint64:
            arr = arr.astype(np.int64).astype(np.uint64)
        if self.total_bits == 64:
            return arr
        return arr & np.uint64(self.mask)

    def zeros(self, shape: Tuple[int, ...]) -> RingArray:
        if self.is_wide:
            out = np.empty(shape, dtype=object)
            out.fill(0)
            return out
        return np.zeros(shape, dtype=np.uint64)

    def constant(self, value: int, shape: Tuple[int, ...] = ()) -> RingArray:
        """Inteiro público (possivelmente negativo) replicado em um array do anel."""
        v = int(value) % self.modulus
        if self.is_wide:
            out = np.empty(shape, dtype=object)
            out.fill(v)
            return out
        return np.full(shape, np.uint64(v), dtype=np.uint64)

    def to_signed(self, r: RingArray) -> np.ndarray:
        """Reinterpreta elementos do anel como inteiros com sinal."""
        half = 1 << (self.total_bits - 1)
        if self.is_wide:
            arr = np.asarray(r, dtype=object)
            return np.where(arr >= half, arr - self.modulus, arr).astype(object)
        arr = np.asarray(r, dtype=np.uint64)
        signed = arr.astype(np.int64)
        if self.total_bits == 64:
            return signed
        return np.where(signed >= half, signed - (1 << self.total_bits), signed)

    def from_signed(self, s: np.ndarray) -> RingArray:
        if self.is_wide:
            return self.reduce(np.asarray(s, dtype=object))
        return self.reduce(np.asarray(s, dtype=np.int64))

    def random(self, shape: Tuple[int, ...], rng: np.random.Generator) -> RingArray:
        """Elementos uniformes do anel a partir de um gerador numpy."""
        shape = tuple(shape)
        if self.is_wide:
            lo = rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
            hi = rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
            out = np.empty(shape, dtype=object)
            flat = out.reshape(-1)
            for idx, (h, l) in enumerate(zip(hi.reshape(-1), lo.reshape(-1))):
                flat[idx] = (int(h) << 64) | int(l)
            return out
        raw = rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
        return self.reduce(raw)

    def bits(self, r: RingArray, count: Optional[int] = None) -> np.ndarray:
        """Decomposição em bits (LSB primeiro) com eixo de bits à frente."""
        count = self.total_bits if count is None else count
        if self.is_wide:
            arr = np.asarray(r, dtype=object)
            return np.stack([((arr >> j) & 1).astype(np.int64) for j in range(count)])
        arr = np.asarray(r, dtype=np.uint64)
        return np.stack([((arr >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
                         for j in range(count)])

    # ------------------------------------------------------------------
    # Serialização (ceil(k/8) bytes por elemento, little-endian)
    # ------------------------------------------------------------------

    def to_bytes(self, r: RingArray) -> bytes:
        if self.is_wide:
            n = self.element_bytes
            return b"".join(int(v).to_bytes(n, "little") for v in np.asarray(r, dtype=object).ravel())
        dtype = _LITTLE_ENDIAN_DTYPES[self.element_bytes]
        return np.ascontiguousarray(np.asarray(r, dtype=np.uint64).astype(dtype)).tobytes()

    def from_bytes(self, data: bytes, shape: Tuple[int, ...]) -> RingArray:
        count = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
        n = self.element_bytes
        if len(data) != count * n:
            raise ShapeMismatchError(
                f"Payload com {len(data)} bytes incompatível com shape {shape} ({n} bytes/elemento)"
            )
        if self.is_wide:
            values = [int.from_bytes(data[i * n:(i + 1) * n], "little") for i in range(count)]
            return np.asarray(values, dtype=object).reshape(shape)
        dtype = _LITTLE_ENDIAN_DTYPES[n]
        return np.frombuffer(data, dtype=dtype).astype(np.uint64).reshape(shape)


def default_spec() -> FixedPointSpec:
    """Anel padrão: k=64, f=16."""
    return FixedPointSpec()


# ----------------------------------------------------------------------
# Codificação
# ----------------------------------------------------------------------

def encode(x: Union[float, np.ndarray], spec: FixedPointSpec,
           frac_bits: Optional[int] = None) -> RingArray:
    """
    Codifica reais em ponto fixo: round(x * 2^f) mod 2^k.

    Args:
        x: escalar ou array de reais
        spec: especificação do anel
        frac_bits: escala alternativa (padrão spec.frac_bits)

    Returns:
        Array do anel com o mesmo shape de x
    """
    f = spec.frac_bits if frac_bits is None else frac_bits
    values = np.asarray(x, dtype=np.float64)
    bound = float(2 ** (spec.total_bits - f - 1))
    if not np.all(np.isfinite(values)) or np.any(np.abs(values) >= bound):
        worst = float(np.max(np.abs(values))) if values.size else 0.0
        raise FixedPointOverflowError(
            f"Valor {worst:.6g} fora do intervalo representável ±{bound:.6g} (k={spec.total_bits}, f={f})"
        )
    scaled = np.rint(values * float(2 ** f))
    if spec.is_wide:
        ints = np.empty(values.shape, dtype=object)
        flat = ints.reshape(-1)
        for idx, v in enumerate(scaled.reshape(-1)):
            flat[idx] = int(v)
        return spec.reduce(ints)
    return spec.reduce(scaled.astype(np.int64))


def decode(r: RingArray, spec: FixedPointSpec, frac_bits: Optional[int] = None) -> np.ndarray:
    """Reinterpretação com sinal dividida por 2^f."""
    f = spec.frac_bits if frac_bits is None else frac_bits
    signed = spec.to_signed(r)
    return np.asarray(signed, dtype=np.float64) / float(2 ** f)


# ----------------------------------------------------------------------
# Aritmética do anel
# ----------------------------------------------------------------------

def ring_add(a: RingArray, b: RingArray, spec: FixedPointSpec) -> RingArray:
    with np.errstate(over="ignore"):
        return spec.reduce(np.asarray(a) + np.asarray(b))


def ring_sub(a: RingArray, b: RingArray, spec: FixedPointSpec) -> RingArray:
    with np.errstate(over="ignore"):
        if spec.is_wide:
            return spec.reduce(np.asarray(a, dtype=object) - np.asarray(b, dtype=object))
        return spec.reduce(np.asarray(a, dtype=np.uint64) - np.asarray(b, dtype=np.uint64))


def ring_neg(a: RingArray, spec: FixedPointSpec) -> RingArray:
    return ring_sub(spec.zeros(np.shape(a)), a, spec)


def ring_mul(a: RingArray, b: RingArray, spec: FixedPointSpec) -> RingArray:
    with np.errstate(over="ignore"):
        return spec.reduce(np.asarray(a) * np.asarray(b))


def ring_matmul(a: RingArray, b: RingArray, spec: FixedPointSpec) -> RingArray:
    with np.errstate(over="ignore"):
        return spec.reduce(np.matmul(np.asarray(a), np.asarray(b)))


def ring_sum(a: RingArray, spec: FixedPointSpec, axis=None, keepdims: bool = False) -> RingArray:
    with np.errstate(over="ignore"):
        return spec.reduce(np.sum(np.asarray(a), axis=axis, keepdims=keepdims))


def truncate(r: RingArray, bits: int, spec: FixedPointSpec) -> RingArray:
    """Deslocamento aritmético com sinal (floor) de `bits` bits."""
    if bits == 0:
        return spec.reduce(r)
    return spec.from_signed(spec.to_signed(r) >> bits)


def fixed_mul(a: RingArray, b: RingArray, spec: FixedPointSpec) -> RingArray:
    """
    Produto de ponto fixo com truncamento determinístico por floor.

    O produto é calculado em largura dupla (inteiros exatos) antes do
    deslocamento de f bits; erro <= 2^(1-f) * max(|a|, |b|, 1).

    Raises:
        FixedPointOverflowError: se o produto real não for representável
    """
    sa = np.asarray(spec.to_signed(a), dtype=object)
    sb = np.asarray(spec.to_signed(b), dtype=object)
    exact = np.asarray((sa * sb) >> spec.frac_bits, dtype=object)
    limit = 1 << (spec.total_bits - 1)
    if exact.size and (np.max(exact) >= limit or np.min(exact) < -limit):
        raise FixedPointOverflowError(
            f"Produto fora do anel (k={spec.total_bits}, f={spec.frac_bits})"
        )
    return spec.reduce(exact) if spec.is_wide else spec.reduce(
        np.asarray(exact, dtype=np.int64))


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    print("🧮 Testando aritmética de ponto fixo...")
    try:
        spec = default_spec()
        x = np.array([0.0, 1.5, -1.0, 3.25])
        enc = encode(x, spec)
        print(f"✅ Codificado: {enc}")
        print(f"✅ Decodificado: {decode(enc, spec)}")
        prod = fixed_mul(encode(1.5, spec), encode(-2.25, spec), spec)
        print(f"✅ 1.5 * -2.25 = {decode(prod, spec)}")
    except Exception as e:
        print(f"❌ Erro: {e}")

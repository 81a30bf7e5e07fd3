"""
BandMF: Fatoração por bandas (p-BSR) e ruído correlacionado

Ω é uma matriz de Toeplitz triangular inferior com bandas, descrita pelos
coeficientes c_0..c_{p-1} (c_0 = 1). Tudo aqui opera sobre os
coeficientes, sem materializar a matriz T x T (exceto o oráculo denso).
"""

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

try:
    from ..mpc.abb import SecretBackend, SecretValue
    from .dpcore import NoiseTable
except ImportError:
    # Para execução direta
    from mpc.abb import SecretBackend, SecretValue
    from dpcore import NoiseTable

logger = logging.getLogger(__name__)

NOISE_EXTRA_BITS = 32
NOISE_WINDOW_BITS = 8


class ScheduleError(ValueError):
    """Esquema de participação inviável ou banda inválida."""


@dataclass(frozen=True)
class WorkloadParams:
    """Carga de trabalho do SGD: decaimento α, momento β, taxa η, T passos."""
    alpha: float = 1.0
    beta: float = 0.0
    eta: float = 1.0
    steps: int = 0                  # 0 = ainda não fixado

    def with_steps(self, steps: int) -> "WorkloadParams":
        return WorkloadParams(self.alpha, self.beta, self.eta, steps)


SETTING_1 = WorkloadParams(alpha=1.0, beta=0.0)
SETTING_2 = WorkloadParams(alpha=1.0, beta=0.9)


def setting_params(setting: int, steps: int = 0) -> WorkloadParams:
    """Presets nomeados (1: SGD simples, 2: momento 0.9)."""
    presets = {1: SETTING_1, 2: SETTING_2}
    if setting not in presets:
        raise ValueError(f"Setting desconhecido: {setting} (use 1 ou 2)")
    return presets[setting].with_steps(steps)


@dataclass(frozen=True)
class BsrCoefficients:
    """Coeficientes c_0..c_{p-1}; c_j = 0 para j >= p."""
    p: int
    c: np.ndarray

    def padded(self, steps: int) -> np.ndarray:
        """Os T primeiros coeficientes da coluna 0 de Ω."""
        out = np.zeros(steps, dtype=np.float64)
        n = min(self.p, steps)
        out[:n] = self.c[:n]
        return out


@dataclass(frozen=True)
class ParticipationSchema:
    """Cada amostra participa κ vezes, com exatamente b passos de separação."""
    kappa: int
    b: int

    def validate(self, steps: int) -> None:
        if self.kappa < 1 or self.b < 1:
            raise ScheduleError(f"Esquema inválido: κ={self.kappa}, b={self.b}")
        if 1 + (self.kappa - 1) * self.b > steps:
            raise ScheduleError(
                f"Esquema inviável: 1 + (κ-1)·b = {1 + (self.kappa - 1) * self.b} > T = {steps}")


def binom_half(i: int) -> float:
    """r_i = |binom(-1/2, i)| pela recorrência r_i = r_{i-1}(i - 1/2)/i."""
    if i < 0:
        raise ValueError(f"Índice negativo: {i}")
    return float(binom_half_sequence(i + 1)[-1])


def binom_half_sequence(n: int) -> np.ndarray:
    """r_0..r_{n-1}."""
    r = np.ones(max(n, 1), dtype=np.float64)
    for i in range(1, n):
        r[i] = r[i - 1] * (i - 0.5) / i
    return r[:n]


def bsr_coeffs(params: WorkloadParams, p: int) -> BsrCoefficients:
    """
    c_j = Σ_{i<=j} α^(j-i) r_{j-i} r_i β^i para j < p.

    Args:
        params: carga de trabalho (α, β)
        p: largura da banda (1 <= p <= T quando T é conhecido)
    """
    if p < 1:
        raise ScheduleError(f"Banda inválida: p={p}")
    if params.steps and p > params.steps:
        raise ScheduleError(f"Banda p={p} maior que T={params.steps}")
    r = binom_half_sequence(p)
    alpha_pow = params.alpha ** np.arange(p)
    beta_pow = params.beta ** np.arange(p)
    c = np.empty(p, dtype=np.float64)
    for j in range(p):
        i = np.arange(j + 1)
        c[j] = np.sum(alpha_pow[j - i] * r[j - i] * r[i] * beta_pow[i])
    return BsrCoefficients(p=p, c=c)


def _check_leading(c: np.ndarray) -> None:
    if c.size == 0 or c[0] == 0:
        raise ScheduleError("c_0 = 0: matriz de Toeplitz singular")


def toeplitz_apply(c: Sequence[float], steps: int, stream: np.ndarray) -> np.ndarray:
    """y_t = Σ_{j<p, j<=t} c_j x_{t-j} linha a linha."""
    coef = np.asarray(c, dtype=np.float64)
    _check_leading(coef)
    x = np.asarray(stream, dtype=np.float64)
    if x.shape[0] != steps:
        raise ValueError(f"Fluxo com {x.shape[0]} linhas, esperado {steps}")
    y = np.zeros_like(x)
    for j in range(min(coef.size, steps)):
        y[j:] += coef[j] * x[:steps - j]
    return y


def toeplitz_inv_apply(c: Sequence[float], steps: int, stream: np.ndarray) -> np.ndarray:
    """
    Substituição progressiva x_t = (z_t - Σ_{j=1}^{min(p-1,t)} c_j x_{t-j}) / c_0.

    Mantém apenas as últimas p-1 linhas resolvidas.
    """
    coef = np.asarray(c, dtype=np.float64)
    _check_leading(coef)
    z = np.asarray(stream, dtype=np.float64)
    if z.shape[0] != steps:
        raise ValueError(f"Fluxo com {z.shape[0]} linhas, esperado {steps}")
    window: Deque[np.ndarray] = deque(maxlen=max(coef.size - 1, 1))
    out = np.empty_like(z)
    for t in range(steps):
        acc = np.array(z[t], dtype=np.float64)
        for j, previous in enumerate(reversed(window), start=1):
            if j >= coef.size:
                break
            acc -= coef[j] * previous
        out[t] = acc / coef[0]
        if coef.size > 1:
            window.append(out[t])
    return out


def inverse_coeffs(c: Sequence[float], steps: int) -> np.ndarray:
    """Coeficientes (coluna 0) de Ω⁻¹, também Toeplitz triangular inferior."""
    unit = np.zeros((steps, 1))
    unit[0, 0] = 1.0
    return toeplitz_inv_apply(c, steps, unit)[:, 0]


def inverse_row_norm(c: Sequence[float], t: int, squared: bool = True,
                     inverse: Optional[np.ndarray] = None) -> float:
    """‖Ω⁻¹[t, :]‖ (ao quadrado por padrão); a linha t tem entradas inv_t..inv_0."""
    inv = inverse if inverse is not None else inverse_coeffs(c, t + 1)
    norm_sq = float(np.sum(inv[:t + 1] ** 2))
    return norm_sq if squared else float(np.sqrt(norm_sq))


def dense_toeplitz(c: Sequence[float], steps: int) -> np.ndarray:
    """Matriz T x T materializada (oráculo de testes)."""
    col = np.zeros(steps)
    coef = np.asarray(c, dtype=np.float64)[:steps]
    col[:coef.size] = coef
    return toeplitz(col, np.zeros(steps))


def sensitivity(c: Sequence[float], schema: ParticipationSchema, steps: int) -> float:
    """
    ‖Σ_{j<κ} Ω[:, j·b]‖₂ sem materializar Ω.

    Soma acumulada por blocos de b linhas; subtraindo o acumulado κ blocos
    antes restam exatamente as κ primeiras participações.
    """
    schema.validate(steps)
    coef = np.asarray(c, dtype=np.float64)
    b, kappa = schema.b, schema.kappa
    padding = (b - steps) % b
    column = np.zeros(steps + padding)
    n = min(coef.size, steps)
    column[:n] = coef[:n]
    vector = column.reshape(-1, b).cumsum(axis=0).reshape(-1)
    shift = kappa * b
    if shift < vector.size:
        vector[shift:] = vector[shift:] - vector[:-shift]
    vector = vector[:steps]
    return float(np.sqrt(vector @ vector))


def participation_trace(num_batches: int, epochs: int) -> np.ndarray:
    """Lote visitado em cada passo na ordem fixa: t mod B_num."""
    return np.arange(num_batches * epochs) % num_batches


def sample_participations(trace: np.ndarray, batch_of_sample: np.ndarray) -> Dict[int, List[int]]:
    """Passos em que cada amostra participa."""
    steps_by_batch: Dict[int, List[int]] = {}
    for t, batch in enumerate(trace):
        steps_by_batch.setdefault(int(batch), []).append(t)
    return {int(j): steps_by_batch.get(int(batch), []) for j, batch in enumerate(batch_of_sample)}


def save_coeffs(path: str, coeffs: BsrCoefficients) -> None:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(output, coeffs.c, fmt="%.17g")
    logger.info(f"💾 Coeficientes salvos: {output} (p={coeffs.p})")


def load_coeffs(path: str) -> BsrCoefficients:
    c = np.atleast_1d(np.loadtxt(path, dtype=np.float64))
    return BsrCoefficients(p=int(c.size), c=c)


class CorrelatedNoiseStream:
    """
    Linhas de Ω⁻¹·tabela por substituição progressiva sobre os compartilhamentos.

    u_t = (z_t - Σ_{j=1}^{min(p-1,t)} c_j u_{t-j}) / c_0, guardando só as
    últimas p-1 linhas u (escala f + window_bits). Os coeficientes c_j/c_0
    são codificados com extra_bits - window_bits bits; a soma sai com escala
    f + extra_bits e um truncamento a devolve à escala da janela. Esse
    truncamento não depende dos dados e é lançado como pré-processamento;
    a fase online não troca nenhum byte. Cada linha emitida tem escala
    f + extra_bits com o pós-escalonamento público embutido.
    """

    def __init__(self, backend: SecretBackend, table: NoiseTable, coeffs: Sequence[float],
                 post_scale: float = 1.0, extra_bits: int = NOISE_EXTRA_BITS,
                 window_bits: int = NOISE_WINDOW_BITS):
        """
        Args:
            backend: coorte dona da tabela
            table: tabela T x d do protocolo GS
            coeffs: coeficientes de Ω (c_0 != 0)
            post_scale: constante pública multiplicada em cada linha (ex.: 1/B)
            extra_bits: bits fracionários extras das linhas emitidas
            window_bits: bits extras das linhas guardadas na janela
        """
        coef = np.asarray(coeffs, dtype=np.float64)
        _check_leading(coef)
        if not 0 < window_bits < extra_bits:
            raise ValueError(f"window_bits={window_bits} deve ficar em (0, {extra_bits})")
        self.backend = backend
        self.table = table
        self.steps = table.shape[0]
        self.extra_bits = extra_bits
        self.window_bits = window_bits
        self.coeff_bits = extra_bits - window_bits
        self.post_scale = post_scale
        self.p = int(min(coef.size, self.steps))
        self.ratios = coef[1:self.p] / coef[0]
        self.lead = 1.0 / coef[0]
        self.window: Deque[SecretValue] = deque(maxlen=max(self.p - 1, 1))
        self.inverse = inverse_coeffs(coef, self.steps)
        self.rows_emitted = 0

    def row(self, t: int) -> SecretValue:
        """Linha t (formato (d,), escala f + extra_bits); consumida em ordem."""
        if not 0 <= t < self.steps:
            raise IndexError(f"Passo {t} fora da tabela com {self.steps} linhas")
        if t != self.rows_emitted:
            raise ValueError(f"Fluxo em ordem: esperado o passo {self.rows_emitted}, pedido {t}")
        backend = self.backend
        z = backend.index(self.table.values, t)
        self.rows_emitted += 1
        if self.p == 1:
            return backend.mul_public_fixed(z, self.post_scale * self.lead, frac_bits=self.extra_bits)

        acc = backend.mul_public_fixed(z, self.lead, frac_bits=self.extra_bits)
        for ratio, previous in zip(self.ratios, reversed(self.window)):
            acc = backend.sub(acc, backend.mul_public_fixed(previous, ratio, frac_bits=self.coeff_bits))
        with backend.cost.preprocessing():
            u = backend.truncate(acc, self.coeff_bits)
        self.window.append(u)
        return backend.mul_public_fixed(u, self.post_scale, frac_bits=self.coeff_bits)

    def row_norm(self, t: int, squared: bool = True) -> float:
        return inverse_row_norm(None, t, squared=squared, inverse=self.inverse)


def correlated_noise_stream(backend: SecretBackend, table: NoiseTable, coeffs: Sequence[float],
                            post_scale: float = 1.0, extra_bits: int = NOISE_EXTRA_BITS,
                            window_bits: int = NOISE_WINDOW_BITS) -> CorrelatedNoiseStream:
    """Factory function para o fluxo de ruído correlacionado."""
    return CorrelatedNoiseStream(backend, table, coeffs, post_scale=post_scale,
                                 extra_bits=extra_bits, window_bits=window_bits)

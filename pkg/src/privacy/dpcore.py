"""
DP Core: Contabilidade RDP, calibração de σ e amostragem gaussiana segura

- rdp_gaussian / rdp_subsampled_gaussian: curvas RDP (expansão binomial em log)
- compose_and_convert: composição linear em T passos e conversão para (ε, δ)
- calibrate_sigma: bisseção em σ ∈ [0.3, 100] com cache em JSON
- RdpAccountant: contador imutável de um treinamento
- gs_protocol: tabela de ruído gaussiano compartilhada (protocolo GS)
"""

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

try:
    from ..mpc.abb import SecretBackend, SecretValue
except ImportError:
    # Para execução direta
    from mpc.abb import SecretBackend, SecretValue

logger = logging.getLogger(__name__)

SIGMA_MIN = 0.3
SIGMA_MAX = 100.0
CALIBRATION_SLACK = 0.99
DEFAULT_ORDERS: Tuple[float, ...] = (1.5,) + tuple(float(a) for a in range(2, 257))

MECHANISMS = ("gaussian", "subsampled_gaussian", "bandmf", "ldp")


class CalibrationError(ValueError):
    """Alvo de ε inalcançável com σ dentro dos limites de busca."""


class AccountingError(RuntimeError):
    """ε contabilizado excede o alvo configurado."""


@dataclass
class PrivacyParams:
    """Parâmetros de privacidade de um treinamento."""
    epsilon: float = 8.0              # alvo (math.inf desliga a privacidade)
    delta: float = 1e-5
    clip_gamma: float = 1.2           # limiar de recorte γ
    sigma: Optional[float] = None     # multiplicador de ruído; None = calibrar

    def validate(self, num_samples: Optional[int] = None) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon deve ser positivo, recebido {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta deve estar em (0, 1), recebido {self.delta}")
        if not self.clip_gamma > 0:
            raise ValueError(f"clip_gamma deve ser positivo, recebido {self.clip_gamma}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"sigma não pode ser negativo, recebido {self.sigma}")
        if num_samples and self.delta >= 1.0 / num_samples:
            logger.warning(f"⚠️ delta={self.delta:g} >= 1/M={1.0 / num_samples:g}")


@dataclass
class NoiseTable:
    """Tabela T x d de ruído compartilhado e o desvio padrão nominal por entrada."""
    values: SecretValue
    scale: float

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


# ----------------------------------------------------------------------
# Curvas RDP
# ----------------------------------------------------------------------

def rdp_gaussian(alpha: float, sigma: float) -> float:
    """ε_α = α / (2σ²); σ = 0 devolve infinito."""
    if sigma <= 0:
        return math.inf
    return alpha / (2.0 * sigma ** 2)


def _log_binomial(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def rdp_subsampled_gaussian(alpha: float, sigma: float, q: float) -> float:
    """
    Limite RDP do gaussiano subamostrado para ordem inteira α.

    log A_α = log Σ_i C(α, i) (1-q)^(α-i) q^i exp((i² - i) / (2σ²)),
    calculado em espaço log; ε_α = log A_α / (α - 1).

    Args:
        alpha: ordem (inteira se 0 < q < 1)
        sigma: multiplicador de ruído
        q: taxa de amostragem

    Returns:
        ε_α (math.inf se σ = 0 e q > 0)
    """
    if not 0 <= q <= 1:
        raise ValueError(f"q deve estar em [0, 1], recebido {q}")
    if q == 0:
        return 0.0
    if sigma <= 0:
        return math.inf
    if q == 1:
        return rdp_gaussian(alpha, sigma)
    if float(alpha) != int(alpha):
        raise ValueError(f"Ordem fracionária {alpha} só é suportada com q = 1")

    order = int(alpha)
    i = np.arange(order + 1, dtype=np.float64)
    log_terms = (_log_binomial(order, i) + i * math.log(q) + (order - i) * math.log1p(-q)
                 + (i * i - i) / (2.0 * sigma ** 2))
    log_a = float(logsumexp(log_terms))
    return max(log_a, 0.0) / (order - 1)


def rdp_curve(sigma: float, q: float, orders: Sequence[float] = DEFAULT_ORDERS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Curva RDP por passo na grade de ordens.

    A ordem 1.5 só entra com q = 1.

    Returns:
        (ordens, ε_α) como arrays
    """
    usable = [a for a in orders if a > 1 and (q == 1 or float(a) == int(a))]
    values = [rdp_subsampled_gaussian(a, sigma, q) for a in usable]
    return np.asarray(usable, dtype=np.float64), np.asarray(values, dtype=np.float64)


def compose_and_convert(orders: Sequence[float], rdp: Sequence[float], steps: int, delta: float) -> float:
    """
    ε = min_α T·ε_α + log(1/δ)/(α - 1).

    Args:
        orders: ordens α > 1
        rdp: ε_α por passo, alinhado com `orders`
        steps: número de composições T (>= 0)
        delta: δ alvo

    Returns:
        ε (math.inf se todas as ordens forem infinitas)
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta deve estar em (0, 1), recebido {delta}")
    if steps < 0:
        raise ValueError(f"steps deve ser >= 0, recebido {steps}")
    orders_arr = np.asarray(orders, dtype=np.float64)
    rdp_arr = np.asarray(rdp, dtype=np.float64)
    if orders_arr.size == 0:
        raise ValueError("Grade de ordens vazia")
    composed = steps * rdp_arr if steps else np.zeros_like(orders_arr)
    eps = composed + math.log(1.0 / delta) / (orders_arr - 1.0)
    return float(np.min(eps))


def account(sigma: float, q: float, steps: int, delta: float,
            orders: Sequence[float] = DEFAULT_ORDERS) -> float:
    """ε de T passos do gaussiano (subamostrado com taxa q)."""
    alphas, values = rdp_curve(sigma, q, orders)
    return compose_and_convert(alphas, values, steps, delta)


def classical_gaussian_sigma(epsilon: float, delta: float) -> float:
    """σ do mecanismo gaussiano clássico: sqrt(2 ln(1.25/δ)) / ε."""
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


@dataclass(frozen=True)
class RdpAccountant:
    """
    Contabilidade de um treinamento, fixada antes da primeira liberação.

    Attributes:
        sigma: multiplicador de ruído
        q: taxa de amostragem por passo
        steps: composições
        delta: δ alvo
    """
    sigma: float
    q: float
    steps: int
    delta: float
    mechanism: str = "gaussian"
    orders: Tuple[float, ...] = field(default=DEFAULT_ORDERS, repr=False)

    def rdp_curve(self) -> Tuple[np.ndarray, np.ndarray]:
        return rdp_curve(self.sigma, self.q, self.orders)

    def epsilon(self) -> float:
        return account(self.sigma, self.q, self.steps, self.delta, self.orders)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("orders")
        data["epsilon"] = self.epsilon()
        return data


# ----------------------------------------------------------------------
# Calibração
# ----------------------------------------------------------------------

class CalibrationCache:
    """Cache JSON de σ calibrados, chave '{mecanismo}|eps|delta|q|T'."""

    def __init__(self, path: Optional[str] = None):
        self.path = Path(path) if path else None
        self.entries: Dict[str, float] = {}
        if self.path and self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                self.entries = json.load(f)
            logger.debug(f"📂 Cache de calibração: {len(self.entries)} entradas")

    @staticmethod
    def key(mechanism: str, epsilon: float, delta: float, q: float, steps: int) -> str:
        return f"{mechanism}|{epsilon!r}|{delta!r}|{q!r}|{int(steps)}"

    def get(self, key: str) -> Optional[float]:
        return self.entries.get(key)

    def put(self, key: str, sigma: float) -> None:
        self.entries[key] = sigma
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as f:
                json.dump(self.entries, f, indent=2, sort_keys=True)


def calibrate_sigma(epsilon: float, delta: float, q: float, steps: int,
                    mechanism: str = "gaussian", cache_path: Optional[str] = None,
                    max_iterations: int = 200) -> float:
    """
    Menor σ (na bisseção) cujo ε contabilizado cai em [0.99·alvo, alvo].

    Args:
        epsilon: ε alvo
        delta: δ alvo
        q: taxa de amostragem
        steps: composições T
        mechanism: rótulo do mecanismo (entra apenas na chave do cache)
        cache_path: arquivo JSON de cache (opcional)

    Returns:
        σ calibrado

    Raises:
        CalibrationError: alvo inalcançável com σ <= 100
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon deve ser positivo, recebido {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta deve estar em (0, 1), recebido {delta}")
    if not 0 <= q <= 1:
        raise ValueError(f"q deve estar em [0, 1], recebido {q}")
    if steps < 1:
        raise ValueError(f"steps deve ser >= 1, recebido {steps}")
    if mechanism not in MECHANISMS:
        raise ValueError(f"Mecanismo desconhecido: '{mechanism}'")

    cache = CalibrationCache(cache_path)
    key = cache.key(mechanism, epsilon, delta, q, steps)
    cached = cache.get(key)
    if cached is not None:
        logger.info(f"📂 σ em cache para {key}: {cached:.6f}")
        return cached

    def eps_of(sigma: float) -> float:
        return account(sigma, q, steps, delta)

    hi = SIGMA_MAX
    if eps_of(hi) > epsilon:
        logger.error(f"❌ ε={epsilon} inalcançável com σ <= {SIGMA_MAX}")
        raise CalibrationError(f"ε alvo {epsilon} inalcançável com σ em [{SIGMA_MIN}, {SIGMA_MAX}]")

    lo = SIGMA_MIN
    if eps_of(lo) <= epsilon:
        logger.warning(f"⚠️ σ mínimo {SIGMA_MIN} já satisfaz ε={epsilon}")
        hi = lo
    else:
        for _ in range(max_iterations):
            if eps_of(hi) >= CALIBRATION_SLACK * epsilon:
                break
            mid = 0.5 * (lo + hi)
            if eps_of(mid) > epsilon:
                lo = mid
            else:
                hi = mid

    logger.info(f"🎯 σ calibrado: {hi:.6f} (ε={eps_of(hi):.4f}, alvo={epsilon}, q={q:g}, T={steps})")
    cache.put(key, hi)
    return hi


def accountant_for_variant(variant: str, num_samples: int, batch_size: int,
                           epochs: int) -> Tuple[float, int, str]:
    """
    Parâmetros de contabilidade de cada variante.

    Returns:
        (q, T, mecanismo)
    """
    if variant == "GShuff":
        return batch_size / num_samples, (num_samples // batch_size) * epochs, "subsampled_gaussian"
    if variant in ("GBMF", "GLBMF"):
        return 1.0, 1, "bandmf"
    if variant == "LdpG":
        return 1.0, 1, "ldp"
    if variant == "LdpGL":
        return 1.0, epochs, "ldp"
    raise ValueError(f"Variante sem contabilidade de privacidade: '{variant}'")


def gs_protocol(backend: SecretBackend, steps: int, width: int, scale: float,
                transform: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> NoiseTable:
    """
    Protocolo GS: tabela steps x width com N(0, 1.5·scale²) reconstruído.

    Args:
        backend: coorte de servidores
        steps: linhas (uma por passo)
        width: largura do gradiente
        scale: desvio padrão nominal
        transform: transformação linear pública aplicada por servidor
    """
    if steps < 1 or width < 1:
        raise ValueError(f"Tabela inválida: {steps} x {width}")
    if scale < 0:
        raise ValueError(f"scale não pode ser negativo, recebido {scale}")
    values = backend.gaussian_table(steps, width, scale, transform=transform)
    logger.info(f"🎲 Tabela de ruído {steps}x{width} gerada (escala {scale:.4f})")
    return NoiseTable(values=values, scale=scale)

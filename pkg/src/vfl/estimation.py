"""
Estimation: Reconstrução dos gradientes por amostra recortados no cliente

O cliente i recebe g̃ = (1/B)(H ĝ + N) para a sua camada designada e
conhece as jacobianas H. Multiplicando por B, resolve por ridge:

    ĝ = (HᵀH + λI)⁻¹ Hᵀ y,   y = B·g̃

Este módulo só consome arrays em texto claro já liberados; não há acesso a
valores compartilhados.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, lstsq
from typing_extensions import Literal

logger = logging.getLogger(__name__)

EXACT_EIGEN_LIMIT = 512
POWER_ITERATIONS = 200

EstimatorKind = Literal["ridge", "lstsq"]


class EstimationError(np.linalg.LinAlgError):
    """Equações normais singulares na precisão de trabalho."""


@dataclass
class EstimationConfig:
    """Opções do estimador no cliente."""
    estimator: str = "ridge"             # 'ridge' ou 'lstsq'
    ridge_lambda: Optional[float] = None  # None = (σ_t/B)²
    noise_norm: str = "squared"          # 'squared' ou 'unsquared' para ‖Ω⁻¹[t,:]‖
    eigen_exact_limit: int = EXACT_EIGEN_LIMIT

    def validate(self):
        problems = []
        if self.estimator not in ("ridge", "lstsq"):
            problems.append(f"estimation.estimator inválido: '{self.estimator}'")
        if self.ridge_lambda is not None and self.ridge_lambda < 0:
            problems.append(f"estimation.ridge_lambda não pode ser negativo ({self.ridge_lambda})")
        if self.noise_norm not in ("squared", "unsquared"):
            problems.append(f"estimation.noise_norm inválido: '{self.noise_norm}'")
        if self.eigen_exact_limit < 1:
            problems.append(f"estimation.eigen_exact_limit deve ser >= 1 ({self.eigen_exact_limit})")
        return problems


@dataclass
class LinearSystem:
    """y = H ĝ + ruído, com H de formato n^L x (d·B)."""
    design: np.ndarray
    observation: np.ndarray
    batch_size: int
    embedding_dim: int
    sigma_t: float

    @property
    def rows(self) -> int:
        return self.design.shape[0]

    @property
    def unknowns(self) -> int:
        return self.design.shape[1]

    @property
    def well_posed(self) -> bool:
        return self.rows >= self.unknowns


@dataclass
class Reconstruction:
    """Estimativa ĝ (B x d), vetor achatado, λ usado e limite de erro."""
    estimate: np.ndarray
    flat: np.ndarray
    lam: float
    bound: Optional[float] = None

    def to_dict(self) -> Dict:
        return {"lambda": self.lam, "bound": self.bound, "norm": float(np.linalg.norm(self.flat))}


def effective_noise_std(sigma: float, gamma: float, sens: float, row_norm: float) -> float:
    """σ_t = σ·γ·sens·‖Ω⁻¹[t,:]‖ (a norma chega já elevada, ou não, pelo chamador)."""
    return sigma * gamma * sens * row_norm


def assemble(jacobians: np.ndarray, release: np.ndarray, sigma_t: float = 0.0) -> LinearSystem:
    """
    Monta o sistema com o bloco de colunas j = jacobiana da amostra j.

    Args:
        jacobians: (B, n^L, d)
        release: g̃ liberado (n^L,)
        sigma_t: desvio efetivo do ruído do passo

    Returns:
        LinearSystem com observação B·g̃
    """
    J = np.asarray(jacobians, dtype=np.float64)
    g = np.asarray(release, dtype=np.float64).reshape(-1)
    if J.ndim != 3:
        raise ValueError(f"Jacobianas devem ser (B, n^L, d), recebido {J.shape}")
    B, rows, d = J.shape
    if g.size != rows:
        raise ValueError(f"Liberação com {g.size} entradas para {rows} linhas de jacobiana")
    design = J.transpose(1, 0, 2).reshape(rows, B * d)
    return LinearSystem(design=design, observation=B * g, batch_size=B,
                        embedding_dim=d, sigma_t=float(sigma_t))


def default_lambda(system: LinearSystem) -> float:
    return (system.sigma_t / system.batch_size) ** 2


def _reconstruction(system: LinearSystem, flat: np.ndarray, lam: float) -> Reconstruction:
    return Reconstruction(estimate=flat.reshape(system.batch_size, system.embedding_dim),
                          flat=flat, lam=lam)


def ridge_solve(system: LinearSystem, lam: Optional[float] = None) -> Reconstruction:
    """
    Ridge por Cholesky: forma primal se n^L >= dB, dual Hᵀ(HHᵀ + λI)⁻¹y caso contrário.

    Raises:
        EstimationError: matriz singular (λ = 0 com H sem posto completo)
    """
    lam = default_lambda(system) if lam is None else float(lam)
    if lam < 0:
        raise ValueError(f"λ não pode ser negativo, recebido {lam}")
    H, y = system.design, system.observation
    try:
        if system.well_posed:
            gram = H.T @ H
            gram[np.diag_indices_from(gram)] += lam
            flat = cho_solve(cho_factor(gram, lower=True), H.T @ y)
        else:
            gram = H @ H.T
            gram[np.diag_indices_from(gram)] += lam
            flat = H.T @ cho_solve(cho_factor(gram, lower=True), y)
    except LinAlgError as e:
        logger.error(f"❌ Sistema singular (λ={lam:g}, {system.rows}x{system.unknowns})")
        raise EstimationError(f"Equações normais singulares com λ={lam:g}: {e}") from e
    return _reconstruction(system, flat, lam)


def lstsq_solve(system: LinearSystem) -> Reconstruction:
    """Mínimos quadrados de norma mínima."""
    flat, *_ = lstsq(system.design, system.observation)
    return _reconstruction(system, flat, 0.0)


def eigen_extremes(design: np.ndarray, exact_limit: int = EXACT_EIGEN_LIMIT,
                   seed: int = 0) -> Tuple[float, float]:
    """
    (μ_min, μ_max) de HᵀH.

    Exato (eigh) quando dB <= limite; caso contrário iteração de potência
    para μ_max e iteração inversa para μ_min (0 quando n^L < dB).
    """
    rows, cols = design.shape
    if cols <= exact_limit:
        values = eigh(design.T @ design, eigvals_only=True)
        return max(0.0, float(values[0])), float(values[-1])
    if rows <= exact_limit:
        values = eigh(design @ design.T, eigvals_only=True)
        mu_max = float(values[-1])
        mu_min = 0.0 if rows < cols else max(0.0, float(values[0]))
        return mu_min, mu_max

    rng = np.random.default_rng(seed)
    v = rng.normal(size=cols)
    mu_max = 0.0
    for _ in range(POWER_ITERATIONS):
        w = design.T @ (design @ v)
        mu_max = float(np.linalg.norm(w))
        if mu_max == 0.0:
            return 0.0, 0.0
        v = w / mu_max
    if rows < cols:
        return 0.0, mu_max
    try:
        factor = cho_factor(design.T @ design, lower=True)
    except LinAlgError:
        return 0.0, mu_max
    v = rng.normal(size=cols)
    mu_min = mu_max
    for _ in range(POWER_ITERATIONS):
        w = cho_solve(factor, v)
        norm = float(np.linalg.norm(w))
        mu_min = 1.0 / norm
        v = w / norm
    return max(0.0, mu_min), mu_max


def error_bound(system: LinearSystem, gamma: float,
                extremes: Optional[Tuple[float, float]] = None,
                exact_limit: int = EXACT_EIGEN_LIMIT) -> float:
    """
    Limite do erro quadrático esperado do ridge com λ = (σ_t/B)²:

        (σ⁴γ² + σ²·d·B³·μ_max) / (B²μ_min + σ²)²

    Args:
        gamma: limite de ‖ĝ‖
        extremes: (μ_min, μ_max) já calculados
    """
    sigma = system.sigma_t
    if sigma == 0:
        return 0.0
    mu_min, mu_max = extremes or eigen_extremes(system.design, exact_limit)
    B, d = system.batch_size, system.embedding_dim
    numerator = sigma ** 4 * gamma ** 2 + sigma ** 2 * d * B ** 3 * mu_max
    return float(numerator / (B ** 2 * mu_min + sigma ** 2) ** 2)


def expected_error_terms(system: LinearSystem, truth: np.ndarray, lam: float,
                         noise_std: Optional[float] = None) -> Tuple[float, float]:
    """
    Viés² e variância exatos do ridge para y = Hg + N(0, s²I).

    Args:
        truth: ĝ verdadeiro (achatado ou B x d)
        lam: λ do estimador
        noise_std: s (padrão σ_t/B)

    Returns:
        (viés², variância)
    """
    s = system.sigma_t / system.batch_size if noise_std is None else noise_std
    values, vectors = eigh(system.design.T @ system.design)
    values = np.clip(values, 0.0, None)
    coords = vectors.T @ np.asarray(truth, dtype=np.float64).reshape(-1)
    shrink = lam / (values + lam) if lam > 0 else np.zeros_like(values)
    bias_sq = float(np.sum((shrink * coords) ** 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(values + lam > 0, values / (values + lam) ** 2, 0.0)
    variance = float(s ** 2 * np.sum(ratio))
    return bias_sq, variance


def create_estimator(kind: EstimatorKind = "ridge", lam: Optional[float] = None) -> Callable[[LinearSystem], Reconstruction]:
    """Factory function: 'ridge' (λ fixo ou padrão) ou 'lstsq'."""
    if kind == "ridge":
        return lambda system: ridge_solve(system, lam)
    if kind == "lstsq":
        return lstsq_solve
    raise ValueError(f"Estimador desconhecido: '{kind}'")


def clip_factors(gradients: np.ndarray, gamma: float) -> np.ndarray:
    """1 / max(1, ‖g_j‖/γ) por linha."""
    norms = np.linalg.norm(gradients.reshape(len(gradients), -1), axis=1)
    return 1.0 / np.maximum(1.0, norms / gamma)

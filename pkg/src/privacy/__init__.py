"""
Privacidade diferencial para o treinamento vertical federado

Componentes:
- dpcore: contabilidade RDP, calibração de σ e protocolo GS
- bandmf: coeficientes p-BSR, sensibilidade e ruído correlacionado
"""

__version__ = "1.0.0"
__author__ = "VFL MPC-DP"

from .dpcore import (AccountingError, CalibrationError, NoiseTable, PrivacyParams, RdpAccountant,
                     accountant_for_variant, calibrate_sigma, classical_gaussian_sigma,
                     compose_and_convert, gs_protocol, rdp_gaussian, rdp_subsampled_gaussian)
from .bandmf import (SETTING_1, SETTING_2, BsrCoefficients, CorrelatedNoiseStream,
                     ParticipationSchema, ScheduleError, WorkloadParams, bsr_coeffs,
                     correlated_noise_stream, inverse_coeffs, sensitivity)

__all__ = [
    'PrivacyParams',
    'NoiseTable',
    'RdpAccountant',
    'rdp_gaussian',
    'rdp_subsampled_gaussian',
    'compose_and_convert',
    'calibrate_sigma',
    'classical_gaussian_sigma',
    'accountant_for_variant',
    'gs_protocol',
    'CalibrationError',
    'AccountingError',
    'WorkloadParams',
    'SETTING_1',
    'SETTING_2',
    'BsrCoefficients',
    'ParticipationSchema',
    'ScheduleError',
    'bsr_coeffs',
    'inverse_coeffs',
    'sensitivity',
    'CorrelatedNoiseStream',
    'correlated_noise_stream',
]

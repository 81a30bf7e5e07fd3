"""
Núcleo MPC para treinamento vertical federado

Componentes:
- numerics: aritmética de ponto fixo sobre Z_{2^k}
- transport: rede simulada síncrona por rodadas e modelos de latência
- abb: contrato da caixa-preta aritmética, ledgers e backend oráculo
- rep3: compartilhamento replicado entre três servidores
- secure_math: div, sqrt, exp, máximos e recorte sobre o ABB
"""

__version__ = "1.0.0"
__author__ = "VFL MPC-DP"

from .errors import (BackendMismatchError, DomainError, FixedPointOverflowError,
                     InconsistentSharesError, PreprocessingExhaustedError, ProtocolFault,
                     ShapeMismatchError, UnauthorizedOpenError, UnknownEndpointError)
from .numerics import FixedPointSpec, decode, encode, fixed_mul
from .transport import LAN, WAN, LatencyModel, Network, estimate_walltime
from .abb import (ALL_SERVERS, BackendConfig, CostLedger, CostModel, LeakageLedger,
                  OracleBackend, SecretBackend, SecretValue, create_backend)
from .rep3 import Rep3Backend

__all__ = [
    'FixedPointSpec',
    'encode',
    'decode',
    'fixed_mul',
    'LatencyModel',
    'LAN',
    'WAN',
    'Network',
    'estimate_walltime',
    'ALL_SERVERS',
    'BackendConfig',
    'CostLedger',
    'CostModel',
    'LeakageLedger',
    'SecretBackend',
    'SecretValue',
    'OracleBackend',
    'Rep3Backend',
    'create_backend',
    'ProtocolFault',
    'UnauthorizedOpenError',
    'InconsistentSharesError',
    'PreprocessingExhaustedError',
    'DomainError',
    'FixedPointOverflowError',
    'BackendMismatchError',
    'ShapeMismatchError',
    'UnknownEndpointError',
]

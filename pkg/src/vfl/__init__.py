"""
Treinamento vertical federado com MPC + DP

Este módulo reúne configuração, datasets sintéticos, modelos, a etapa de
treino da cabeça global sobre o ABB, a reconstrução no cliente e os
treinadores de cada variante (Plain, GShuff, GBMF, GLBMF, LdpG, LdpGL).
"""

__version__ = "1.0.0"
__author__ = "VFL MPC-DP"

from .config import (BACKENDS, VARIANTS, ConfigError, ProtocolConfig, apply_overrides,
                     create_protocol_config, load_config)
from .datasets import DatasetSpec, VerticalDataset, create_dataset, load_dataset, write_dataset
from .estimation import EstimationConfig, EstimationError, LinearSystem, Reconstruction, ridge_solve
from .metrics import EpochRecord, RunMetrics
from .models import GlobalModel, LocalModel, ModelConfig, create_global_model, create_local_model
from .protocols import (GradientPacket, InvariantViolationError, PrivacyPlan, RunResult, evaluate,
                        g_bmf_train, g_shuff_train, gl_bmf_train, ldp_train, plaintext_train,
                        plan_privacy, run_protocol)

__all__ = [
    'VARIANTS',
    'BACKENDS',
    'ProtocolConfig',
    'ConfigError',
    'create_protocol_config',
    'load_config',
    'apply_overrides',
    'DatasetSpec',
    'VerticalDataset',
    'create_dataset',
    'write_dataset',
    'load_dataset',
    'EstimationConfig',
    'EstimationError',
    'LinearSystem',
    'Reconstruction',
    'ridge_solve',
    'EpochRecord',
    'RunMetrics',
    'ModelConfig',
    'GlobalModel',
    'LocalModel',
    'create_global_model',
    'create_local_model',
    'GradientPacket',
    'PrivacyPlan',
    'RunResult',
    'InvariantViolationError',
    'plan_privacy',
    'plaintext_train',
    'g_shuff_train',
    'g_bmf_train',
    'gl_bmf_train',
    'ldp_train',
    'run_protocol',
    'evaluate',
]

"""
Config: Configuração de um treinamento e leitura de arquivos INI

Seções: [run] [privacy] [bandmf] [model] [numerics] [mpc] [estimation] [data].
Chaves ou seções desconhecidas são erros; todos os problemas encontrados
são reunidos em um único ConfigError.
"""

import configparser
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

try:
    from ..mpc.abb import BackendConfig
    from ..mpc.numerics import FixedPointSpec
    from ..privacy.bandmf import ParticipationSchema, WorkloadParams, setting_params
    from ..privacy.dpcore import PrivacyParams
    from .datasets import DatasetSpec
    from .estimation import EstimationConfig
    from .models import ModelConfig
except ImportError:
    # Para execução direta
    from mpc.abb import BackendConfig
    from mpc.numerics import FixedPointSpec
    from privacy.bandmf import ParticipationSchema, WorkloadParams, setting_params
    from privacy.dpcore import PrivacyParams
    from vfl.datasets import DatasetSpec
    from vfl.estimation import EstimationConfig
    from vfl.models import ModelConfig

logger = logging.getLogger(__name__)

VARIANTS = ("Plain", "GShuff", "GBMF", "GLBMF", "LdpG", "LdpGL")
MPC_VARIANTS = ("GShuff", "GBMF", "GLBMF")
LDP_VARIANTS = ("LdpG", "LdpGL")
BACKENDS = ("oracle", "rep3")


class ConfigError(ValueError):
    """Configuração inválida; `problems` lista cada campo com defeito."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("Configuração inválida:\n  - " + "\n  - ".join(self.problems))


@dataclass
class ProtocolConfig:
    """Configuração completa de uma execução."""
    # [run]
    variant: str = "GBMF"
    backend: str = "oracle"
    seed: int = 0
    epochs: int = 20                 # E_num
    batch_size: int = 128            # B
    eta_s: float = 0.01              # taxa do modelo global
    eta_i: float = 0.001             # taxa dos modelos locais
    audit: bool = False              # aberturas de auditoria (testes)
    shuffle: bool = True             # G-Shuff: embaralhamento seguro por época
    identity_shuffle: bool = False   # G-Shuff: permutação identidade (mesmo custo)
    data_dir: str = ""               # diretório do gen-data; vazio = gerar de [data]

    # [bandmf]
    setting: int = 1                 # 1: (α=1, β=0); 2: (α=1, β=0.9)
    band: int = 0                    # p; 0 = B_num (p = b)

    privacy: PrivacyParams = field(default_factory=PrivacyParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    numerics: FixedPointSpec = field(default_factory=FixedPointSpec)
    mpc: BackendConfig = field(default_factory=BackendConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)

    # Derivados

    def num_batches(self, num_samples: int) -> int:
        return num_samples // self.batch_size

    def total_steps(self, num_samples: int) -> int:
        return self.num_batches(num_samples) * self.epochs

    def schema(self, num_samples: int) -> ParticipationSchema:
        """κ = E_num participações, b = B_num passos de separação."""
        return ParticipationSchema(kappa=self.epochs, b=self.num_batches(num_samples))

    def workload(self, num_samples: int) -> WorkloadParams:
        return setting_params(self.setting, self.total_steps(num_samples))

    def band_width(self, num_samples: int) -> int:
        return self.band or self.num_batches(num_samples)

    def backend_config(self) -> BackendConfig:
        return dataclasses.replace(self.mpc, audit=self.audit)

    @property
    def is_mpc(self) -> bool:
        return self.variant in MPC_VARIANTS

    def validate(self, num_samples: Optional[int] = None) -> None:
        """
        Raises:
            ConfigError: com a lista completa de problemas
        """
        problems = []
        if self.variant not in VARIANTS:
            problems.append(f"run.variant desconhecida: '{self.variant}' (use {', '.join(VARIANTS)})")
        if self.backend not in BACKENDS:
            problems.append(f"run.backend desconhecido: '{self.backend}'")
        if self.epochs < 1:
            problems.append(f"run.epochs deve ser >= 1 (recebido {self.epochs})")
        if self.batch_size < 1:
            problems.append(f"run.batch_size deve ser >= 1 (recebido {self.batch_size})")
        if self.eta_s < 0 or self.eta_i < 0:
            problems.append("run.eta_s e run.eta_i não podem ser negativos")
        if self.setting not in (1, 2):
            problems.append(f"bandmf.setting deve ser 1 ou 2 (recebido {self.setting})")
        if self.band < 0:
            problems.append(f"bandmf.band não pode ser negativo (recebido {self.band})")
        if not self.privacy.epsilon > 0:
            problems.append(f"privacy.epsilon deve ser positivo (recebido {self.privacy.epsilon})")
        if not 0 < self.privacy.delta < 1:
            problems.append(f"privacy.delta deve estar em (0, 1) (recebido {self.privacy.delta})")
        if not self.privacy.clip_gamma > 0:
            problems.append(f"privacy.clip_gamma deve ser positivo (recebido {self.privacy.clip_gamma})")
        if self.privacy.sigma is not None and self.privacy.sigma < 0:
            problems.append(f"privacy.sigma não pode ser negativo (recebido {self.privacy.sigma})")
        if self.privacy.sigma is None and math.isinf(self.privacy.epsilon) and self.variant != "Plain":
            problems.append("privacy.epsilon = inf exige privacy.sigma explícito")
        if self.variant == "GLBMF" and not self.model.adapters and self.model.jacobian_layer != "final":
            problems.append("GLBMF sem adaptadores exige model.jacobian_layer = final")
        problems.extend(self.model.validate())
        problems.extend(self.estimation.validate())
        problems.extend(self.data.validate())

        M = num_samples if num_samples is not None else self.data.samples
        if self.batch_size >= 1 and M % self.batch_size != 0:
            problems.append(f"M={M} não é divisível por B={self.batch_size}")
        elif self.batch_size >= 1 and self.band > self.num_batches(M) * self.epochs:
            problems.append(f"bandmf.band={self.band} maior que T={self.total_steps(M)}")
        if problems:
            logger.error(f"❌ Configuração com {len(problems)} problema(s)")
            raise ConfigError(problems)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {section: {name: getattr(obj, name) for name in names}
                for section, (obj, names) in _sections(self).items()}

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section, values in self.to_dict().items():
            parser[section] = {k: _format_value(v) for k, v in values.items()}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()


_RUN_KEYS = ("variant", "backend", "seed", "epochs", "batch_size", "eta_s", "eta_i",
             "audit", "shuffle", "identity_shuffle", "data_dir")
_BANDMF_KEYS = ("setting", "band")
_MPC_KEYS = ("hybrid_trust", "auto_refill", "domain_guards", "record_transcript")


def _field_names(obj: Any) -> Tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(obj))


def _sections(config: ProtocolConfig) -> Dict[str, Tuple[Any, Tuple[str, ...]]]:
    return {
        "run": (config, _RUN_KEYS),
        "privacy": (config.privacy, _field_names(config.privacy)),
        "bandmf": (config, _BANDMF_KEYS),
        "model": (config.model, _field_names(config.model)),
        "numerics": (config.numerics, _field_names(config.numerics)),
        "mpc": (config.mpc, _MPC_KEYS),
        "estimation": (config.estimation, _field_names(config.estimation)),
        "data": (config.data, _field_names(config.data)),
    }


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(raw: str, annotation: Any) -> Any:
    text = raw.strip()
    origin = get_origin(annotation)
    if origin is Union:
        inner = [a for a in get_args(annotation) if a is not type(None)]
        if text.lower() in ("", "none"):
            return None
        return _parse_value(text, inner[0])
    if annotation is bool:
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"booleano inválido: '{raw}'")
    if annotation is int:
        return int(text)
    if annotation is float:
        return float(text)
    return text


def _section_updates(obj: Any, names: Tuple[str, ...], values: Dict[str, str],
                     section: str, problems: List[str]) -> Dict[str, Any]:
    hints = get_type_hints(type(obj))
    updates = {}
    for key, raw in values.items():
        if key not in names:
            problems.append(f"Chave desconhecida: [{section}] {key}")
            continue
        try:
            updates[key] = _parse_value(raw, hints[key])
        except ValueError as e:
            problems.append(f"[{section}] {key}: {e}")
    return updates


def config_from_mapping(mapping: Dict[str, Dict[str, str]],
                        base: Optional[ProtocolConfig] = None) -> ProtocolConfig:
    """
    Constrói um ProtocolConfig a partir de {seção: {chave: texto}}.

    Raises:
        ConfigError: seções/chaves desconhecidas ou valores ilegíveis
    """
    config = base or ProtocolConfig()
    problems: List[str] = []
    layout = _sections(config)
    top_level: Dict[str, Any] = {}
    nested: Dict[str, Any] = {}

    for section, values in mapping.items():
        if section not in layout:
            problems.append(f"Seção desconhecida: [{section}]")
            continue
        obj, names = layout[section]
        updates = _section_updates(obj, names, values, section, problems)
        if obj is config:
            top_level.update(updates)
        elif updates:
            try:
                nested[section] = dataclasses.replace(obj, **updates)
            except ValueError as e:
                problems.append(f"[{section}] {e}")

    if problems:
        raise ConfigError(problems)
    return dataclasses.replace(config, **top_level, **nested)


def load_config(path: str, base: Optional[ProtocolConfig] = None) -> ProtocolConfig:
    """Lê um arquivo INI (chaves desconhecidas são erros)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as e:
        raise ConfigError([f"Falha ao ler {path}: {e}"]) from e
    mapping = {section: dict(parser.items(section)) for section in parser.sections()}
    config = config_from_mapping(mapping, base)
    logger.info(f"⚙️ Configuração carregada: {path} (variante {config.variant})")
    return config


def apply_overrides(config: ProtocolConfig, overrides: Dict[str, Any]) -> ProtocolConfig:
    """
    Aplica substituições 'seção.chave' ou nomes de [run]/[bandmf] (flags da CLI).

    Valores None são ignorados.
    """
    mapping: Dict[str, Dict[str, str]] = {}
    layout = _sections(config)
    for key, value in overrides.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
        else:
            section = next((s for s in ("run", "bandmf") if key in layout[s][1]), "run")
            name = key
        mapping.setdefault(section, {})[name] = _format_value(value)
    return config_from_mapping(mapping, config)


def create_protocol_config(variant: str = "GBMF", overrides: Optional[Dict[str, Any]] = None,
                           **run_values) -> ProtocolConfig:
    """
    Factory function: configuração padrão com substituições.

    Args:
        variant: variante do protocolo
        overrides: {'seção.chave': valor}
        **run_values: chaves de [run]/[bandmf] (ex.: epochs=2)
    """
    merged = {"variant": variant, **run_values, **(overrides or {})}
    return apply_overrides(ProtocolConfig(), merged)

"""
Metrics: Registros de uma execução (épocas, limites por passo e resumo)

Todos os registros viram dicionários com chaves ordenadas ao gravar; nada
aqui depende de relógio, então execuções iguais produzem arquivos iguais.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional

from typing_extensions import TypedDict

try:
    from ..mpc.abb import CostLedger
    from ..mpc.transport import LAN, WAN, client_id, estimate_walltime
except ImportError:
    # Para execução direta
    from mpc.abb import CostLedger
    from mpc.transport import LAN, WAN, client_id, estimate_walltime

logger = logging.getLogger(__name__)

SUMMARY_KEYS = (
    "variant",
    "epsilon_target",
    "epsilon_accounted",
    "final_accuracy",
    "bytes_total",
    "rounds_total",
    "walltime_lan_est",
    "walltime_wan_est",
)


def _finite(value: Optional[float]) -> Any:
    """inf/nan não existem em JSON estrito; viram texto."""
    if value is None:
        return None
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class EpochRecord:
    epoch: int
    train_loss: Optional[float]
    test_accuracy: Optional[float]
    bytes: int
    rounds: int
    client_upstream_bytes: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["type"] = "epoch"
        return data


@dataclass
class BoundRecord:
    """Confiança da reconstrução de um cliente em um passo (GL-BMF)."""
    step: int
    client: str
    sigma_t: float
    lam: float
    bound: float
    well_posed: bool
    realized_error: Optional[float] = None     # ‖ĝ - ĝ_verdadeiro‖² (audit)
    realized_max_abs: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["type"] = "bound"
        return data


class StepCostDict(TypedDict):
    step: int
    bytes: int
    rounds: int


@dataclass
class StepCost:
    step: int
    bytes: int
    rounds: int

    def to_dict(self) -> StepCostDict:
        return {"step": self.step, "bytes": self.bytes, "rounds": self.rounds}


@dataclass
class RunMetrics:
    """Métricas acumuladas durante um treinamento."""
    variant: str
    backend: str
    seed: int
    epsilon_target: float
    epsilon_accounted: float
    sigma: float
    delta: float
    q: float
    steps: int
    sens: float = 1.0
    epochs: List[EpochRecord] = field(default_factory=list)
    step_costs: List[StepCost] = field(default_factory=list)
    bounds: List[BoundRecord] = field(default_factory=list)
    final_accuracy: Optional[float] = None
    bytes_total: int = 0
    rounds_total: int = 0
    walltime_lan_est: float = 0.0
    walltime_wan_est: float = 0.0
    leakage_digest: str = ""
    preprocessing: Dict[str, Any] = field(default_factory=dict)
    audit_max_clip_ratio: Optional[float] = None

    def add_epoch(self, record: EpochRecord) -> None:
        self.epochs.append(record)
        acc = "n/d" if record.test_accuracy is None else f"{record.test_accuracy:.3f}"
        logger.info(f"✅ Época {record.epoch}: acurácia={acc}, bytes={record.bytes}, "
                    f"rodadas={record.rounds}")

    def add_step_cost(self, step: int, delta: CostLedger) -> None:
        self.step_costs.append(StepCost(step=step, bytes=delta.total_bytes(), rounds=delta.rounds))

    def note_clip_ratio(self, ratio: float) -> None:
        current = self.audit_max_clip_ratio
        self.audit_max_clip_ratio = ratio if current is None else max(current, ratio)

    def finish(self, ledger: CostLedger, accuracy: float, digest: str = "") -> None:
        """Fecha os totais a partir do ledger de custo da execução."""
        self.final_accuracy = float(accuracy)
        self.bytes_total = ledger.total_bytes()
        self.rounds_total = ledger.rounds
        self.walltime_lan_est = estimate_walltime(ledger, LAN)
        self.walltime_wan_est = estimate_walltime(ledger, WAN)
        self.leakage_digest = digest
        self.preprocessing = {
            "rounds": ledger.preprocessing_rounds,
            "bytes": sum(ledger.preprocessing_bytes.values()),
        }

    @property
    def bytes_per_step(self) -> float:
        if not self.step_costs:
            return 0.0
        return sum(s.bytes for s in self.step_costs) / len(self.step_costs)

    @property
    def rounds_per_step(self) -> float:
        if not self.step_costs:
            return 0.0
        return sum(s.rounds for s in self.step_costs) / len(self.step_costs)

    def summary(self) -> Dict[str, Any]:
        return {
            "type": "summary",
            "variant": self.variant,
            "backend": self.backend,
            "seed": self.seed,
            "epsilon_target": _finite(self.epsilon_target),
            "epsilon_accounted": _finite(self.epsilon_accounted),
            "sigma": self.sigma,
            "delta": self.delta,
            "q": self.q,
            "steps": self.steps,
            "sens": self.sens,
            "final_accuracy": self.final_accuracy,
            "bytes_total": self.bytes_total,
            "rounds_total": self.rounds_total,
            "bytes_per_step": self.bytes_per_step,
            "rounds_per_step": self.rounds_per_step,
            "walltime_lan_est": self.walltime_lan_est,
            "walltime_wan_est": self.walltime_wan_est,
            "leakage_digest": self.leakage_digest,
            "preprocessing": self.preprocessing,
            "audit_max_clip_ratio": self.audit_max_clip_ratio,
        }

    def to_records(self) -> List[Dict[str, Any]]:
        """Épocas, limites por passo e, por último, o resumo."""
        records = [e.to_dict() for e in self.epochs]
        records.extend(b.to_dict() for b in self.bounds)
        records.append(self.summary())
        return records


def upstream_bytes(delta: CostLedger, num_clients: int) -> Dict[str, int]:
    """Bytes enviados por cada cliente no intervalo do ledger."""
    return {client_id(i): delta.party_bytes(client_id(i)) for i in range(num_clients)}

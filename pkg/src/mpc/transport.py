"""
Transport: Rede simulada síncrona por rodadas

Cada parte possui um Endpoint com caixas de entrada FIFO privadas por
remetente. Mensagens enviadas durante uma rodada só ficam legíveis depois
de `end_round()`. O custo (bytes por remetente, rodadas) é lançado no
ledger de custos da coorte.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Deque, Dict, Iterable, List, Optional, Tuple

import numpy as np

try:
    from .errors import ProtocolFault, UnknownEndpointError
    from .numerics import FixedPointSpec
except ImportError:
    # Para execução direta
    from errors import ProtocolFault, UnknownEndpointError
    from numerics import FixedPointSpec

logger = logging.getLogger(__name__)

SERVERS: Tuple[str, str, str] = ("S0", "S1", "S2")
ANALYST = "analyst"
DEALER = "dealer"


def client_id(index: int) -> str:
    """Identificador do cliente de índice 0-based."""
    return f"C{index}"


def server_id(index: int) -> str:
    return SERVERS[index % 3]


@dataclass(frozen=True)
class LatencyModel:
    """Modelo de rede: largura de banda (bits/s) e atraso por sentido (s)."""
    bandwidth_bps: float
    delay_s: float
    name: str = "custom"


LAN = LatencyModel(bandwidth_bps=1e9, delay_s=1e-3, name="LAN")
WAN = LatencyModel(bandwidth_bps=2e8, delay_s=2e-2, name="WAN")


def estimate_walltime(ledger: Any, model: LatencyModel, include_preprocessing: bool = False) -> float:
    """
    Estima o tempo de parede de uma execução a partir do ledger.

    rounds * 2 * delay + max_party_bytes * 8 / bandwidth

    Args:
        ledger: CostLedger (ou qualquer objeto com rounds e max_party_bytes())
        model: LatencyModel (LAN ou WAN)
        include_preprocessing: soma também as rodadas/bytes de pré-processamento

    Returns:
        Segundos estimados
    """
    rounds = ledger.rounds
    heaviest = ledger.max_party_bytes()
    if include_preprocessing:
        rounds += ledger.preprocessing_rounds
        heaviest = ledger.max_party_bytes(include_preprocessing=True)
    return rounds * 2.0 * model.delay_s + heaviest * 8.0 / model.bandwidth_bps


@dataclass
class TranscriptRecord:
    """Metadados de uma mensagem entregue."""
    round: int
    sender: str
    recipient: str
    byte_len: int
    step_label: str

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        # nomes do formato de transcrito
        record["from"] = record.pop("sender")
        record["to"] = record.pop("recipient")
        return record


class Endpoint:
    """Ponto de comunicação de uma parte com caixas FIFO por remetente."""

    def __init__(self, endpoint_id: str):
        self.id = endpoint_id
        self.inbox: Dict[str, Deque[Tuple[bytes, Tuple[int, ...]]]] = {}
        self.views: Optional[List[np.ndarray]] = None

    def deliver(self, sender: str, data: bytes, shape: Tuple[int, ...]) -> None:
        self.inbox.setdefault(sender, deque()).append((data, shape))

    def pending(self, sender: str) -> int:
        return len(self.inbox.get(sender, ()))


class Network:
    """
    Rede síncrona por rodadas entre servidores, clientes, analista e dealer.

    Os payloads são arrays do anel serializados com ceil(k/8) bytes por
    elemento; o tamanho serializado é o custo lançado ao remetente.
    """

    def __init__(self, spec: FixedPointSpec, ledger: Any,
                 parties: Optional[Iterable[str]] = None,
                 record_transcript: bool = True):
        """
        Args:
            spec: anel dos payloads
            ledger: CostLedger que recebe bytes e rodadas
            parties: identificadores iniciais (servidores são sempre criados)
            record_transcript: guarda metadados de cada mensagem
        """
        self.spec = spec
        self.ledger = ledger
        self.endpoints: Dict[str, Endpoint] = {}
        self.round_index = 0
        self.record_transcript = record_transcript
        self.transcript: List[TranscriptRecord] = []
        self._pending: List[Tuple[str, str, bytes, Tuple[int, ...]]] = []

        for party in list(SERVERS) + list(parties or []):
            self.add_endpoint(party)

    def add_endpoint(self, endpoint_id: str) -> Endpoint:
        if endpoint_id not in self.endpoints:
            self.endpoints[endpoint_id] = Endpoint(endpoint_id)
        return self.endpoints[endpoint_id]

    def _endpoint(self, endpoint_id: str) -> Endpoint:
        try:
            return self.endpoints[endpoint_id]
        except KeyError:
            raise UnknownEndpointError(f"Endpoint desconhecido: '{endpoint_id}'") from None

    def capture_views(self, party: str) -> None:
        """Passa a registrar os payloads recebidos por `party` (auditoria de testes)."""
        self._endpoint(party).views = []

    def send(self, sender: str, recipient: str, payload: np.ndarray) -> int:
        """
        Enfileira um payload para entrega ao final da rodada.

        Returns:
            Número de bytes lançados ao remetente
        """
        self._endpoint(sender)
        self._endpoint(recipient)
        arr = np.asarray(payload)
        data = self.spec.to_bytes(arr)
        self._pending.append((sender, recipient, data, tuple(arr.shape)))
        self.ledger.charge_bytes(sender, len(data))
        return len(data)

    def end_round(self, step_label: str) -> None:
        """Entrega as mensagens pendentes; rodadas vazias não são contadas."""
        if not self._pending:
            return
        for sender, recipient, data, shape in self._pending:
            endpoint = self.endpoints[recipient]
            endpoint.deliver(sender, data, shape)
            if self.record_transcript:
                self.transcript.append(TranscriptRecord(
                    round=self.round_index, sender=sender, recipient=recipient,
                    byte_len=len(data), step_label=step_label))
        self._pending = []
        self.round_index += 1
        self.ledger.charge_round()

    def recv(self, party: str, sender: str) -> np.ndarray:
        """Lê a próxima mensagem de `sender` na caixa privada de `party`."""
        endpoint = self._endpoint(party)
        queue = endpoint.inbox.get(sender)
        if not queue:
            raise ProtocolFault(f"Nenhuma mensagem de '{sender}' para '{party}'")
        data, shape = queue.popleft()
        value = self.spec.from_bytes(data, shape)
        if endpoint.views is not None:
            endpoint.views.append(value)
        return value

    def transcript_records(self) -> List[Dict[str, Any]]:
        return [record.to_dict() for record in self.transcript]

    def write_transcript(self, path: str) -> None:
        """Grava o transcrito em JSONL (chaves ordenadas)."""
        output = Path(path)
        output.parent.mkdir(parents=True, exist_ok=True)
        with open(output, "w", encoding="utf-8") as f:
            for record in self.transcript_records():
                f.write(json.dumps(record, sort_keys=True) + "\n")
        logger.info(f"💾 Transcrito salvo: {output} ({len(self.transcript)} mensagens)")

    def get_statistics(self) -> Dict[str, Any]:
        return {
            "endpoints": sorted(self.endpoints),
            "rounds": self.round_index,
            "messages": len(self.transcript),
            "bytes": sum(r.byte_len for r in self.transcript),
        }

"""
ABB: Contrato da caixa-preta aritmética e backend oráculo

Componentes:
- SecretValue: handle opaco com metadados (shape, backend, coorte, escala)
- CostLedger: rodadas e bytes por parte, contagem de operações
- LeakageLedger: lista branca de aberturas e trilha de auditoria
- CohortSeeds: derivação determinística de sementes (PRF, permutações, ruído)
- CostModel: custo analítico de cada primitiva (espelha o cronograma rep3)
- SecretBackend: operações públicas do ABB sobre primitivas abstratas
- OracleBackend: funcionalidade ideal sobre o texto claro codificado
"""

import copy
import hashlib
import json
import logging
import math
from abc import ABC, abstractmethod
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

try:
    from .errors import (BackendMismatchError, PreprocessingExhaustedError,
                         ShapeMismatchError, UnauthorizedOpenError)
    from .numerics import (FixedPointSpec, decode, encode, ring_add, ring_matmul, ring_mul,
                           ring_neg, ring_sub, ring_sum, truncate)
    from .transport import ANALYST, DEALER, SERVERS, client_id
except ImportError:
    # Para execução direta
    from errors import (BackendMismatchError, PreprocessingExhaustedError,
                        ShapeMismatchError, UnauthorizedOpenError)
    from numerics import (FixedPointSpec, decode, encode, ring_add, ring_matmul, ring_mul,
                          ring_neg, ring_sub, ring_sum, truncate)
    from transport import ANALYST, DEALER, SERVERS, client_id

logger = logging.getLogger(__name__)

ALL_SERVERS = "servers"
OPEN_KINDS = ("release", "guard", "audit")

# Rótulos de fluxo para separar usos da mesma semente
_PRF_TAG = 1
_SHUFFLE_TAG = 2
_GAUSS_TAG = 3
_PARTY_TAG = 4


def _label_int(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


# ----------------------------------------------------------------------
# Ledgers
# ----------------------------------------------------------------------

@dataclass
class CostLedger:
    """Custos acumulados de uma coorte (monotônico)."""
    rounds: int = 0
    bytes_sent: Dict[str, int] = field(default_factory=dict)
    op_counts: Counter = field(default_factory=Counter)
    preprocessing_rounds: int = 0
    preprocessing_bytes: Dict[str, int] = field(default_factory=dict)
    phase: str = "online"

    @contextmanager
    def preprocessing(self) -> Iterator["CostLedger"]:
        """Lança tudo que ocorrer no bloco como custo de pré-processamento."""
        previous = self.phase
        self.phase = "preprocessing"
        try:
            yield self
        finally:
            self.phase = previous

    def charge_bytes(self, party: str, count: int) -> None:
        target = self.preprocessing_bytes if self.phase == "preprocessing" else self.bytes_sent
        target[party] = target.get(party, 0) + int(count)

    def charge_round(self, count: int = 1) -> None:
        if self.phase == "preprocessing":
            self.preprocessing_rounds += count
        else:
            self.rounds += count

    def count(self, op: str, n: int = 1) -> None:
        self.op_counts[op] += n

    def party_bytes(self, party: str) -> int:
        return self.bytes_sent.get(party, 0)

    def total_bytes(self, include_preprocessing: bool = False) -> int:
        total = sum(self.bytes_sent.values())
        if include_preprocessing:
            total += sum(self.preprocessing_bytes.values())
        return total

    def max_party_bytes(self, include_preprocessing: bool = False) -> int:
        parties = set(self.bytes_sent)
        if include_preprocessing:
            parties |= set(self.preprocessing_bytes)
        best = 0
        for party in parties:
            value = self.bytes_sent.get(party, 0)
            if include_preprocessing:
                value += self.preprocessing_bytes.get(party, 0)
            best = max(best, value)
        return best

    def snapshot(self) -> "CostLedger":
        return copy.deepcopy(self)

    def delta(self, since: "CostLedger") -> "CostLedger":
        """Diferença entre o estado atual e um snapshot anterior."""
        def diff(now: Dict[str, int], before: Dict[str, int]) -> Dict[str, int]:
            out = {p: v - before.get(p, 0) for p, v in now.items()}
            return {p: v for p, v in out.items() if v}

        ops = Counter(self.op_counts)
        ops.subtract(since.op_counts)
        return CostLedger(
            rounds=self.rounds - since.rounds,
            bytes_sent=diff(self.bytes_sent, since.bytes_sent),
            op_counts=Counter({k: v for k, v in ops.items() if v}),
            preprocessing_rounds=self.preprocessing_rounds - since.preprocessing_rounds,
            preprocessing_bytes=diff(self.preprocessing_bytes, since.preprocessing_bytes),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rounds": self.rounds,
            "bytes_sent": dict(sorted(self.bytes_sent.items())),
            "bytes_total": self.total_bytes(),
            "max_party_bytes": self.max_party_bytes(),
            "op_counts": dict(sorted(self.op_counts.items())),
            "preprocessing_rounds": self.preprocessing_rounds,
            "preprocessing_bytes": dict(sorted(self.preprocessing_bytes.items())),
        }


@dataclass
class LeakageEntry:
    """Uma abertura registrada."""
    index: int
    step: str
    recipient: str
    kind: str
    shape: List[int]
    round: int
    step_index: Optional[int] = None


class LeakageLedger:
    """
    Lista branca de aberturas autorizadas e trilha de tudo que foi aberto.

    Tipos de abertura:
    - release: saídas do protocolo
    - guard: contagens agregadas de violação de domínio
    - audit: apenas com o modo de auditoria ligado
    """

    def __init__(self, audit: bool = False):
        self.audit = audit
        self._whitelist: set = set()
        self.entries: List[LeakageEntry] = []

    def authorize(self, step: str, recipient: str = "*", kind: str = "release") -> None:
        if kind not in OPEN_KINDS:
            raise ValueError(f"Tipo de abertura desconhecido: '{kind}'")
        self._whitelist.add((step, recipient, kind))

    def is_authorized(self, step: str, recipient: str, kind: str) -> bool:
        if kind == "audit" and not self.audit:
            return False
        return ((step, recipient, kind) in self._whitelist
                or (step, "*", kind) in self._whitelist)

    def record(self, step: str, recipient: str, kind: str, shape: Sequence[int],
               round_index: int, step_index: Optional[int] = None) -> LeakageEntry:
        if not self.is_authorized(step, recipient, kind):
            logger.error(f"❌ Abertura bloqueada: {step} → {recipient} ({kind})")
            raise UnauthorizedOpenError(step, recipient, kind)
        entry = LeakageEntry(index=len(self.entries), step=step, recipient=recipient,
                             kind=kind, shape=[int(s) for s in shape], round=round_index,
                             step_index=step_index)
        self.entries.append(entry)
        return entry

    def releases(self, kind: str = "release") -> List[LeakageEntry]:
        return [e for e in self.entries if e.kind == kind]

    def to_records(self) -> List[Dict[str, Any]]:
        return [asdict(e) for e in self.entries]

    def digest(self) -> str:
        payload = json.dumps(self.to_records(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(record, sort_keys=True) + "\n" for record in self.to_records())

    def write_jsonl(self, path: str) -> None:
        output = Path(path)
        output.parent.mkdir(parents=True, exist_ok=True)
        with open(output, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl())


# ----------------------------------------------------------------------
# Sementes
# ----------------------------------------------------------------------

class CohortSeeds:
    """
    Derivação determinística das sementes de uma coorte.

    s_j (j = 0, 1, 2) é conhecida pelas partes j-1 e j+1; cada parte tem
    ainda uma semente privada.
    """

    def __init__(self, seed: int, cohort: str):
        self.seed = int(seed)
        self.cohort = cohort
        self._cohort_int = _label_int(cohort)

    def _derive(self, label: str) -> int:
        state = np.random.SeedSequence([self.seed, self._cohort_int, _label_int(label)])
        return int(state.generate_state(1, dtype=np.uint64)[0])

    def prf_seed(self, j: int) -> int:
        return self._derive(f"prf:{j % 3}")

    def private_seed(self, party: str) -> int:
        return self._derive(f"private:{party}")

    def prf(self, j: int, counter: int, shape: Tuple[int, ...], spec: FixedPointSpec) -> np.ndarray:
        """F(s_j) no contador dado: elementos uniformes do anel."""
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.prf_seed(j), _PRF_TAG, counter])))
        return spec.random(shape, rng)

    def shuffle_permutation(self, j: int, counter: int, n: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.prf_seed(j), _SHUFFLE_TAG, counter])))
        return rng.permutation(n)

    def gaussian(self, party: str, counter: int, shape: Tuple[int, ...], std: float) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.private_seed(party), _GAUSS_TAG, counter])))
        return rng.normal(0.0, std, size=shape)

    def party_rng(self, party: str, counter: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.private_seed(party), _PARTY_TAG, counter])))


# ----------------------------------------------------------------------
# Modelo de custos
# ----------------------------------------------------------------------

class CostModel:
    """
    Custo analítico (elementos do anel) de cada primitiva, por parte.

    O backend rep3 realiza exatamente estas mensagens; o oráculo apenas
    lança estes custos.
    """

    def __init__(self, spec: FixedPointSpec):
        self.spec = spec
        self.element_bytes = spec.element_bytes

    def _charge(self, ledger: CostLedger, party: str, elements: int) -> None:
        ledger.charge_bytes(party, elements * self.element_bytes)

    def input(self, ledger: CostLedger, items: Sequence[Tuple[str, int]]) -> None:
        """Uma rodada: cliente envia 2n a cada servidor; servidor envia n a cada vizinho."""
        for owner, n in items:
            self._charge(ledger, owner, (2 if owner in SERVERS else 6) * n)
        ledger.charge_round()

    def mul(self, ledger: CostLedger, n: int, fused: bool) -> None:
        """Produto bruto: 3n. Produto com truncamento embutido: 4n."""
        if fused:
            self._charge(ledger, "S0", n)
            self._charge(ledger, "S1", n)
            self._charge(ledger, "S2", 2 * n)
        else:
            for server in SERVERS:
                self._charge(ledger, server, n)
        ledger.charge_round()

    def truncate(self, ledger: CostLedger, n: int) -> None:
        self._charge(ledger, "S1", n)
        self._charge(ledger, "S2", n)
        ledger.charge_round()

    def open(self, ledger: CostLedger, n: int, recipient: str) -> None:
        if recipient in SERVERS:
            holder = SERVERS[(SERVERS.index(recipient) + 1) % 3]
            self._charge(ledger, holder, n)
        elif recipient == ALL_SERVERS:
            for server in SERVERS:
                self._charge(ledger, server, n)
        else:
            for server in SERVERS:
                self._charge(ledger, server, 2 * n)
        ledger.charge_round()

    def scan_levels(self) -> List[int]:
        m = self.spec.total_bits - 1
        levels, s = [], 1
        while s < m:
            levels.append(s)
            s *= 2
        return levels

    def ltz(self, ledger: CostLedger, n: int) -> None:
        """Abre c = x + r aos servidores, varredura de prefixos, borrow e xor final."""
        m = self.spec.total_bits - 1
        self.open(ledger, n, ALL_SERVERS)
        for s in self.scan_levels():
            self.mul(ledger, (m - s) * n, fused=False)
        self.mul(ledger, (m - 1) * n, fused=False)
        self.mul(ledger, n, fused=False)

    def ltz_rounds(self) -> int:
        return 3 + len(self.scan_levels())

    def shuffle(self, ledger: CostLedger, n: int, width: int) -> None:
        """Três fases; na fase i os detentores de s_i trocam n*w elementos cada."""
        for i in range(3):
            self._charge(ledger, SERVERS[(i - 1) % 3], n * width)
            self._charge(ledger, SERVERS[(i + 1) % 3], n * width)
            ledger.charge_round()

    def values_per_item(self, kind: str) -> int:
        return self.spec.total_bits + 1 if kind == "edabit" else 2

    def bits_per_item(self, kind: str) -> int:
        return self.spec.total_bits if kind == "edabit" else self.spec.total_bits - 1

    def preprocessing(self, ledger: CostLedger, kind: str, count: int, hybrid: bool) -> None:
        """Material correlacionado: via dealer (1 rodada) ou bits XOR interativos (3 rodadas)."""
        with ledger.preprocessing():
            if hybrid:
                self._charge(ledger, DEALER, 6 * self.values_per_item(kind) * count)
                ledger.charge_round()
            else:
                bits = self.bits_per_item(kind) * count
                self.input(ledger, [(server, bits) for server in SERVERS])
                self.mul(ledger, bits, fused=False)
                self.mul(ledger, bits, fused=False)


# ----------------------------------------------------------------------
# Valores secretos e backend
# ----------------------------------------------------------------------

Public = Union[int, float, np.ndarray]


@dataclass(eq=False)
class SecretValue:
    """
    Valor compartilhado opaco. Texto claro só sai via `open()`.

    Attributes:
        handle: representação interna do backend
        shape: formato lógico do tensor
        backend_tag: 'oracle' ou 'rep3'
        cohort: identificador da coorte de servidores
        frac_bits: escala do ponto fixo (0 para inteiros/bits)
    """
    handle: Any
    shape: Tuple[int, ...]
    backend_tag: str
    cohort: str
    frac_bits: int
    backend: "SecretBackend" = field(repr=False)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def T(self) -> "SecretValue":
        return self.backend.transpose(self)

    def __add__(self, other):
        if isinstance(other, SecretValue):
            return self.backend.add(self, other)
        return self.backend.add_public(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SecretValue):
            return self.backend.sub(self, other)
        return self.backend.add_public(self, -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return self.backend.add_public(self.backend.neg(self), other)

    def __neg__(self):
        return self.backend.neg(self)

    def __mul__(self, other):
        if isinstance(other, SecretValue):
            return self.backend.mul(self, other)
        return self.backend.scale_public(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.backend.matmul(self, other)

    def __getitem__(self, key):
        return self.backend.index(self, key)

    def reshape(self, *shape) -> "SecretValue":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.backend.reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False) -> "SecretValue":
        return self.backend.sum(self, axis=axis, keepdims=keepdims)


@dataclass
class BackendConfig:
    """Opções de um backend MPC."""
    hybrid_trust: bool = True        # dealer confiável para material correlacionado
    auto_refill: bool = True         # reabastece o pool sob demanda
    domain_guards: bool = True       # aberturas de guarda em div/sqrt
    audit: bool = False              # permite aberturas do tipo 'audit'
    record_transcript: bool = True   # apenas rep3


class SecretBackend(ABC):
    """
    Operações públicas do ABB. As subclasses implementam as primitivas
    (`_input`, `_mul`, `_ltz`, ...); validação, contagem de operações,
    pool de pré-processamento e ledger de vazamento ficam aqui.
    """

    tag = "abstract"

    def __init__(self, spec: FixedPointSpec, config: Optional[BackendConfig] = None,
                 seed: int = 0, cohort: str = "cohort0", num_clients: int = 0):
        self.spec = spec
        self.config = config or BackendConfig()
        self.cohort = cohort
        self.seeds = CohortSeeds(seed, cohort)
        self.cost = CostLedger()
        self.leakage = LeakageLedger(audit=self.config.audit)
        self.cost_model = CostModel(spec)
        self.pool: Counter = Counter()
        self.parties: List[str] = (list(SERVERS) + [client_id(i) for i in range(num_clients)]
                                   + [ANALYST, DEALER])
        self._shuffle_counter = 0
        self._gauss_counter = 0
        self._input_counter = 0

        if self.config.domain_guards:
            for step in ("div_guard", "sqrt_guard"):
                self.leakage.authorize(step, ALL_SERVERS, "guard")

        logger.info(f"🔐 Backend {self.tag} criado: coorte={cohort}, k={spec.total_bits}, "
                    f"f={spec.frac_bits}, dealer={'sim' if self.config.hybrid_trust else 'não'}")

    # ------------------------------------------------------------------
    # Primitivas abstratas
    # ------------------------------------------------------------------

    @abstractmethod
    def _input(self, items: Sequence[Tuple[np.ndarray, str]]) -> List[Any]:
        """Compartilha vários tensores do anel em uma única rodada."""

    @abstractmethod
    def _public(self, ring: np.ndarray) -> Any:
        """Compartilhamento trivial de uma constante pública."""

    @abstractmethod
    def _map(self, handle: Any, fn: Callable[[np.ndarray], np.ndarray]) -> Any:
        """Aplica uma função linear/estrutural a cada componente."""

    @abstractmethod
    def _combine(self, handles: Sequence[Any], fn: Callable[..., np.ndarray]) -> Any:
        """Combina componentes correspondentes de vários handles."""

    @abstractmethod
    def _add_public(self, handle: Any, ring: np.ndarray) -> Any:
        ...

    @abstractmethod
    def _mul(self, ha: Any, hb: Any, trunc_bits: int, matmul: bool) -> Any:
        ...

    @abstractmethod
    def _truncate(self, handle: Any, bits: int) -> Any:
        ...

    @abstractmethod
    def _ltz(self, handle: Any, shape: Tuple[int, ...]) -> Any:
        ...

    @abstractmethod
    def _shuffle(self, handle: Any, permutations: Sequence[np.ndarray]) -> Any:
        ...

    @abstractmethod
    def _open(self, handle: Any, recipient: str) -> np.ndarray:
        ...

    @abstractmethod
    def _refill(self, kind: str, count: int) -> None:
        """Gera `count` itens de material correlacionado do tipo `kind`."""

    # ------------------------------------------------------------------
    # Utilidades
    # ------------------------------------------------------------------

    def _wrap(self, handle: Any, shape: Tuple[int, ...], frac_bits: int) -> SecretValue:
        return SecretValue(handle=handle, shape=tuple(int(s) for s in shape),
                           backend_tag=self.tag, cohort=self.cohort,
                           frac_bits=int(frac_bits), backend=self)

    def _check(self, *values: SecretValue) -> None:
        for value in values:
            if not isinstance(value, SecretValue):
                raise TypeError(f"Esperado SecretValue, recebido {type(value).__name__}")
            if value.backend is not self or value.backend_tag != self.tag or value.cohort != self.cohort:
                raise BackendMismatchError(
                    f"Valor de {value.backend_tag}/{value.cohort} usado em {self.tag}/{self.cohort}")

    @staticmethod
    def _broadcast(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
        try:
            return tuple(np.broadcast_shapes(a, b))
        except ValueError:
            raise ShapeMismatchError(f"Formatos incompatíveis: {a} e {b}") from None

    def _reserve(self, kind: str, count: int) -> None:
        """Garante `count` itens no pool, reabastecendo se permitido."""
        if count <= 0:
            return
        deficit = count - self.pool[kind]
        if deficit > 0:
            if not self.config.auto_refill:
                logger.error(f"❌ Pool '{kind}' esgotado: faltam {deficit} itens")
                raise PreprocessingExhaustedError(
                    f"Pool '{kind}' com {self.pool[kind]} itens, necessários {count}")
            self._refill(kind, deficit)
            self.pool[kind] += deficit
        self.pool[kind] -= count

    def preprocess(self, trunc_pairs: Optional[Dict[int, int]] = None, edabits: int = 0) -> None:
        """
        Gera material correlacionado antecipadamente.

        Args:
            trunc_pairs: {bits de truncamento: quantidade}
            edabits: quantidade de edaBits (comparações)
        """
        for bits, count in sorted((trunc_pairs or {}).items()):
            if count > 0:
                self._refill(f"trunc:{bits}", count)
                self.pool[f"trunc:{bits}"] += count
        if edabits > 0:
            self._refill("edabit", edabits)
            self.pool["edabit"] += edabits
        logger.info(f"🎲 Pré-processamento: {dict(self.pool)}")

    def encode(self, x: Public, frac_bits: Optional[int] = None) -> np.ndarray:
        return encode(x, self.spec, self.spec.frac_bits if frac_bits is None else frac_bits)

    # ------------------------------------------------------------------
    # Entrada e constantes
    # ------------------------------------------------------------------

    def input(self, x: Public, owner: str, frac_bits: Optional[int] = None) -> SecretValue:
        """Compartilha um tensor em texto claro pertencente a `owner`."""
        return self.input_many([(x, owner)], frac_bits=frac_bits)[0]

    def input_many(self, items: Sequence[Tuple[Public, str]],
                   frac_bits: Optional[int] = None) -> List[SecretValue]:
        """Várias entradas (possivelmente de donos distintos) na mesma rodada."""
        fb = self.spec.frac_bits if frac_bits is None else frac_bits
        encoded = []
        for x, owner in items:
            if owner not in self.parties:
                raise ValueError(f"Dono desconhecido: '{owner}'")
            encoded.append((encode(x, self.spec, fb), owner))
        handles = self._input(encoded)
        self.cost.count("input", len(items))
        return [self._wrap(h, np.shape(r), fb) for h, (r, _) in zip(handles, encoded)]

    def public(self, x: Public, frac_bits: Optional[int] = None) -> SecretValue:
        fb = self.spec.frac_bits if frac_bits is None else frac_bits
        ring = encode(x, self.spec, fb)
        return self._wrap(self._public(ring), np.shape(ring), fb)

    # ------------------------------------------------------------------
    # Operações locais
    # ------------------------------------------------------------------

    def _align(self, a: SecretValue, b: SecretValue) -> Tuple[SecretValue, SecretValue]:
        if a.frac_bits == b.frac_bits:
            return a, b
        target = max(a.frac_bits, b.frac_bits)
        return self.rescale(a, target), self.rescale(b, target)

    def add(self, a: SecretValue, b: SecretValue) -> SecretValue:
        self._check(a, b)
        shape = self._broadcast(a.shape, b.shape)
        a, b = self._align(a, b)
        handle = self._combine([a.handle, b.handle], lambda x, y: ring_add(x, y, self.spec))
        return self._wrap(handle, shape, a.frac_bits)

    def sub(self, a: SecretValue, b: SecretValue) -> SecretValue:
        self._check(a, b)
        shape = self._broadcast(a.shape, b.shape)
        a, b = self._align(a, b)
        handle = self._combine([a.handle, b.handle], lambda x, y: ring_sub(x, y, self.spec))
        return self._wrap(handle, shape, a.frac_bits)

    def neg(self, a: SecretValue) -> SecretValue:
        self._check(a)
        return self._wrap(self._map(a.handle, lambda x: ring_neg(x, self.spec)), a.shape, a.frac_bits)

    def add_public(self, a: SecretValue, x: Public) -> SecretValue:
        self._check(a)
        ring = encode(x, self.spec, a.frac_bits)
        shape = self._broadcast(a.shape, np.shape(ring))
        if shape != a.shape:
            a = self.broadcast_to(a, shape)
        return self._wrap(self._add_public(a.handle, ring), shape, a.frac_bits)

    def mul_public_ring(self, a: SecretValue, ints: Public) -> SecretValue:
        """Multiplica localmente por inteiros públicos (escala preservada)."""
        self._check(a)
        ring = self.spec.from_signed(np.asarray(ints, dtype=np.int64))
        shape = self._broadcast(a.shape, np.shape(ring))
        handle = self._map(a.handle, lambda x: ring_mul(x, ring, self.spec))
        return self._wrap(handle, shape, a.frac_bits)

    def mul_public_fixed(self, a: SecretValue, c: Public, frac_bits: Optional[int] = None) -> SecretValue:
        """Multiplica por reais públicos codificados; a escala passa a a.frac_bits + fb."""
        self._check(a)
        fb = self.spec.frac_bits if frac_bits is None else frac_bits
        ring = encode(c, self.spec, fb)
        shape = self._broadcast(a.shape, np.shape(ring))
        handle = self._map(a.handle, lambda x: ring_mul(x, ring, self.spec))
        return self._wrap(handle, shape, a.frac_bits + fb)

    def scale_public(self, a: SecretValue, c: Public) -> SecretValue:
        """Escala por constante pública; não inteira exige um truncamento."""
        c_arr = np.asarray(c, dtype=np.float64)
        if np.all(c_arr == np.round(c_arr)) and np.all(np.abs(c_arr) < 2 ** 62):
            return self.mul_public_ring(a, c_arr.astype(np.int64))
        scaled = self.mul_public_fixed(a, c_arr)
        return self.truncate(scaled, self.spec.frac_bits)

    def public_matmul(self, left_ints: np.ndarray, a: SecretValue,
                      frac_bits: int = 0) -> SecretValue:
        """
        Produto local P @ a com matriz pública de inteiros do anel.

        Args:
            left_ints: matriz pública já codificada (inteiros com sinal)
            a: valor secreto com primeira dimensão compatível
            frac_bits: escala da matriz pública (somada à de `a`)
        """
        self._check(a)
        ring = self.spec.from_signed(np.asarray(left_ints, dtype=object if self.spec.is_wide else np.int64))
        shape = (ring.shape[0],) + a.shape[1:]
        handle = self._map(a.handle, lambda x: ring_matmul(ring, x, self.spec))
        return self._wrap(handle, shape, a.frac_bits + frac_bits)

    def rescale(self, a: SecretValue, frac_bits: int) -> SecretValue:
        """Muda a escala: subir é local (exato); descer exige truncamento."""
        if frac_bits == a.frac_bits:
            return a
        if frac_bits > a.frac_bits:
            up = self.mul_public_ring(a, np.int64(1) << np.int64(frac_bits - a.frac_bits))
            return self.reinterpret(up, frac_bits)
        return self.truncate(a, a.frac_bits - frac_bits)

    def reinterpret(self, a: SecretValue, frac_bits: int) -> SecretValue:
        """Mesmos inteiros do anel lidos com outra escala (divide por 2^Δ sem custo)."""
        self._check(a)
        return self._wrap(a.handle, a.shape, frac_bits)

    # Operações estruturais

    def index(self, a: SecretValue, key: Any) -> SecretValue:
        self._check(a)
        probe = np.empty(a.shape, dtype=np.int8)[key]
        return self._wrap(self._map(a.handle, lambda x: np.asarray(x)[key]), probe.shape, a.frac_bits)

    def reshape(self, a: SecretValue, shape: Tuple[int, ...]) -> SecretValue:
        self._check(a)
        probe = np.empty(a.shape, dtype=np.int8).reshape(shape)
        return self._wrap(self._map(a.handle, lambda x: np.reshape(x, shape)), probe.shape, a.frac_bits)

    def transpose(self, a: SecretValue, axes: Optional[Tuple[int, ...]] = None) -> SecretValue:
        self._check(a)
        probe = np.empty(a.shape, dtype=np.int8).transpose(axes)
        return self._wrap(self._map(a.handle, lambda x: np.transpose(x, axes)), probe.shape, a.frac_bits)

    def broadcast_to(self, a: SecretValue, shape: Tuple[int, ...]) -> SecretValue:
        self._check(a)
        handle = self._map(a.handle, lambda x: np.array(np.broadcast_to(x, shape)))
        return self._wrap(handle, shape, a.frac_bits)

    def expand_dims(self, a: SecretValue, axis: int) -> SecretValue:
        self._check(a)
        probe = np.expand_dims(np.empty(a.shape, dtype=np.int8), axis)
        return self._wrap(self._map(a.handle, lambda x: np.expand_dims(x, axis)), probe.shape, a.frac_bits)

    def sum(self, a: SecretValue, axis=None, keepdims: bool = False) -> SecretValue:
        self._check(a)
        probe = np.empty(a.shape, dtype=np.int8).sum(axis=axis, keepdims=keepdims)
        handle = self._map(a.handle, lambda x: ring_sum(x, self.spec, axis=axis, keepdims=keepdims))
        return self._wrap(handle, np.shape(probe), a.frac_bits)

    def concat(self, values: Sequence[SecretValue], axis: int = 0) -> SecretValue:
        self._check(*values)
        fb = max(v.frac_bits for v in values)
        aligned = [self.rescale(v, fb) for v in values]
        probe = np.concatenate([np.empty(v.shape, dtype=np.int8) for v in aligned], axis=axis)
        handle = self._combine([v.handle for v in aligned], lambda *xs: np.concatenate(xs, axis=axis))
        return self._wrap(handle, probe.shape, fb)

    def stack(self, values: Sequence[SecretValue], axis: int = 0) -> SecretValue:
        return self.concat([self.expand_dims(v, axis) for v in values], axis=axis)

    # ------------------------------------------------------------------
    # Operações interativas
    # ------------------------------------------------------------------

    def _product_scales(self, a: SecretValue, b: SecretValue,
                        out_frac: Optional[int]) -> Tuple[int, int]:
        product = a.frac_bits + b.frac_bits
        target = max(a.frac_bits, b.frac_bits) if out_frac is None else out_frac
        if not 0 <= target <= product:
            raise ValueError(f"Escala de saída {target} inválida para produto em {product} bits")
        return target, product - target

    def mul(self, a: SecretValue, b: SecretValue, out_frac: Optional[int] = None) -> SecretValue:
        """
        Produto elemento a elemento (com broadcasting) em uma rodada.

        A escala de saída padrão é max(fa, fb); o truncamento de min(fa, fb)
        bits ocorre na mesma rodada. Produtos com operando inteiro não truncam.
        """
        self._check(a, b)
        shape = self._broadcast(a.shape, b.shape)
        target, trunc = self._product_scales(a, b, out_frac)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if trunc:
            self._reserve(f"trunc:{trunc}", n)
        self.cost.count("mul")
        return self._wrap(self._mul(a.handle, b.handle, trunc, matmul=False), shape, target)

    def matmul(self, a: SecretValue, b: SecretValue, out_frac: Optional[int] = None) -> SecretValue:
        self._check(a, b)
        try:
            shape = np.matmul(np.empty(a.shape, dtype=np.int8), np.empty(b.shape, dtype=np.int8)).shape
        except ValueError:
            raise ShapeMismatchError(f"matmul incompatível: {a.shape} @ {b.shape}") from None
        target, trunc = self._product_scales(a, b, out_frac)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if trunc:
            self._reserve(f"trunc:{trunc}", n)
        self.cost.count("matmul")
        return self._wrap(self._mul(a.handle, b.handle, trunc, matmul=True), shape, target)

    def truncate(self, a: SecretValue, bits: int) -> SecretValue:
        """Truncamento probabilístico de `bits` bits (1 rodada)."""
        self._check(a)
        if bits <= 0:
            return a
        if bits > a.frac_bits:
            raise ValueError(f"Truncamento de {bits} bits maior que a escala {a.frac_bits}")
        self._reserve(f"trunc:{bits}", a.size)
        self.cost.count("truncate")
        return self._wrap(self._truncate(a.handle, bits), a.shape, a.frac_bits - bits)

    def ltz(self, a: SecretValue) -> SecretValue:
        """Bit secreto [a < 0] (escala 0)."""
        self._check(a)
        self._reserve("edabit", a.size)
        self.cost.count("ltz")
        return self._wrap(self._ltz(a.handle, a.shape), a.shape, 0)

    def shuffle(self, rows: SecretValue, identity: bool = False) -> SecretValue:
        """
        Permuta as linhas por π2∘π1∘π0, cada πi derivada de s_i.

        Args:
            rows: tensor n x w
            identity: gancho de teste (mesmo custo, permutação identidade)
        """
        self._check(rows)
        n = rows.shape[0]
        if identity:
            perms = [np.arange(n) for _ in range(3)]
        else:
            perms = [self.seeds.shuffle_permutation(i, self._shuffle_counter, n) for i in range(3)]
        self._shuffle_counter += 1
        self.cost.count("shuffle")
        return self._wrap(self._shuffle(rows.handle, perms), rows.shape, rows.frac_bits)

    def composed_permutation(self, counter: int, n: int) -> np.ndarray:
        """Permutação total aplicada pelo shuffle de número `counter` (uso em testes)."""
        order = np.arange(n)
        for i in range(3):
            order = order[self.seeds.shuffle_permutation(i, counter, n)]
        return order

    def open(self, a: SecretValue, step: str, recipient: str, kind: str = "release",
             step_index: Optional[int] = None) -> np.ndarray:
        """
        Reconstrói um valor para `recipient` se a abertura estiver autorizada.

        Raises:
            UnauthorizedOpenError: passo/destinatário/tipo fora da lista branca
        """
        self._check(a)
        if recipient not in self.parties and recipient != ALL_SERVERS:
            raise ValueError(f"Destinatário desconhecido: '{recipient}'")
        self.leakage.record(step, recipient, kind, a.shape, self.cost.rounds, step_index)
        ring = self._open(a.handle, recipient)
        self.cost.count("open")
        return decode(ring, self.spec, a.frac_bits)

    def gaussian_table(self, rows: int, cols: int, scale: float,
                       transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                       frac_bits: Optional[int] = None) -> SecretValue:
        """
        Protocolo GS: cada servidor amostra N(0, scale²/2), compartilha e a
        coorte soma. Variância total 1.5*scale² com os três honestos.

        Args:
            transform: transformação linear pública aplicada por cada servidor
                à própria contribuição antes de compartilhar
        """
        fb = self.spec.frac_bits if frac_bits is None else frac_bits
        std = scale / math.sqrt(2.0)
        items = []
        for server in SERVERS:
            noise = self.seeds.gaussian(server, self._gauss_counter, (rows, cols), std)
            if transform is not None:
                noise = transform(noise)
            items.append((encode(noise, self.spec, fb), server))
        self._gauss_counter += 1
        handles = self._input(items)
        total = self._combine(handles, lambda x, y, z: ring_add(ring_add(x, y, self.spec), z, self.spec))
        self.cost.count("gaussian_table")
        shape = np.shape(items[0][0])
        logger.debug(f"🎲 Tabela gaussiana {shape} com escala {scale:.4f}")
        return self._wrap(total, shape, fb)

    def get_statistics(self) -> Dict[str, Any]:
        return {
            "backend": self.tag,
            "cohort": self.cohort,
            "ring_bits": self.spec.total_bits,
            "frac_bits": self.spec.frac_bits,
            "cost": self.cost.to_dict(),
            "opens": len(self.leakage.entries),
            "pool": dict(self.pool),
        }


class OracleBackend(SecretBackend):
    """
    Funcionalidade ideal: calcula sobre o texto claro codificado, com
    truncamento determinístico (floor), e lança os custos do CostModel.
    """

    tag = "oracle"

    def _input(self, items):
        self.cost_model.input(self.cost, [(owner, int(np.size(r))) for r, owner in items])
        return [self.spec.reduce(np.array(r, copy=True)) for r, _ in items]

    def _public(self, ring):
        return self.spec.reduce(np.array(ring, copy=True))

    def _map(self, handle, fn):
        return self.spec.reduce(fn(handle))

    def _combine(self, handles, fn):
        return self.spec.reduce(fn(*handles))

    def _add_public(self, handle, ring):
        return ring_add(handle, ring, self.spec)

    def _mul(self, ha, hb, trunc_bits, matmul):
        product = ring_matmul(ha, hb, self.spec) if matmul else ring_mul(ha, hb, self.spec)
        self.cost_model.mul(self.cost, int(np.size(product)), fused=trunc_bits > 0)
        return truncate(product, trunc_bits, self.spec) if trunc_bits else product

    def _truncate(self, handle, bits):
        self.cost_model.truncate(self.cost, int(np.size(handle)))
        return truncate(handle, bits, self.spec)

    def _ltz(self, handle, shape):
        self.cost_model.ltz(self.cost, int(np.size(handle)))
        negative = (self.spec.to_signed(handle) < 0).astype(np.int64)
        return self.spec.reduce(negative)

    def _shuffle(self, handle, permutations):
        n = handle.shape[0]
        width = int(np.size(handle)) // max(n, 1)
        self.cost_model.shuffle(self.cost, n, width)
        out = handle
        for perm in permutations:
            out = out[perm]
        return out

    def _open(self, handle, recipient):
        self.cost_model.open(self.cost, int(np.size(handle)), recipient)
        return np.array(handle, copy=True)

    def _refill(self, kind, count):
        self.cost_model.preprocessing(self.cost, kind, count, self.config.hybrid_trust)


def create_backend(kind: str = "oracle", spec: Optional[FixedPointSpec] = None,
                   config: Optional[BackendConfig] = None, seed: int = 0,
                   cohort: str = "cohort0", num_clients: int = 0) -> SecretBackend:
    """
    Factory function para criar um backend ABB.

    Args:
        kind: 'oracle' ou 'rep3'
    """
    spec = spec or FixedPointSpec()
    if kind == "oracle":
        return OracleBackend(spec, config, seed=seed, cohort=cohort, num_clients=num_clients)
    if kind == "rep3":
        try:
            from .rep3 import Rep3Backend
        except ImportError:
            from rep3 import Rep3Backend
        return Rep3Backend(spec, config, seed=seed, cohort=cohort, num_clients=num_clients)
    raise ValueError(f"Backend desconhecido: '{kind}' (use 'oracle' ou 'rep3')")

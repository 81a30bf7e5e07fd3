"""
Rep3: Compartilhamento replicado entre três servidores (maioria honesta)

A parte P_i guarda o par (x_{i-1}, x_{i+1}) com x_0 + x_1 + x_2 = encode(x).
A semente s_j é conhecida pelas partes j-1 e j+1, de modo que
- zeros: z_i = F(s_{i+1}) - F(s_{i-1}) somam 0
- aleatórios replicados: componente j = F(s_j), sem comunicação

Toda troca passa pela rede simulada (transport.Network) e é contabilizada
no CostLedger da coorte; o cronograma coincide com o CostModel do oráculo.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    from .abb import ALL_SERVERS, BackendConfig, CohortSeeds, SecretBackend
    from .errors import InconsistentSharesError, ShapeMismatchError
    from .numerics import FixedPointSpec, ring_add, ring_matmul, ring_mul, ring_sub, ring_sum
    from .transport import ANALYST, DEALER, SERVERS, Network, client_id
except ImportError:
    # Para execução direta
    from abb import ALL_SERVERS, BackendConfig, CohortSeeds, SecretBackend
    from errors import InconsistentSharesError, ShapeMismatchError
    from numerics import FixedPointSpec, ring_add, ring_matmul, ring_mul, ring_sub, ring_sum
    from transport import ANALYST, DEALER, SERVERS, Network, client_id

logger = logging.getLogger(__name__)


def _prev(i: int) -> int:
    return (i - 1) % 3


def _next(i: int) -> int:
    return (i + 1) % 3


def view_position(party: int, component: int) -> int:
    """Posição do componente na visão da parte (0 para x_{i-1}, 1 para x_{i+1})."""
    if component == _prev(party):
        return 0
    if component == _next(party):
        return 1
    raise ValueError(f"Parte P{party} não guarda o componente {component}")


@dataclass
class Rep3Share:
    """Visões das três partes: views[i] = (x_{i-1}, x_{i+1})."""
    views: List[Tuple[np.ndarray, np.ndarray]]

    @classmethod
    def from_components(cls, components: Sequence[np.ndarray]) -> "Rep3Share":
        return cls([(np.array(components[_prev(i)], copy=True),
                     np.array(components[_next(i)], copy=True)) for i in range(3)])

    def component(self, j: int) -> np.ndarray:
        """Componente j lido de P_{j+1} (cópia na posição 0)."""
        return self.views[_next(j)][0]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(np.shape(self.views[0][0]))


def share(value: np.ndarray, spec: FixedPointSpec, rng: np.random.Generator) -> Rep3Share:
    """
    Divide um tensor do anel em três componentes aleatórios.

    Args:
        value: tensor já codificado no anel
        rng: gerador privado do dono (cliente ou dealer)
    """
    shape = np.shape(value)
    x0 = spec.random(shape, rng)
    x1 = spec.random(shape, rng)
    x2 = ring_sub(ring_sub(value, x0, spec), x1, spec)
    return Rep3Share.from_components([x0, x1, x2])


def _equal(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.asarray(a) == np.asarray(b)))


def reconstruct(shares: Rep3Share, spec: FixedPointSpec) -> np.ndarray:
    """
    Soma dos três componentes distintos, conferindo as duas cópias de cada um.

    Raises:
        InconsistentSharesError: se as cópias replicadas divergirem
    """
    components = []
    for j in range(3):
        first = shares.views[_next(j)][0]
        second = shares.views[_prev(j)][1]
        if not _equal(first, second):
            logger.error(f"❌ Cópias divergentes do componente {j}")
            raise InconsistentSharesError(f"Cópias do componente {j} divergem entre P{_next(j)} e P{_prev(j)}")
        components.append(first)
    return ring_add(ring_add(components[0], components[1], spec), components[2], spec)


class PrfSetup:
    """
    PRF compartilhada: F(s_j) avaliada por ambos os detentores de s_j com
    um contador global sincronizado.
    """

    def __init__(self, seeds: CohortSeeds, spec: FixedPointSpec):
        self.seeds = seeds
        self.spec = spec
        self.counter = 0

    def next_counter(self) -> int:
        value = self.counter
        self.counter += 1
        return value

    def streams(self, shape: Tuple[int, ...]) -> List[np.ndarray]:
        """F(s_0), F(s_1), F(s_2) no próximo contador."""
        counter = self.next_counter()
        return [self.seeds.prf(j, counter, shape, self.spec) for j in range(3)]

    def zero_shares(self, shape: Tuple[int, ...]) -> List[np.ndarray]:
        """z_i = F(s_{i+1}) - F(s_{i-1}); soma zero."""
        f = self.streams(shape)
        return [ring_sub(f[_next(i)], f[_prev(i)], self.spec) for i in range(3)]

    def random_sharing(self, shape: Tuple[int, ...]) -> Rep3Share:
        """Compartilhamento replicado de um valor aleatório desconhecido."""
        return Rep3Share.from_components(self.streams(shape))


class Rep3Backend(SecretBackend):
    """Backend MPC real sobre compartilhamento replicado com três servidores."""

    tag = "rep3"

    def __init__(self, spec: FixedPointSpec, config: Optional[BackendConfig] = None,
                 seed: int = 0, cohort: str = "cohort0", num_clients: int = 0):
        super().__init__(spec, config, seed=seed, cohort=cohort, num_clients=num_clients)
        extra = [client_id(i) for i in range(num_clients)] + [ANALYST, DEALER]
        self.network = Network(spec, self.cost, parties=extra,
                               record_transcript=self.config.record_transcript)
        self.prf = PrfSetup(self.seeds, spec)
        self._material: Dict[str, List[Rep3Share]] = {}
        self._dealer_counter = 0

    # ------------------------------------------------------------------
    # Auxiliares locais
    # ------------------------------------------------------------------

    def _reduce(self, x: np.ndarray) -> np.ndarray:
        return self.spec.reduce(x)

    def _lin(self, x: Rep3Share, coef: np.ndarray, const: Optional[np.ndarray] = None) -> Rep3Share:
        """coef*x + const, com const somada ao componente 0."""
        scaled = self._map(x, lambda a: ring_mul(a, coef, self.spec))
        return scaled if const is None else self._add_public(scaled, const)

    def _raw_mul(self, x: Rep3Share, y: Rep3Share, label: str, matmul: bool = False) -> Rep3Share:
        """Produto sem truncamento: P_i envia t_i a P_{i-1}."""
        t = self._local_products(x, y, matmul)
        for i in range(3):
            self.network.send(SERVERS[i], SERVERS[_prev(i)], t[i])
        self.network.end_round(label)
        views = []
        for i in range(3):
            received = self.network.recv(SERVERS[i], SERVERS[_next(i)])
            views.append((received, t[i]))
        return Rep3Share(views)

    def _local_products(self, x: Rep3Share, y: Rep3Share, matmul: bool) -> List[np.ndarray]:
        op = ring_matmul if matmul else ring_mul
        partial = []
        for i in range(3):
            xm, xp = x.views[i]
            ym, yp = y.views[i]
            term = ring_add(op(xp, yp, self.spec), op(xp, ym, self.spec), self.spec)
            partial.append(ring_add(term, op(xm, yp, self.spec), self.spec))
        zeros = self.prf.zero_shares(np.shape(partial[0]))
        return [ring_add(partial[i], zeros[i], self.spec) for i in range(3)]

    def _with_correction(self, r_shift: Rep3Share, c: List[np.ndarray], bits: int) -> Rep3Share:
        """r' + (c >> m) + 1 no componente 2 (guardado por P0 e P1)."""
        views = [list(v) for v in r_shift.views]
        for party in (0, 1):
            shifted = self.spec.from_signed(self.spec.to_signed(c[party]) >> bits)
            corrected = ring_add(shifted, self.spec.constant(1, np.shape(shifted)), self.spec)
            pos = view_position(party, 2)
            views[party][pos] = ring_add(views[party][pos], corrected, self.spec)
        return Rep3Share([tuple(v) for v in views])

    def _take(self, kind: str, count: int, shape: Tuple[int, ...]) -> List[Rep3Share]:
        """Consome `count` itens do material armazenado, remodelados para `shape`."""
        stored = self._material[kind]
        taken, rest = [], []
        for item in stored:
            head = Rep3Share([(a[..., :count], b[..., :count]) for a, b in item.views])
            rest.append(Rep3Share([(a[..., count:], b[..., count:]) for a, b in item.views]))
            lead = head.shape[:-1]
            taken.append(Rep3Share([(np.reshape(a, lead + shape), np.reshape(b, lead + shape))
                                    for a, b in head.views]))
        self._material[kind] = rest
        return taken

    def _reveal_servers(self, x: Rep3Share, label: str) -> np.ndarray:
        """Cada P_{i+1} envia x_i a P_i; todos reconstroem o mesmo valor."""
        for i in range(3):
            self.network.send(SERVERS[_next(i)], SERVERS[i], x.views[_next(i)][0])
        self.network.end_round(label)
        values = []
        for i in range(3):
            missing = self.network.recv(SERVERS[i], SERVERS[_next(i)])
            a, b = x.views[i]
            values.append(ring_add(ring_add(a, b, self.spec), missing, self.spec))
        if not (_equal(values[0], values[1]) and _equal(values[1], values[2])):
            raise InconsistentSharesError(f"Servidores reconstruíram valores distintos em '{label}'")
        return values[0]

    # ------------------------------------------------------------------
    # Primitivas do ABB
    # ------------------------------------------------------------------

    def _input(self, items):
        plans = []
        for ring, owner in items:
            shape = np.shape(ring)
            if owner in SERVERS:
                j = SERVERS.index(owner)
                f = self.prf.streams(shape)
                own = ring_sub(ring_sub(ring, f[_prev(j)], self.spec), f[_next(j)], self.spec)
                self.network.send(owner, SERVERS[_prev(j)], own)
                self.network.send(owner, SERVERS[_next(j)], own)
                plans.append(("server", j, f))
            else:
                rng = self.seeds.party_rng(owner, self._input_counter)
                shares = share(ring, self.spec, rng)
                for i in range(3):
                    self.network.send(owner, SERVERS[i], np.stack(shares.views[i]))
                plans.append(("client", owner, None))
            self._input_counter += 1
        self.network.end_round("input")

        handles = []
        for kind, who, f in plans:
            if kind == "server":
                j = who
                views: List[Any] = [None, None, None]
                views[j] = (f[_prev(j)], f[_next(j)])
                views[_prev(j)] = (f[_next(j)], self.network.recv(SERVERS[_prev(j)], SERVERS[j]))
                views[_next(j)] = (self.network.recv(SERVERS[_next(j)], SERVERS[j]), f[_prev(j)])
                handles.append(Rep3Share(views))
            else:
                views = []
                for i in range(3):
                    pair = self.network.recv(SERVERS[i], who)
                    views.append((pair[0], pair[1]))
                handles.append(Rep3Share(views))
        return handles

    def _public(self, ring):
        zero = self.spec.zeros(np.shape(ring))
        return Rep3Share.from_components([ring, zero, zero])

    def _map(self, handle, fn):
        return Rep3Share([(self._reduce(fn(a)), self._reduce(fn(b))) for a, b in handle.views])

    def _combine(self, handles, fn):
        views = []
        for i in range(3):
            first = fn(*[h.views[i][0] for h in handles])
            second = fn(*[h.views[i][1] for h in handles])
            views.append((self._reduce(first), self._reduce(second)))
        return Rep3Share(views)

    def _add_public(self, handle, ring):
        views = [list(v) for v in handle.views]
        for party in (1, 2):
            pos = view_position(party, 0)
            views[party][pos] = ring_add(views[party][pos], ring, self.spec)
        return Rep3Share([tuple(v) for v in views])

    def _mul(self, ha, hb, trunc_bits, matmul):
        if not trunc_bits:
            return self._raw_mul(ha, hb, "matmul" if matmul else "mul", matmul=matmul)

        t = self._local_products(ha, hb, matmul)
        shape = np.shape(t[0])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        r, r_shift = self._take(f"trunc:{trunc_bits}", n, shape)

        # u_i = t_i - r_{i+1}: P0 e P1 aprendem c = xy - r
        u = [ring_sub(t[i], r.views[i][1], self.spec) for i in range(3)]
        self.network.send("S1", "S0", u[1])
        self.network.send("S2", "S0", u[2])
        self.network.send("S2", "S1", u[2])
        self.network.send("S0", "S1", u[0])
        self.network.end_round("mul_trunc")
        c0 = ring_add(ring_add(u[0], self.network.recv("S0", "S1"), self.spec),
                      self.network.recv("S0", "S2"), self.spec)
        c1 = ring_add(ring_add(self.network.recv("S1", "S0"), u[1], self.spec),
                      self.network.recv("S1", "S2"), self.spec)
        return self._with_correction(r_shift, [c0, c1], trunc_bits)

    def _truncate(self, handle, bits):
        shape = handle.shape
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        r, r_shift = self._take(f"trunc:{bits}", n, shape)
        d = [(ring_sub(a, ra, self.spec), ring_sub(b, rb, self.spec))
             for (a, b), (ra, rb) in zip(handle.views, r.views)]
        self.network.send("S1", "S0", d[1][0])   # d_0
        self.network.send("S2", "S1", d[2][0])   # d_1
        self.network.end_round("truncate")
        c0 = ring_add(ring_add(d[0][0], d[0][1], self.spec), self.network.recv("S0", "S1"), self.spec)
        c1 = ring_add(ring_add(d[1][0], d[1][1], self.spec), self.network.recv("S1", "S2"), self.spec)
        return self._with_correction(r_shift, [c0, c1], bits)

    def _ltz(self, handle, shape):
        k = self.spec.total_bits
        m = k - 1
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        x = self._map(handle, lambda a: np.reshape(a, (n,)))
        r, bits = self._take("edabit", n, (n,))

        # c = x + r aberto aos servidores
        masked = self._combine([x, r], lambda a, b: ring_add(a, b, self.spec))
        c = self._reveal_servers(masked, "ltz_open")
        cbits = self.spec.bits(c, k)

        low = self._map(bits, lambda a: a[:m])
        c_low = cbits[:m]
        # e_j = 1 - (c_j xor b_j) = (1 - c_j) + (2 c_j - 1) b_j
        equal = self._lin(low, self.spec.from_signed(2 * c_low - 1), self.spec.from_signed(1 - c_low))

        # produto de sufixos inclusivo (Hillis-Steele)
        suffix = equal
        s = 1
        while s < m:
            head = self._map(suffix, lambda a, s=s: a[:m - s])
            tail = self._map(suffix, lambda a, s=s: a[s:])
            merged = self._raw_mul(head, tail, "ltz_scan")
            rest = self._map(suffix, lambda a, s=s: a[m - s:])
            suffix = self._combine([merged, rest], lambda a, b: np.concatenate([a, b], axis=0))
            s *= 2

        # borrow = sum_i (1 - c_i) b_i Q_{i+1}, com Q_m = 1
        weighted = self._lin(low, self.spec.from_signed(1 - c_low))
        head = self._map(weighted, lambda a: a[:m - 1])
        above = self._map(suffix, lambda a: a[1:])
        terms = self._raw_mul(head, above, "ltz_borrow")
        borrow = self._combine([terms, self._map(weighted, lambda a: a[m - 1])],
                               lambda a, b: ring_add(ring_sum(a, self.spec, axis=0), b, self.spec))

        # t = b_top xor borrow; msb = c_top xor t
        top = self._map(bits, lambda a: a[m])
        cross = self._raw_mul(top, borrow, "ltz_xor")
        t = self._combine([top, borrow, cross],
                          lambda a, b, ab: ring_sub(ring_add(a, b, self.spec),
                                                    ring_mul(ab, self.spec.constant(2), self.spec), self.spec))
        c_top = cbits[m]
        msb = self._lin(t, self.spec.from_signed(1 - 2 * c_top), self.spec.from_signed(c_top))
        return self._map(msb, lambda a: np.reshape(a, shape))

    def _shuffle(self, handle, permutations):
        x = handle
        for i, perm in enumerate(permutations):
            a_party, b_party, c_party = _prev(i), _next(i), i
            # 2-de-2 entre os detentores de s_i
            a = ring_add(x.views[a_party][0], x.views[a_party][1], self.spec)
            b = x.views[b_party][1]
            a_perm, b_perm = a[perm], b[perm]
            f = self.prf.streams(np.shape(a_perm))
            y_next, y_prev = f[_next(i)], f[_prev(i)]
            alpha = ring_sub(a_perm, y_next, self.spec)
            beta = ring_sub(b_perm, y_prev, self.spec)
            self.network.send(SERVERS[a_party], SERVERS[b_party], alpha)
            self.network.send(SERVERS[b_party], SERVERS[a_party], beta)
            self.network.end_round("shuffle")
            y_i_at_b = ring_add(self.network.recv(SERVERS[b_party], SERVERS[a_party]), beta, self.spec)
            y_i_at_a = ring_add(alpha, self.network.recv(SERVERS[a_party], SERVERS[b_party]), self.spec)
            views: List[Any] = [None, None, None]
            views[c_party] = (y_prev, y_next)
            views[a_party] = (y_next, y_i_at_a)
            views[b_party] = (y_i_at_b, y_prev)
            x = Rep3Share(views)
        return x

    def _open(self, handle, recipient):
        if recipient in SERVERS:
            j = SERVERS.index(recipient)
            holder = SERVERS[_next(j)]
            self.network.send(holder, recipient, handle.views[_next(j)][0])
            self.network.end_round("open")
            a, b = handle.views[j]
            missing = self.network.recv(recipient, holder)
            return ring_add(ring_add(a, b, self.spec), missing, self.spec)
        if recipient == ALL_SERVERS:
            return self._reveal_servers(handle, "open")
        for i in range(3):
            self.network.send(SERVERS[i], recipient, np.stack(handle.views[i]))
        self.network.end_round("open")
        views = []
        for i in range(3):
            pair = self.network.recv(recipient, SERVERS[i])
            views.append((pair[0], pair[1]))
        return reconstruct(Rep3Share(views), self.spec)

    # ------------------------------------------------------------------
    # Pré-processamento
    # ------------------------------------------------------------------

    def _signed_trunc_pair(self, random_ring: np.ndarray, bits: int) -> Tuple[np.ndarray, np.ndarray]:
        """r uniforme em [-2^(k-2), 2^(k-2)) e r' = r >> m, ambos no anel."""
        r = self.spec.to_signed(random_ring) >> 1
        return self.spec.from_signed(r), self.spec.from_signed(r >> bits)

    def _refill(self, kind, count):
        with self.cost.preprocessing():
            if self.config.hybrid_trust:
                fresh = self._dealer_material(kind, count)
            else:
                fresh = self._interactive_material(kind, count)
        stored = self._material.get(kind)
        if stored:
            fresh = [Rep3Share([(np.concatenate([a0, a1], axis=-1), np.concatenate([b0, b1], axis=-1))
                                for (a0, b0), (a1, b1) in zip(old.views, new.views)])
                     for old, new in zip(stored, fresh)]
        self._material[kind] = fresh
        logger.debug(f"🎲 Pool '{kind}' reabastecido com {count} itens")

    def _dealer_material(self, kind: str, count: int) -> List[Rep3Share]:
        """Dealer confiável gera e distribui o material em uma rodada."""
        rng = self.seeds.party_rng(DEALER, self._dealer_counter)
        self._dealer_counter += 1
        k = self.spec.total_bits
        if kind == "edabit":
            bit_values = rng.integers(0, 2, size=(k, count)).astype(np.int64)
            if self.spec.is_wide:
                weights = np.array([1 << j for j in range(k)], dtype=object)
                r = self.spec.reduce(weights @ bit_values.astype(object))
            else:
                shifts = np.arange(k, dtype=np.uint64)[:, None]
                with np.errstate(over="ignore"):
                    r = self.spec.reduce((bit_values.astype(np.uint64) << shifts).sum(axis=0, dtype=np.uint64))
            values = [r, self.spec.reduce(bit_values)]
        else:
            bits = int(kind.split(":")[1])
            values = list(self._signed_trunc_pair(self.spec.random((count,), rng), bits))

        shared = [share(v, self.spec, rng) for v in values]
        for i in range(3):
            payload = np.concatenate([np.stack(s.views[i]).reshape(2, -1) for s in shared], axis=1)
            self.network.send(DEALER, SERVERS[i], payload)
        self.network.end_round("preprocessing")

        received = [self.network.recv(SERVERS[i], DEALER) for i in range(3)]
        out, offset = [], 0
        for v in values:
            size = int(np.size(v))
            views = [(received[i][0, offset:offset + size].reshape(np.shape(v)),
                      received[i][1, offset:offset + size].reshape(np.shape(v))) for i in range(3)]
            out.append(Rep3Share(views))
            offset += size
        return out

    def _interactive_material(self, kind: str, count: int) -> List[Rep3Share]:
        """Bits aleatórios como XOR de três bits fornecidos pelos servidores."""
        k = self.spec.total_bits
        nbits = self.cost_model.bits_per_item(kind)
        contributions = []
        for server in SERVERS:
            rng = self.seeds.party_rng(server, self._dealer_counter)
            contributions.append((self.spec.reduce(rng.integers(0, 2, size=(nbits, count)).astype(np.int64)),
                                  server))
        self._dealer_counter += 1
        b0, b1, b2 = self._input(contributions)

        def xor(x: Rep3Share, y: Rep3Share) -> Rep3Share:
            xy = self._raw_mul(x, y, "preprocessing_xor")
            return self._combine([x, y, xy], lambda a, b, ab: ring_sub(
                ring_add(a, b, self.spec), ring_mul(ab, self.spec.constant(2), self.spec), self.spec))

        bits = xor(xor(b0, b1), b2)
        if kind == "edabit":
            weights = self.spec.from_signed(np.array([1 << j for j in range(k)], dtype=object)
                                            if self.spec.is_wide else
                                            np.array([(1 << j) if j < 63 else -(1 << 63) for j in range(k)],
                                                     dtype=np.int64))
            r = self._map(bits, lambda a: ring_matmul(weights, a, self.spec))
            return [r, bits]

        m = int(kind.split(":")[1])
        top = k - 2
        r_coef = [1 << j for j in range(top)] + [-(1 << top)]
        s_coef = [(1 << (j - m)) if j >= m else 0 for j in range(top)] + [-(1 << (top - m))]
        dtype = object if self.spec.is_wide else np.int64
        r_weights = self.spec.from_signed(np.array(r_coef, dtype=dtype))
        s_weights = self.spec.from_signed(np.array(s_coef, dtype=dtype))
        r = self._map(bits, lambda a: ring_matmul(r_weights, a, self.spec))
        r_shift = self._map(bits, lambda a: ring_matmul(s_weights, a, self.spec))
        return [r, r_shift]

    def get_statistics(self) -> Dict[str, Any]:
        stats = super().get_statistics()
        stats["network"] = self.network.get_statistics()
        return stats

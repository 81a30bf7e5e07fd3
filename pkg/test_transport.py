"""
Testes da rede simulada por rodadas
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

# Adicionar diretório do projeto ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.mpc.abb import CostLedger
from src.mpc.errors import ProtocolFault, UnknownEndpointError
from src.mpc.numerics import FixedPointSpec, default_spec
from src.mpc.transport import LAN, WAN, LatencyModel, Network, estimate_walltime


def _network(**kwargs) -> Network:
    return Network(default_spec(), CostLedger(), parties=["C0", "analyst"], **kwargs)


def test_send_charges_sender_bytes():
    print("🧪 Testando cobrança de bytes...")
    net = _network()
    charged = net.send("S0", "S1", np.array([1, 2, 3], dtype=np.uint64))
    assert charged == 24
    assert net.ledger.party_bytes("S0") == 24
    assert net.ledger.party_bytes("S1") == 0
    narrow = Network(FixedPointSpec(32, 8), CostLedger())
    assert narrow.send("S1", "S2", np.zeros(3, dtype=np.uint64)) == 12
    print("✅ 8 bytes por elemento em k=64 e 4 em k=32")


def test_messages_visible_only_after_round():
    net = _network()
    net.send("S0", "S1", np.array([7], dtype=np.uint64))
    try:
        net.recv("S1", "S0")
    except ProtocolFault:
        pass
    else:
        raise AssertionError("mensagem não deveria estar legível antes de end_round")
    net.end_round("step")
    np.testing.assert_array_equal(net.recv("S1", "S0"), [7])
    assert net.ledger.rounds == 1


def test_empty_round_not_counted():
    net = _network()
    net.end_round("nothing")
    assert net.ledger.rounds == 0
    assert net.round_index == 0


def test_channels_are_private():
    print("🧪 Testando isolamento dos canais...")
    net = _network()
    net.send("S0", "S1", np.array([5], dtype=np.uint64))
    net.end_round("private")
    for party, sender in (("S2", "S0"), ("S0", "S0"), ("S2", "S1")):
        try:
            net.recv(party, sender)
        except ProtocolFault:
            continue
        raise AssertionError(f"{party} não deveria ler mensagem de {sender}")
    np.testing.assert_array_equal(net.recv("S1", "S0"), [5])
    print("✅ S2 não lê o canal S0→S1")


def test_unknown_endpoint_raises():
    net = _network()
    for sender, recipient in (("S0", "S9"), ("mallory", "S1")):
        try:
            net.send(sender, recipient, np.zeros(1, dtype=np.uint64))
        except UnknownEndpointError:
            continue
        raise AssertionError("endpoint desconhecido deveria falhar")


def test_fifo_per_sender():
    net = _network()
    for value in (1, 2, 3):
        net.send("C0", "S2", np.array([value], dtype=np.uint64))
    net.send("S0", "S2", np.array([9], dtype=np.uint64))
    net.end_round("fifo")
    assert [int(net.recv("S2", "C0")[0]) for _ in range(3)] == [1, 2, 3]
    assert int(net.recv("S2", "S0")[0]) == 9


def test_shapes_survive_transport():
    net = _network()
    payload = np.arange(12, dtype=np.uint64).reshape(3, 4)
    net.send("S1", "analyst", payload)
    net.end_round("shape")
    np.testing.assert_array_equal(net.recv("analyst", "S1"), payload)


def test_capture_views_records_received_payloads():
    net = _network()
    net.capture_views("S2")
    net.send("S0", "S2", np.array([11, 12], dtype=np.uint64))
    net.send("S0", "S1", np.array([13], dtype=np.uint64))
    net.end_round("views")
    net.recv("S2", "S0")
    net.recv("S1", "S0")
    views = net.endpoints["S2"].views
    assert len(views) == 1
    np.testing.assert_array_equal(views[0], [11, 12])


def test_transcript_jsonl():
    print("🧪 Testando transcrito JSONL...")
    net = _network()
    net.send("S0", "S1", np.zeros(2, dtype=np.uint64))
    net.end_round("first")
    net.send("C0", "S2", np.zeros(1, dtype=np.uint64))
    net.end_round("second")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "transcript.jsonl"
        net.write_transcript(str(path))
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
    assert len(records) == 2
    assert set(records[0]) == {"round", "from", "to", "byte_len", "step_label"}
    assert records[0]["round"] == 0 and records[1]["round"] == 1
    assert records[1] == {"round": 1, "from": "C0", "to": "S2", "byte_len": 8, "step_label": "second"}
    stats = net.get_statistics()
    assert stats["messages"] == 2 and stats["bytes"] == 24
    print("✅ Transcrito com chaves round/from/to/byte_len/step_label")


def test_walltime_formula():
    ledger = CostLedger(rounds=10, bytes_sent={"S0": 1000, "S1": 4000})
    model = LatencyModel(bandwidth_bps=8000.0, delay_s=0.5)
    assert abs(estimate_walltime(ledger, model) - (10 * 2 * 0.5 + 4000 * 8 / 8000.0)) < 1e-12
    assert estimate_walltime(ledger, WAN) >= estimate_walltime(ledger, LAN)

    ledger.preprocessing_rounds = 4
    ledger.preprocessing_bytes = {"dealer": 8000}
    with_pre = estimate_walltime(ledger, model, include_preprocessing=True)
    assert abs(with_pre - (14 * 2 * 0.5 + 8000 * 8 / 8000.0)) < 1e-12


if __name__ == "__main__":
    print("🚀 TESTE DA REDE SIMULADA")
    print("=" * 50)
    tests = [(name, fn) for name, fn in list(globals().items())
             if name.startswith("test_") and callable(fn)]
    failures = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
        except Exception as e:
            failures += 1
            print(f"❌ {name}: {e}")
    print(f"\n📊 {len(tests) - failures}/{len(tests)} testes passaram")
    sys.exit(1 if failures else 0)

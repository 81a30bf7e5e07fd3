"""
Testes do contrato ABB com o backend oráculo
"""

import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

# Adicionar diretório do projeto ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.mpc.abb import ALL_SERVERS, BackendConfig, create_backend
from src.mpc.errors import (BackendMismatchError, PreprocessingExhaustedError,
                            ShapeMismatchError, UnauthorizedOpenError)


def _oracle(**config_kwargs):
    backend = create_backend("oracle", config=BackendConfig(**config_kwargs), seed=3,
                             cohort="test", num_clients=2)
    backend.leakage.authorize("test", "*")
    return backend


def test_input_open_roundtrip():
    print("🧪 Testando input/open no oráculo...")
    bk = _oracle()
    rng = np.random.default_rng(0)
    for i in range(100):
        x = rng.normal(0.0, 50.0, size=(rng.integers(1, 6), 3))
        owner = "C0" if i % 2 else "S1"
        opened = bk.open(bk.input(x, owner), "test", "analyst")
        assert np.max(np.abs(opened - x)) <= 2.0 ** -16
    print("✅ 100 tensores recuperados dentro de 2^-16")


def test_linear_ops_are_free():
    bk = _oracle()
    a = bk.input(np.array([1.0, 2.0]), "C0")
    b = bk.input(np.array([0.5, -4.0]), "C1")
    before = bk.cost.snapshot()
    c = (a + b) - a * 3 + 1.5
    delta = bk.cost.delta(before)
    assert delta.rounds == 0 and delta.total_bytes() == 0
    np.testing.assert_allclose(bk.open(c, "test", "analyst"), [0.0, -6.5], atol=1e-4)


def test_mul_costs_one_online_round():
    bk = _oracle()
    a = bk.input(np.array([1.5, -2.0, 3.0]), "C0")
    b = bk.input(np.array([2.0, 2.5, -0.5]), "C1")
    before = bk.cost.snapshot()
    c = a * b
    delta = bk.cost.delta(before)
    assert delta.rounds == 1
    assert delta.preprocessing_rounds >= 1
    assert delta.bytes_sent == {"S0": 24, "S1": 24, "S2": 48}
    np.testing.assert_allclose(bk.open(c, "test", "analyst"), [3.0, -5.0, -1.5], atol=1e-4)


def test_matmul_accuracy():
    bk = _oracle()
    rng = np.random.default_rng(1)
    a = rng.uniform(-2, 2, size=(8, 8))
    b = rng.uniform(-2, 2, size=(8, 8))
    out = bk.open(bk.input(a, "C0") @ bk.input(b, "C1"), "test", "analyst")
    assert np.max(np.abs(out - a @ b)) < 2.0 ** -10


def test_unauthorized_open_raises():
    print("🧪 Testando lista branca de aberturas...")
    bk = create_backend("oracle", seed=0, cohort="strict", num_clients=1)
    x = bk.input(np.ones(3), "C0")
    try:
        bk.open(x, "embeddings", "analyst")
    except UnauthorizedOpenError as e:
        assert e.step == "embeddings"
    else:
        raise AssertionError("abertura fora da lista branca deveria falhar")
    bk.leakage.authorize("model", "analyst")
    try:
        bk.open(x, "model", "C0")
    except UnauthorizedOpenError:
        pass
    else:
        raise AssertionError("destinatário diferente deveria falhar")
    assert bk.leakage.entries == []
    print("✅ Aberturas não autorizadas bloqueadas")


def test_audit_open_requires_audit_mode():
    bk = create_backend("oracle", seed=0, cohort="audit", num_clients=1)
    bk.leakage.authorize("peek", "*", kind="audit")
    x = bk.input(np.ones(2), "C0")
    try:
        bk.open(x, "peek", "analyst", kind="audit")
    except UnauthorizedOpenError:
        pass
    else:
        raise AssertionError("auditoria desligada deveria bloquear")

    audited = _oracle(audit=True)
    audited.leakage.authorize("peek", "*", kind="audit")
    np.testing.assert_allclose(
        audited.open(audited.input(np.ones(2), "C0"), "peek", "analyst", kind="audit"), [1.0, 1.0])


def test_unknown_open_kind_rejected():
    bk = _oracle()
    try:
        bk.leakage.authorize("x", "*", kind="debug")
    except ValueError:
        return
    raise AssertionError("tipo de abertura desconhecido deveria falhar")


def test_mixing_backends_raises():
    first = create_backend("oracle", seed=0, cohort="a")
    second = create_backend("oracle", seed=0, cohort="b")
    x = first.input(np.ones(2), "S0")
    y = second.input(np.ones(2), "S0")
    try:
        first.add(x, y)
    except BackendMismatchError:
        return
    raise AssertionError("valores de coortes distintas não podem ser combinados")


def test_shape_mismatch_raises():
    bk = _oracle()
    a = bk.input(np.ones((2, 3)), "C0")
    b = bk.input(np.ones((4, 2)), "C1")
    for op in (lambda: a + b, lambda: a * b, lambda: a @ b):
        try:
            op()
        except ShapeMismatchError:
            continue
        raise AssertionError("formatos incompatíveis deveriam falhar")


def test_exhausted_pool_raises_without_refill():
    print("🧪 Testando pool de pré-processamento...")
    bk = _oracle(auto_refill=False)
    a = bk.input(np.ones(4), "C0")
    try:
        bk.mul(a, a)
    except PreprocessingExhaustedError:
        pass
    else:
        raise AssertionError("pool vazio deveria falhar")
    bk.preprocess(trunc_pairs={16: 4})
    np.testing.assert_allclose(bk.open(bk.mul(a, a), "test", "analyst"), np.ones(4))
    assert bk.pool["trunc:16"] == 0
    print("✅ Pool esgotado detectado e reabastecido por preprocess()")


def test_open_cost_by_recipient():
    bk = _oracle()
    bk.leakage.authorize("guard", ALL_SERVERS, "guard")
    x = bk.input(np.zeros(5), "S0")

    before = bk.cost.snapshot()
    bk.open(x, "test", "analyst")
    assert bk.cost.delta(before).bytes_sent == {"S0": 80, "S1": 80, "S2": 80}

    before = bk.cost.snapshot()
    bk.open(x, "guard", ALL_SERVERS, kind="guard")
    assert bk.cost.delta(before).bytes_sent == {"S0": 40, "S1": 40, "S2": 40}


def test_shuffle_matches_composed_permutation():
    bk = _oracle()
    rows = np.arange(20, dtype=np.float64).reshape(10, 2)
    shuffled = bk.open(bk.shuffle(bk.input(rows, "S0")), "test", "analyst")
    np.testing.assert_array_equal(shuffled, rows[bk.composed_permutation(0, 10)])

    before = bk.cost.snapshot()
    same = bk.open(bk.shuffle(bk.input(rows, "S0"), identity=True), "test", "analyst")
    np.testing.assert_array_equal(same, rows)
    assert bk.cost.delta(before).op_counts["shuffle"] == 1


def test_shuffle_uniform_over_three_rows():
    """Cada uma das 6 permutações com frequência 1/6 ± 3σ."""
    print("🧪 Testando uniformidade do shuffle (n=3)...")
    bk = _oracle()
    trials = 6000
    counts = {}
    for counter in range(trials):
        key = tuple(bk.composed_permutation(counter, 3))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    p = 1.0 / 6.0
    sigma = math.sqrt(trials * p * (1 - p))
    for key, count in counts.items():
        assert abs(count - trials * p) <= 3 * sigma, f"{key}: {count}"
    print("✅ Frequências dentro de 3σ")


def test_shuffle_uniform_chi_square():
    bk = _oracle()
    trials = 24000
    counts = {}
    for counter in range(trials):
        key = tuple(bk.composed_permutation(counter, 4))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 24
    result = stats.chisquare(list(counts.values()))
    assert result.pvalue > 0.01


def test_ltz_matches_sign():
    bk = _oracle()
    rng = np.random.default_rng(2)
    x = rng.uniform(-100, 100, size=10_000)
    x = x[np.abs(x) >= 2.0 ** -10]
    bits = bk.open(bk.ltz(bk.input(x, "C0")), "test", "analyst")
    np.testing.assert_array_equal(bits, (x < 0).astype(np.float64))


def test_cost_model_ltz_rounds():
    bk = _oracle()
    x = bk.input(np.array([-1.0, 2.0]), "C0")
    before = bk.cost.snapshot()
    bk.ltz(x)
    assert bk.cost.delta(before).rounds == bk.cost_model.ltz_rounds()


def test_leakage_digest_is_deterministic():
    def run() -> str:
        bk = _oracle()
        x = bk.input(np.arange(4.0), "C1")
        bk.open(x * 2, "test", "analyst", step_index=0)
        bk.open(x, "test", "C0", step_index=1)
        return bk.leakage.digest()

    first, second = run(), run()
    assert first == second and len(first) == 64


def test_gaussian_table_variance():
    bk = _oracle()
    table = bk.open(bk.gaussian_table(400, 50, scale=2.0), "test", "analyst")
    # três servidores com N(0, scale²/2) cada
    assert abs(np.var(table) / (1.5 * 4.0) - 1.0) < 0.05


def test_create_backend_unknown_kind():
    try:
        create_backend("garbled")
    except ValueError:
        return
    raise AssertionError("backend desconhecido deveria falhar")


if __name__ == "__main__":
    print("🚀 TESTE DO BACKEND ORÁCULO")
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

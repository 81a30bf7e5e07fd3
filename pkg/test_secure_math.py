"""
Testes das funções compostas (div, sqrt, exp, softmax, recorte)
"""

import math
import sys
from pathlib import Path

import numpy as np
from scipy.special import softmax as reference_softmax

# Adicionar diretório do projeto ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.mpc import secure_math as sm
from src.mpc.abb import BackendConfig, create_backend
from src.mpc.errors import DomainError
from src.mpc.numerics import FixedPointSpec


def _backend(kind: str = "oracle", **config_kwargs):
    bk = create_backend(kind, config=BackendConfig(**config_kwargs), seed=11,
                        cohort="math", num_clients=1)
    bk.leakage.authorize("test", "*")
    return bk


def _run(bk, fn, *arrays):
    values = [bk.input(np.asarray(a, dtype=np.float64), "C0") for a in arrays]
    return bk.open(fn(*values), "test", "analyst")


def test_div_by_one_is_identity():
    bk = _backend()
    x = np.array([0.0, 1.0, -3.5, 100.25, -0.001])
    out = _run(bk, sm.div, x, np.ones_like(x))
    np.testing.assert_allclose(out, x, atol=1e-3)


def test_div_accuracy():
    print("🧪 Testando divisão segura...")
    rng = np.random.default_rng(0)
    a = rng.uniform(1.0, 16.0, size=500) * rng.choice([-1.0, 1.0], size=500)
    b = rng.uniform(0.25, 16.0, size=500) * rng.choice([-1.0, 1.0], size=500)
    out = _run(_backend(), sm.div, a, b)
    np.testing.assert_allclose(out, a / b, rtol=1e-3, atol=1e-4)
    print(f"✅ Erro máximo: {np.max(np.abs(out - a / b)):.2e}")


def test_reciprocal_edges_of_domain():
    b = np.array([2.0 ** -8, 0.5, 3.0, 2.0 ** 15, -1000.0])
    out = _run(_backend(), sm.reciprocal, b)
    np.testing.assert_allclose(out, 1.0 / b, rtol=2e-3, atol=1e-4)


def test_sqrt_accuracy():
    print("🧪 Testando raiz quadrada segura...")
    bk = _backend()
    assert abs(float(_run(bk, sm.sqrt, [2.0])[0]) - math.sqrt(2.0)) < 1e-3
    rng = np.random.default_rng(1)
    a = rng.uniform(0.01, 1000.0, size=500)
    out = _run(bk, sm.sqrt, a)
    np.testing.assert_allclose(out, np.sqrt(a), rtol=1e-3)
    assert abs(float(_run(bk, sm.sqrt, [0.0])[0])) < 1e-4
    print("✅ sqrt dentro de 1e-3 relativo")


def test_exp_accuracy():
    print("🧪 Testando exponencial segura...")
    bk = _backend()
    assert abs(float(_run(bk, sm.exp, [1.0])[0]) - math.e) < 3e-3
    x = np.linspace(-8.0, 8.0, 1000)
    out = _run(bk, sm.exp, x)
    expected = np.exp(x)
    # relativo puro onde e^x >= 0.1; abaixo disso domina a resolução de f=16:
    # o ulp 2^-16 ≈ 1.5e-5 já é ~4% de e^-8 ≈ 3.4e-4, então vale o limite absoluto
    resolvable = expected >= 0.1
    np.testing.assert_allclose(out[resolvable], expected[resolvable], rtol=1e-3, atol=0.0)
    np.testing.assert_allclose(out[~resolvable], expected[~resolvable], rtol=0.0, atol=1e-4)
    print("✅ exp em [-8, 8] dentro da tolerância")


def test_exp_saturates():
    out = _run(_backend(), sm.exp, [40.0, -40.0])
    assert abs(out[0] / math.exp(16.0) - 1.0) < 1e-2
    assert 0.0 <= out[1] < 1e-4


def test_exp_requires_wide_ring():
    bk = create_backend("oracle", spec=FixedPointSpec(32, 16), seed=0, cohort="narrow", num_clients=1)
    x = bk.input(np.array([1.0]), "C0")
    try:
        sm.exp(x)
    except ValueError:
        return
    raise AssertionError("exp com k < 2f + 32 deveria falhar")


def test_selection_helpers():
    bk = _backend()
    a = np.array([1.0, -2.0, 5.5, 0.0])
    b = np.array([0.5, 3.0, 5.0, -1.0])
    np.testing.assert_allclose(_run(bk, sm.maximum, a, b), np.maximum(a, b), atol=1e-4)
    np.testing.assert_allclose(_run(bk, sm.max_one, a), np.maximum(a, 1.0), atol=1e-4)
    x = np.linspace(-5.0, 5.0, 21)
    np.testing.assert_allclose(_run(bk, lambda v: sm.clamp(v, -2.0, 3.0), x),
                               np.clip(x, -2.0, 3.0), atol=1e-4)


def test_row_max_odd_width():
    rng = np.random.default_rng(2)
    x = rng.uniform(-10, 10, size=(6, 5))
    np.testing.assert_allclose(_run(_backend(), sm.row_max, x), x.max(axis=1), atol=1e-4)


def test_softmax_rows():
    print("🧪 Testando softmax segura...")
    rng = np.random.default_rng(3)
    logits = rng.uniform(-5.0, 5.0, size=(16, 4))
    out = _run(_backend(), sm.softmax, logits)
    np.testing.assert_allclose(out.sum(axis=1), np.ones(16), atol=1e-3)
    np.testing.assert_allclose(out, reference_softmax(logits, axis=1), atol=1e-3)
    print("✅ Linhas somam 1")


def test_clip_rows():
    print("🧪 Testando recorte por amostra...")
    rng = np.random.default_rng(4)
    direction = rng.normal(size=(12, 6))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    norms = np.array([0.1, 0.5, 0.9, 1.5, 3.0, 10.0] * 2)
    g = direction * norms[:, None]
    gamma = 1.0
    out = _run(_backend(), lambda v: sm.clip_rows(v, gamma), g)
    out_norms = np.linalg.norm(out, axis=1)
    assert np.all(out_norms <= gamma * (1 + 1e-3))
    small = norms < gamma
    np.testing.assert_allclose(out[small], g[small], rtol=1e-3, atol=1e-4)
    np.testing.assert_allclose(out_norms[~small], gamma, rtol=1e-3)
    print("✅ Normas ≤ γ(1 + 1e-3)")


def test_clip_rows_rejects_nonpositive_gamma():
    bk = _backend()
    g = bk.input(np.ones((2, 2)), "C0")
    try:
        sm.clip_rows(g, 0.0)
    except ValueError:
        return
    raise AssertionError("γ ≤ 0 deveria falhar")


def test_domain_guards():
    print("🧪 Testando guardas de domínio...")
    bk = _backend()
    try:
        _run(bk, sm.div, [1.0, 2.0], [1.0, 0.0])
    except DomainError:
        pass
    else:
        raise AssertionError("divisão por zero deveria falhar")
    try:
        _run(bk, sm.sqrt, [4.0, -1.0])
    except DomainError:
        pass
    else:
        raise AssertionError("sqrt(-1) deveria falhar")
    guards = [e for e in bk.leakage.entries if e.kind == "guard"]
    assert {e.step for e in guards} == {"div_guard", "sqrt_guard"}
    assert all(e.shape == [] for e in guards)

    unguarded = _backend(domain_guards=False)
    _run(unguarded, sm.div, [1.0], [0.0])
    assert not [e for e in unguarded.leakage.entries if e.kind == "guard"]
    print("✅ Violações detectadas por contagem agregada")


def test_secure_sum():
    bk = _backend()
    parts = [np.full(3, float(i)) for i in range(5)]
    values = [bk.input(p, "C0") for p in parts]
    np.testing.assert_allclose(bk.open(sm.secure_sum(values), "test", "analyst"), np.full(3, 10.0))


def test_rep3_div_and_sqrt():
    bk = _backend("rep3")
    a = np.array([1.0, -6.0, 12.5])
    b = np.array([4.0, 1.5, -0.5])
    np.testing.assert_allclose(_run(bk, sm.div, a, b), a / b, rtol=1e-3, atol=1e-4)
    np.testing.assert_allclose(_run(bk, sm.sqrt, np.array([0.25, 9.0, 700.0])),
                               [0.5, 3.0, math.sqrt(700.0)], rtol=1e-3)


if __name__ == "__main__":
    print("🚀 TESTE DA MATEMÁTICA SEGURA")
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

"""
Testes da fatoração BandMF/BSR: coeficientes, sensibilidade e fluxo de ruído
"""

import math
import sys
import tempfile
from pathlib import Path

import numpy as np

# Adicionar diretório do projeto ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.mpc.abb import create_backend
from src.mpc.numerics import FixedPointSpec
from src.privacy.bandmf import (SETTING_1, SETTING_2, ParticipationSchema, ScheduleError,
                                WorkloadParams, binom_half, bsr_coeffs, correlated_noise_stream,
                                dense_toeplitz, inverse_coeffs, inverse_row_norm, load_coeffs,
                                participation_trace, sample_participations, save_coeffs,
                                sensitivity, setting_params, toeplitz_apply, toeplitz_inv_apply)
from src.privacy.dpcore import gs_protocol


def _dense_square_root(workload: np.ndarray) -> np.ndarray:
    """Raiz triangular inferior com diagonal 1 pela recorrência elemento a elemento."""
    n = workload.shape[0]
    root = np.zeros_like(workload)
    for i in range(n):
        root[i, i] = 1.0
        for j in range(i - 1, -1, -1):
            partial = sum(root[i, k] * root[k, j] for k in range(j + 1, i))
            root[i, j] = (workload[i, j] - partial) / 2.0
    return root


def _momentum_workload(beta: float, steps: int) -> np.ndarray:
    workload = np.zeros((steps, steps))
    for i in range(steps):
        for j in range(i + 1):
            workload[i, j] = (1 - beta ** (i - j + 1)) / (1 - beta)
    return workload


def test_binomial_sequence():
    assert binom_half(0) == 1.0
    assert binom_half(1) == 0.5
    assert abs(binom_half(2) - 0.375) < 1e-15
    assert abs(binom_half(3) - 0.3125) < 1e-15


def test_leading_coefficient_is_one():
    for params in (SETTING_1, SETTING_2):
        assert bsr_coeffs(params, 5).c[0] == 1.0


def test_full_band_squares_to_prefix_sum():
    print("🧪 Testando C·C = A (setting 1)...")
    for steps in (8, 32, 64):
        c = bsr_coeffs(setting_params(1, steps), steps).c
        dense = dense_toeplitz(c, steps)
        np.testing.assert_allclose(dense @ dense, np.tril(np.ones((steps, steps))), atol=1e-9)
    print("✅ Raiz da soma de prefixos em T ∈ {8, 32, 64}")


def test_momentum_setting_matches_dense_root():
    print("🧪 Testando setting 2 contra a raiz densa...")
    steps = 24
    c = bsr_coeffs(setting_params(2, steps), steps).c
    reference = _dense_square_root(_momentum_workload(0.9, steps))
    np.testing.assert_allclose(dense_toeplitz(c, steps), reference, atol=1e-9)
    print("✅ Coeficientes coincidem")


def test_sensitivity_brute_force():
    """Todos os (p, κ, b) viáveis com T <= 16."""
    print("🧪 Testando sensibilidade contra força bruta...")
    checked = 0
    for steps in range(1, 17):
        for p in range(1, steps + 1):
            c = bsr_coeffs(WorkloadParams(1.0, 0.9), p).c
            dense = dense_toeplitz(c, steps)
            for b in range(1, steps + 1):
                for kappa in range(1, steps + 1):
                    if 1 + (kappa - 1) * b > steps:
                        continue
                    columns = [j * b for j in range(kappa)]
                    expected = np.linalg.norm(dense[:, columns].sum(axis=1))
                    got = sensitivity(c, ParticipationSchema(kappa, b), steps)
                    assert abs(got - expected) < 1e-12, (steps, p, b, kappa)
                    checked += 1
    print(f"✅ {checked} combinações conferidas")


def test_disjoint_participations_shortcut():
    for p, kappa, b in ((1, 5, 3), (4, 3, 4), (3, 2, 7)):
        steps = (kappa - 1) * b + p
        c = bsr_coeffs(SETTING_2, p).c
        expected = math.sqrt(kappa) * np.linalg.norm(c)
        assert abs(sensitivity(c, ParticipationSchema(kappa, b), steps) - expected) < 1e-12


def test_stream_apply_and_inverse():
    steps = 64
    c = bsr_coeffs(setting_params(1, steps), 10).c
    rng = np.random.default_rng(0)
    stream = rng.normal(size=(steps, 3))
    dense = dense_toeplitz(c, steps)
    np.testing.assert_allclose(toeplitz_apply(c, steps, stream), dense @ stream, atol=1e-9)
    np.testing.assert_allclose(toeplitz_inv_apply(c, steps, stream), np.linalg.solve(dense, stream), atol=1e-9)
    np.testing.assert_allclose(inverse_coeffs(c, steps), np.linalg.inv(dense)[:, 0], atol=1e-9)


def _dense_stream(bk, steps: int, width: int, c, post_scale: float, **stream_args):
    table = gs_protocol(bk, steps, width, scale=1.0)
    raw = bk.open(table.values, "test", "analyst")
    stream = correlated_noise_stream(bk, table, c, post_scale=post_scale, **stream_args)
    expected = post_scale * np.linalg.solve(dense_toeplitz(c, steps), raw)
    return stream, expected


def test_correlated_stream_matches_dense_inverse():
    print("🧪 Testando fluxo de ruído correlacionado...")
    steps, width, post_scale = 32, 4, 0.25
    c = bsr_coeffs(setting_params(1, steps), steps).c
    inverse = np.linalg.inv(dense_toeplitz(c, steps))

    # f = 8 com 48 bits extras: resolução suficiente para 1e-6
    fine = FixedPointSpec(total_bits=64, frac_bits=8)
    bk = create_backend("oracle", spec=fine, seed=4, cohort="noise")
    bk.leakage.authorize("test", "*")
    stream, expected = _dense_stream(bk, steps, width, c, post_scale, extra_bits=48, window_bits=16)
    before = bk.cost.snapshot()
    secret_rows = [stream.row(t) for t in range(steps)]
    delta = bk.cost.delta(before)
    assert delta.total_bytes() == 0 and delta.rounds == 0
    assert delta.preprocessing_rounds >= steps
    assert all(r.frac_bits == 8 + 48 for r in secret_rows)
    rows = np.stack([bk.open(r, "test", "analyst") for r in secret_rows])
    np.testing.assert_allclose(rows, expected, atol=1e-6)

    # escala padrão (f = 16, 32 bits extras)
    bk = create_backend("oracle", seed=4, cohort="noise")
    bk.leakage.authorize("test", "*")
    stream, expected = _dense_stream(bk, steps, width, c, post_scale)
    rows = np.stack([bk.open(stream.row(t), "test", "analyst") for t in range(steps)])
    np.testing.assert_allclose(rows, expected, atol=1e-5)

    for t in (0, 5, 31):
        assert abs(stream.row_norm(t) - float(np.sum(inverse[t] ** 2))) < 1e-9
        assert abs(inverse_row_norm(c, t, squared=False) - float(np.linalg.norm(inverse[t]))) < 1e-9
    try:
        stream.row(steps)
    except IndexError:
        print("✅ Linhas de Ω⁻¹·tabela dentro de 1e-6")
        return
    raise AssertionError("passo fora da tabela deveria falhar")


def test_stream_keeps_band_window():
    print("🧪 Testando janela do fluxo de ruído...")
    steps, width = 64, 3
    c = bsr_coeffs(setting_params(1, steps), 2).c
    bk = create_backend("oracle", seed=1, cohort="noise")
    table = gs_protocol(bk, steps, width, scale=1.0)
    stream = correlated_noise_stream(bk, table, c)

    keys = []
    original_index = bk.index

    def recording_index(value, key):
        if value is table.values:
            keys.append(key)
        return original_index(value, key)

    bk.index = recording_index
    for t in range(steps):
        stream.row(t)
        assert len(stream.window) <= 1
    assert keys == list(range(steps))
    assert stream.window.maxlen == 1

    fresh = correlated_noise_stream(bk, table, c)
    try:
        fresh.row(3)
    except ValueError:
        print("✅ Uma linha da tabela por passo e janela de p-1 = 1 linha")
        return
    raise AssertionError("fluxo fora de ordem deveria falhar")


def test_stream_on_rep3_shares():
    steps, width, p = 8, 2, 3
    c = bsr_coeffs(setting_params(2, steps), p).c
    bk = create_backend("rep3", seed=2, cohort="noise")
    bk.leakage.authorize("test", "*")
    stream, expected = _dense_stream(bk, steps, width, c, post_scale=0.5)
    before = bk.cost.snapshot()
    secret_rows = [stream.row(t) for t in range(steps)]
    delta = bk.cost.delta(before)
    assert delta.total_bytes() == 0 and delta.rounds == 0
    assert sum(delta.preprocessing_bytes.values()) > 0
    assert stream.window.maxlen == p - 1
    rows = np.stack([bk.open(r, "test", "analyst") for r in secret_rows])
    np.testing.assert_allclose(rows, expected, atol=1e-5)


def test_schedule_errors():
    for action in (lambda: ParticipationSchema(3, 5).validate(10),
                   lambda: ParticipationSchema(0, 1).validate(10),
                   lambda: bsr_coeffs(SETTING_1, 0),
                   lambda: bsr_coeffs(setting_params(1, 4), 5),
                   lambda: toeplitz_apply([0.0, 1.0], 2, np.zeros((2, 1)))):
        try:
            action()
        except ScheduleError:
            continue
        raise AssertionError("esquema inválido deveria falhar")
    try:
        setting_params(3)
    except ValueError:
        return
    raise AssertionError("setting desconhecido deveria falhar")


def test_participation_trace():
    trace = participation_trace(4, 3)
    np.testing.assert_array_equal(trace, [0, 1, 2, 3] * 3)
    batch_of_sample = np.repeat(np.arange(4), 2)
    steps = sample_participations(trace, batch_of_sample)
    assert steps[0] == [0, 4, 8]
    assert steps[7] == [3, 7, 11]
    # κ = épocas e b = número de lotes
    gaps = {s[i + 1] - s[i] for s in steps.values() for i in range(len(s) - 1)}
    assert gaps == {4}


def test_coeffs_persistence():
    coeffs = bsr_coeffs(SETTING_2, 7)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bsr" / "coeffs.txt"
        save_coeffs(str(path), coeffs)
        loaded = load_coeffs(str(path))
    assert loaded.p == 7
    np.testing.assert_array_equal(loaded.c, coeffs.c)
    np.testing.assert_array_equal(coeffs.padded(10)[7:], np.zeros(3))


if __name__ == "__main__":
    print("🚀 TESTE DA FATORAÇÃO EM BANDA")
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

"""
Testes da contabilidade RDP, calibração de σ e do protocolo GS
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import logsumexp

# Adicionar diretório do projeto ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.mpc.abb import create_backend
from src.privacy.dpcore import (CalibrationCache, CalibrationError, PrivacyParams,
                                RdpAccountant, account, accountant_for_variant,
                                calibrate_sigma, classical_gaussian_sigma,
                                compose_and_convert, gs_protocol, rdp_gaussian,
                                rdp_subsampled_gaussian)


def _integrated_rdp(alpha: int, sigma: float, q: float) -> float:
    """
    ε_α por integração numérica de E_{z~N(0,σ²)}[((1-q) + q·e^{(2z-1)/(2σ²)})^α].
    """
    dz = 1e-3
    z = np.arange(-50.0, 150.0, dz)
    log_ratio = np.logaddexp(math.log1p(-q), math.log(q) + (2 * z - 1) / (2 * sigma ** 2))
    log_density = -z ** 2 / (2 * sigma ** 2) - 0.5 * math.log(2 * math.pi * sigma ** 2)
    log_integrand = alpha * log_ratio + log_density
    # trapézio em espaço log
    log_a = logsumexp(np.concatenate([log_integrand[:1] - math.log(2), log_integrand[1:-1],
                                      log_integrand[-1:] - math.log(2)])) + math.log(dz)
    return float(log_a) / (alpha - 1)


def test_gaussian_rdp_closed_form():
    assert rdp_gaussian(2.0, 4.0) == 2.0 / 32.0
    value = rdp_subsampled_gaussian(2, 4.0, 1.0)
    assert 0.0625 <= value <= 0.125
    assert rdp_gaussian(3.0, 0.0) == math.inf


def test_subsampled_edge_cases():
    assert rdp_subsampled_gaussian(4, 1.0, 0.0) == 0.0
    assert rdp_subsampled_gaussian(4, 0.0, 0.1) == math.inf
    assert rdp_subsampled_gaussian(4, 2.0, 1.0) == rdp_gaussian(4, 2.0)
    try:
        rdp_subsampled_gaussian(1.5, 1.0, 0.5)
    except ValueError:
        return
    raise AssertionError("ordem fracionária com q < 1 deveria falhar")


def test_matches_numerical_integration():
    """Acordo com a integração numérica em (σ=1, q=0.01, T=10^4, δ=10^-5)."""
    print("🧪 Testando contador contra integração numérica...")
    sigma, q, steps, delta = 1.0, 0.01, 10_000, 1e-5
    orders = list(range(2, 65))
    reference_rdp = [_integrated_rdp(a, sigma, q) for a in orders]
    reference = compose_and_convert(orders, reference_rdp, steps, delta)
    ours = account(sigma, q, steps, delta)
    assert abs(ours - reference) / reference < 0.05, f"{ours} vs {reference}"
    print(f"✅ ε={ours:.4f} (referência {reference:.4f})")


def test_composition_is_linear_in_steps():
    one = account(2.0, 0.1, 1, 1e-5)
    many = account(2.0, 0.1, 100, 1e-5)
    assert many > one
    assert math.isclose(compose_and_convert([2.0, 4.0], [0.5, 1.0], 0, 1e-5), math.log(1e5) / 3.0)


def test_calibration_roundtrip():
    print("🧪 Testando calibração de σ...")
    sigma = calibrate_sigma(8.0, 1e-5, 0.05, 400)
    eps = account(sigma, 0.05, 400, 1e-5)
    assert 0.99 * 8.0 <= eps <= 8.0
    assert abs(eps - 8.0) / 8.0 < 0.01
    print(f"✅ σ={sigma:.4f} → ε={eps:.4f}")


def test_single_release_matches_classical_gaussian():
    epsilon, delta = 0.5, 1e-5
    classical = classical_gaussian_sigma(epsilon, delta)
    assert (classical * epsilon) ** 2 >= 2 * math.log(1.25 / delta) - 1e-9
    calibrated = calibrate_sigma(epsilon, delta, 1.0, 1)
    assert abs(calibrated - classical) / classical < 0.05


def test_unreachable_target_raises():
    try:
        calibrate_sigma(0.01, 1e-5, 1.0, 10_000)
    except CalibrationError:
        return
    raise AssertionError("ε inalcançável deveria falhar")


def test_calibration_cache_reused():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "cache.json"
        first = calibrate_sigma(4.0, 1e-5, 1.0, 1, mechanism="bandmf", cache_path=str(path))
        entries = json.loads(path.read_text(encoding="utf-8"))
        key = CalibrationCache.key("bandmf", 4.0, 1e-5, 1.0, 1)
        assert entries == {key: first}

        # valor adulterado no cache é devolvido sem recalcular
        entries[key] = 123.0
        path.write_text(json.dumps(entries), encoding="utf-8")
        assert calibrate_sigma(4.0, 1e-5, 1.0, 1, mechanism="bandmf", cache_path=str(path)) == 123.0


def test_rdp_accountant_record():
    accountant = RdpAccountant(sigma=1.1, q=0.01, steps=1000, delta=1e-5, mechanism="subsampled_gaussian")
    record = accountant.to_dict()
    assert set(record) == {"sigma", "q", "steps", "delta", "mechanism", "epsilon"}
    assert record["epsilon"] == accountant.epsilon() == account(1.1, 0.01, 1000, 1e-5)


def test_accountant_for_variant():
    assert accountant_for_variant("GShuff", 2560, 128, 20) == (0.05, 400, "subsampled_gaussian")
    assert accountant_for_variant("GBMF", 2560, 128, 20) == (1.0, 1, "bandmf")
    assert accountant_for_variant("GLBMF", 2560, 128, 20) == (1.0, 1, "bandmf")
    assert accountant_for_variant("LdpG", 2560, 128, 20) == (1.0, 1, "ldp")
    assert accountant_for_variant("LdpGL", 2560, 128, 20) == (1.0, 20, "ldp")
    try:
        accountant_for_variant("Plain", 2560, 128, 20)
    except ValueError:
        return
    raise AssertionError("Plain não tem contabilidade")


def test_privacy_params_validation():
    PrivacyParams().validate(2560)
    for kwargs in ({"epsilon": 0.0}, {"delta": 1.0}, {"clip_gamma": -1.0}, {"sigma": -0.5}):
        try:
            PrivacyParams(**kwargs).validate()
        except ValueError:
            continue
        raise AssertionError(f"PrivacyParams({kwargs}) deveria falhar")


def test_gs_table_distribution():
    """Tabela GS reconstruída segue N(0, 1.5·scale²)."""
    print("🧪 Testando protocolo GS...")
    bk = create_backend("oracle", seed=21, cohort="gs")
    bk.leakage.authorize("test", "*")
    scale = 2.0
    table = gs_protocol(bk, 1000, 100, scale)
    assert table.shape == (1000, 100) and table.scale == scale
    values = bk.open(table.values, "test", "analyst").ravel()
    std = math.sqrt(1.5) * scale
    result = stats.kstest(values, "norm", args=(0.0, std))
    assert result.pvalue > 0.01
    assert abs(values.mean()) < 3 * std / math.sqrt(values.size)
    print(f"✅ KS p={result.pvalue:.3f}")


def test_gs_rejects_bad_table():
    bk = create_backend("oracle", seed=0, cohort="gs")
    for args in ((0, 4, 1.0), (4, 4, -1.0)):
        try:
            gs_protocol(bk, *args)
        except ValueError:
            continue
        raise AssertionError(f"gs_protocol{args} deveria falhar")


if __name__ == "__main__":
    print("🚀 TESTE DA CONTABILIDADE DE PRIVACIDADE")
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

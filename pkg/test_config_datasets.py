"""
Testes da configuração INI e dos datasets sintéticos particionados
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

# Adicionar diretório do projeto ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.vfl.config import (ConfigError, ProtocolConfig, apply_overrides, config_from_mapping,
                            create_protocol_config, load_config)
from src.vfl.datasets import DatasetSpec, create_dataset, load_dataset, write_dataset


def test_load_shipped_configs():
    smoke = load_config(str(project_root / "configs" / "smoke.ini"))
    assert smoke.variant == "GBMF" and smoke.epochs == 2 and smoke.batch_size == 16
    assert smoke.privacy.delta == 1e-4 and smoke.privacy.sigma is None
    assert smoke.model.hidden == 8 and smoke.data.samples == 128
    smoke.validate()

    default = load_config(str(project_root / "configs" / "default.ini"))
    default.validate()
    assert default.batch_size == 128 and default.epochs == 20


def test_all_problems_reported_together():
    print("🧪 Testando erros de configuração...")
    mapping = {"run": {"variant": "GBMF", "colour": "blue", "epochs": "many"},
               "gpu": {"enabled": "true"},
               "privacy": {"sigma": "-1"}}
    try:
        config_from_mapping(mapping)
    except ConfigError as e:
        assert len(e.problems) == 3
        assert any("[run] colour" in p for p in e.problems)
        assert any("[gpu]" in p for p in e.problems)
    else:
        raise AssertionError("chaves desconhecidas deveriam falhar")

    invalid = create_protocol_config("GBMF", overrides={"privacy.sigma": -1.0, "model.hidden_layers": 3},
                                     epochs=0, batch_size=7)
    try:
        invalid.validate(num_samples=64)
    except ConfigError as e:
        assert len(e.problems) >= 4
        print(f"✅ {len(e.problems)} problemas reunidos em um único erro")
        return
    raise AssertionError("configuração inválida deveria falhar")


def test_epsilon_inf_requires_sigma():
    config = create_protocol_config("GShuff", overrides={"privacy.epsilon": float("inf")})
    try:
        config.validate(num_samples=2560)
    except ConfigError as e:
        assert any("sigma" in p for p in e.problems)
        return
    raise AssertionError("ε = inf sem σ deveria falhar")


def test_overrides_and_ini_roundtrip():
    config = apply_overrides(ProtocolConfig(), {"variant": "GLBMF", "setting": 2, "band": 5,
                                                "privacy.sigma": 0.7, "numerics.frac_bits": 20,
                                                "mpc.hybrid_trust": False, "epochs": None})
    assert config.variant == "GLBMF" and config.setting == 2 and config.band == 5
    assert config.privacy.sigma == 0.7 and config.numerics.frac_bits == 20
    assert config.mpc.hybrid_trust is False and config.epochs == 20
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "echo.ini"
        path.write_text(config.to_ini(), encoding="utf-8")
        assert load_config(str(path)) == config


def test_derived_schedule():
    config = create_protocol_config("GBMF", epochs=20, batch_size=128)
    assert config.num_batches(2560) == 20
    assert config.total_steps(2560) == 400
    schema = config.schema(2560)
    assert (schema.kappa, schema.b) == (20, 20)
    assert config.band_width(2560) == 20
    assert create_protocol_config("GBMF", band=3).band_width(2560) == 3


def test_dataset_partition_and_determinism():
    print("🧪 Testando dataset particionado...")
    spec = DatasetSpec(samples=200, features=7, clients=3, classes=3, seed=5)
    first, second = create_dataset(spec), create_dataset(spec)
    assert first.feature_dims == [3, 2, 2]
    assert first.num_samples == 200 and len(first.test_labels) == 40
    assert first.label_client == 2
    for a, b in zip(first.train_parts, second.train_parts):
        np.testing.assert_array_equal(a, b)
    assert set(np.unique(first.train_labels)) <= {0, 1, 2}
    other = create_dataset(DatasetSpec(samples=200, features=7, clients=3, classes=3, seed=6))
    assert not np.array_equal(first.train_parts[0], other.train_parts[0])
    print("✅ Colunas disjuntas e geração determinística")


def test_linear_teacher_margin():
    dataset = create_dataset(DatasetSpec(samples=500, features=6, classes=2, margin=0.5, seed=1))
    stats = dataset.get_statistics()
    assert stats["train_samples"] == 500
    assert min(stats["class_counts"]) > 0


def test_gaussian_blobs():
    dataset = create_dataset(DatasetSpec(samples=300, features=4, classes=4, generator="gaussian-blobs"))
    assert dataset.get_statistics()["class_counts"] != [300, 0, 0, 0]
    try:
        create_dataset(DatasetSpec(generator="spirals"))
    except ValueError:
        return
    raise AssertionError("gerador desconhecido deveria falhar")


def test_write_and_load_roundtrip():
    dataset = create_dataset(DatasetSpec(samples=40, features=5, clients=2, seed=2))
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_dataset(dataset, tmp)
        assert set(paths) == {"client_0", "client_1", "labels", "manifest"}
        header = Path(paths["client_1"]).read_text(encoding="utf-8").splitlines()[0]
        assert header == "x3,x4"
        loaded = load_dataset(tmp)
    assert loaded.spec == dataset.spec
    np.testing.assert_array_equal(loaded.train_labels, dataset.train_labels)
    np.testing.assert_array_equal(loaded.test_labels, dataset.test_labels)
    for a, b in zip(loaded.train_parts, dataset.train_parts):
        np.testing.assert_allclose(a, b, rtol=1e-9)


if __name__ == "__main__":
    print("🚀 TESTE DE CONFIGURAÇÃO E DATASETS")
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

"""
Datasets: Conjuntos sintéticos particionados verticalmente

Cada cliente recebe uma fatia disjunta das colunas; o último cliente
também guarda os rótulos. As linhas já estão alinhadas entre clientes.
"""

import json
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

GENERATORS = ("linear-teacher", "gaussian-blobs")
FLOAT_FORMAT = "%.10g"


@dataclass
class DatasetSpec:
    """Especificação do conjunto sintético."""
    samples: int = 2560              # M (treino)
    features: int = 8                # d_x total
    clients: int = 2                 # N
    classes: int = 2                 # S
    generator: str = "linear-teacher"
    seed: int = 0
    test_fraction: float = 0.2       # M_test = ceil(M * test_fraction)
    margin: float = 0.05             # rejeição por margem (linear-teacher)
    separation: float = 3.0          # distância entre centros (gaussian-blobs)

    def validate(self) -> List[str]:
        problems = []
        if self.samples < 1:
            problems.append(f"data.samples deve ser >= 1 (recebido {self.samples})")
        if self.clients < 1:
            problems.append(f"data.clients deve ser >= 1 (recebido {self.clients})")
        if self.features < self.clients:
            problems.append(f"data.features ({self.features}) menor que data.clients ({self.clients})")
        if self.classes < 2:
            problems.append(f"data.classes deve ser >= 2 (recebido {self.classes})")
        if self.generator not in GENERATORS:
            problems.append(f"data.generator desconhecido: '{self.generator}'")
        if not 0 < self.test_fraction < 1:
            problems.append(f"data.test_fraction deve estar em (0, 1) (recebido {self.test_fraction})")
        if self.margin < 0:
            problems.append(f"data.margin não pode ser negativo (recebido {self.margin})")
        return problems

    @property
    def test_samples(self) -> int:
        return int(math.ceil(self.samples * self.test_fraction))

    def column_split(self) -> List[np.ndarray]:
        """Índices de colunas de cada cliente (partição contígua)."""
        return np.array_split(np.arange(self.features), self.clients)


@dataclass
class VerticalDataset:
    """Treino e teste já particionados por cliente."""
    spec: DatasetSpec
    train_parts: List[np.ndarray]
    train_labels: np.ndarray
    test_parts: List[np.ndarray]
    test_labels: np.ndarray

    @property
    def num_samples(self) -> int:
        return len(self.train_labels)

    @property
    def num_clients(self) -> int:
        return len(self.train_parts)

    @property
    def feature_dims(self) -> List[int]:
        return [p.shape[1] for p in self.train_parts]

    @property
    def label_client(self) -> int:
        return self.num_clients - 1

    def get_statistics(self) -> Dict:
        counts = np.bincount(self.train_labels, minlength=self.spec.classes)
        return {
            "train_samples": self.num_samples,
            "test_samples": len(self.test_labels),
            "clients": self.num_clients,
            "feature_dims": self.feature_dims,
            "class_counts": counts.tolist(),
        }


def _linear_teacher(spec: DatasetSpec, total: int, rng: np.random.Generator):
    teacher = rng.normal(size=(spec.features, spec.classes))
    scale = np.sqrt(spec.features)
    X_kept, y_kept = [], []
    kept = 0
    while kept < total:
        X = rng.normal(size=(2 * total, spec.features))
        logits = X @ teacher / scale
        top2 = np.sort(logits, axis=1)[:, -2:]
        ok = (top2[:, 1] - top2[:, 0]) >= spec.margin
        X_kept.append(X[ok])
        y_kept.append(np.argmax(logits[ok], axis=1))
        kept += int(ok.sum())
    return np.concatenate(X_kept)[:total], np.concatenate(y_kept)[:total]


def _gaussian_blobs(spec: DatasetSpec, total: int, rng: np.random.Generator):
    centers = rng.normal(size=(spec.classes, spec.features))
    centers *= spec.separation / (2.0 * np.linalg.norm(centers, axis=1, keepdims=True))
    y = rng.integers(0, spec.classes, size=total)
    X = centers[y] + rng.normal(size=(total, spec.features))
    return X, y


def generate_dataset(spec: DatasetSpec) -> VerticalDataset:
    """
    Gera treino (M) e teste (ceil(M·fração)) e particiona as colunas.

    Args:
        spec: especificação validada

    Returns:
        VerticalDataset
    """
    problems = spec.validate()
    if problems:
        raise ValueError("; ".join(problems))
    rng = np.random.default_rng([spec.seed, 31337])
    total = spec.samples + spec.test_samples
    if spec.generator == "linear-teacher":
        X, y = _linear_teacher(spec, total, rng)
    else:
        X, y = _gaussian_blobs(spec, total, rng)

    split = spec.column_split()
    train, test = X[:spec.samples], X[spec.samples:]
    dataset = VerticalDataset(
        spec=spec,
        train_parts=[train[:, cols] for cols in split],
        train_labels=y[:spec.samples].astype(np.int64),
        test_parts=[test[:, cols] for cols in split],
        test_labels=y[spec.samples:].astype(np.int64),
    )
    logger.info(f"📊 Dataset '{spec.generator}': M={spec.samples}, teste={spec.test_samples}, "
                f"N={spec.clients}, colunas={dataset.feature_dims}")
    return dataset


def create_dataset(spec: Optional[DatasetSpec] = None, **kwargs) -> VerticalDataset:
    """Factory function para criar um dataset sintético."""
    return generate_dataset(spec or DatasetSpec(**kwargs))


def write_dataset(dataset: VerticalDataset, out_dir: str) -> Dict[str, str]:
    """
    Grava client_{i}.csv, labels.csv e dataset.json (sem carimbo de tempo).

    Returns:
        Caminhos gravados por nome lógico
    """
    output = Path(out_dir)
    output.mkdir(parents=True, exist_ok=True)
    split = dataset.spec.column_split()
    n_train = dataset.num_samples
    paths = {}

    for i, cols in enumerate(split):
        rows = np.vstack([dataset.train_parts[i], dataset.test_parts[i]])
        frame = pd.DataFrame(rows, columns=[f"x{c}" for c in cols])
        path = output / f"client_{i}.csv"
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        paths[f"client_{i}"] = str(path)

    labels = pd.DataFrame({
        "label": np.concatenate([dataset.train_labels, dataset.test_labels]),
        "split": ["train"] * n_train + ["test"] * len(dataset.test_labels),
    })
    labels_path = output / "labels.csv"
    labels.to_csv(labels_path, index=False, lineterminator="\n")
    paths["labels"] = str(labels_path)

    manifest = {
        "spec": asdict(dataset.spec),
        "train_samples": n_train,
        "test_samples": len(dataset.test_labels),
        "columns": [[int(c) for c in cols] for cols in split],
        "label_client": dataset.label_client,
        "files": sorted(Path(p).name for p in paths.values()),
    }
    manifest_path = output / "dataset.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    paths["manifest"] = str(manifest_path)

    logger.info(f"💾 Dataset salvo em {output}")
    return paths


def load_dataset(data_dir: str) -> VerticalDataset:
    """Lê um diretório gravado por write_dataset."""
    source = Path(data_dir)
    with open(source / "dataset.json", "r", encoding="utf-8") as f:
        manifest = json.load(f)
    spec = DatasetSpec(**manifest["spec"])
    labels = pd.read_csv(source / "labels.csv")
    train_mask = (labels["split"] == "train").to_numpy()
    parts = [pd.read_csv(source / f"client_{i}.csv").to_numpy(dtype=np.float64)
             for i in range(len(manifest["columns"]))]
    y = labels["label"].to_numpy(dtype=np.int64)
    logger.info(f"📂 Dataset carregado de {source}: {int(train_mask.sum())} amostras de treino")
    return VerticalDataset(
        spec=spec,
        train_parts=[p[train_mask] for p in parts],
        train_labels=y[train_mask],
        test_parts=[p[~train_mask] for p in parts],
        test_labels=y[~train_mask],
    )

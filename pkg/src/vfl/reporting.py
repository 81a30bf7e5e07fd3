"""
Reporting: Arquivos de uma execução e relatório agregado de varreduras

Cada execução grava em seu diretório:
- results.jsonl   (épocas, limites por passo, resumo)
- leakage.jsonl   (trilha de aberturas; vazio fora do MPC)
- cost.json       (ledger de custo e custo por passo)
- transcript.jsonl (apenas rep3)
- config.ini      (eco da configuração resolvida)
- model.ckpt      (parâmetros finais)

O relatório lê todos os resumos abaixo de uma raiz, agrega média ± erro
padrão por (variante, ε) e desenha acurácia x ε e bytes por passo.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List

import numpy as np
import pandas as pd

try:
    from .metrics import SUMMARY_KEYS
    from .models import model_arrays, save_checkpoint
    from .protocols import RunResult
except ImportError:
    # Para execução direta
    from vfl.metrics import SUMMARY_KEYS
    from vfl.models import model_arrays, save_checkpoint
    from vfl.protocols import RunResult

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
REPORT_FILE = "report.txt"
TABLE_FILE = "summary.csv"
ACCURACY_PLOT = "accuracy_vs_epsilon.png"
COST_PLOT = "bytes_per_step.png"


def _write_jsonl(path: Path, records: Iterable[Dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def write_run_outputs(result: RunResult, out_dir: str) -> Dict[str, str]:
    """
    Grava os artefatos de uma execução (sem carimbo de tempo).

    Returns:
        Caminhos gravados por nome lógico
    """
    output = Path(out_dir)
    output.mkdir(parents=True, exist_ok=True)
    paths = {}

    results_path = output / RESULTS_FILE
    _write_jsonl(results_path, result.metrics.to_records())
    paths["results"] = str(results_path)

    leakage_path = output / "leakage.jsonl"
    if result.backend is not None:
        result.backend.leakage.write_jsonl(str(leakage_path))
    else:
        leakage_path.write_text("", encoding="utf-8")
    paths["leakage"] = str(leakage_path)

    cost = {
        "ledger": result.ledger.to_dict(),
        "steps": [s.to_dict() for s in result.metrics.step_costs],
    }
    cost_path = output / "cost.json"
    with open(cost_path, "w", encoding="utf-8") as f:
        json.dump(cost, f, indent=2, sort_keys=True)
    paths["cost"] = str(cost_path)

    network = getattr(result.backend, "network", None)
    if network is not None and result.config.mpc.record_transcript:
        transcript_path = output / "transcript.jsonl"
        network.write_transcript(str(transcript_path))
        paths["transcript"] = str(transcript_path)

    config_path = output / "config.ini"
    config_path.write_text(result.config.to_ini(), encoding="utf-8")
    paths["config"] = str(config_path)

    checkpoint_path = output / "model.ckpt"
    save_checkpoint(str(checkpoint_path), model_arrays(result.global_model, result.local_models))
    paths["checkpoint"] = str(checkpoint_path)

    logger.info(f"💾 Resultados de {result.config.variant} salvos em {output}")
    return paths


def read_results(path: str) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _as_float(value: Any) -> float:
    return float(value) if value is not None else float("nan")


def load_summaries(root: str) -> pd.DataFrame:
    """Um registro por execução encontrada abaixo de `root`."""
    rows = []
    for path in sorted(Path(root).rglob(RESULTS_FILE)):
        for record in read_results(str(path)):
            if record.get("type") == "summary":
                record = dict(record, run_dir=str(path.parent))
                rows.append(record)
    if not rows:
        logger.warning(f"⚠️ Nenhum resumo encontrado em {root}")
        return pd.DataFrame(columns=list(SUMMARY_KEYS) + ["seed", "bytes_per_step", "run_dir"])
    frame = pd.DataFrame(rows)
    for column in ("epsilon_target", "epsilon_accounted"):
        frame[column] = frame[column].map(_as_float)
    logger.info(f"📊 {len(frame)} execuções carregadas de {root}")
    return frame


def aggregate(frame: pd.DataFrame) -> pd.DataFrame:
    """Média e erro padrão da acurácia por (variante, ε); custos médios."""
    if frame.empty:
        return pd.DataFrame()
    grouped = frame.groupby(["variant", "epsilon_target"], dropna=False)
    table = grouped.agg(
        runs=("final_accuracy", "size"),
        accuracy_mean=("final_accuracy", "mean"),
        accuracy_se=("final_accuracy", "sem"),
        epsilon_accounted=("epsilon_accounted", "max"),
        bytes_per_step=("bytes_per_step", "mean"),
        walltime_lan_est=("walltime_lan_est", "mean"),
        walltime_wan_est=("walltime_wan_est", "mean"),
    ).reset_index()
    table["accuracy_se"] = table["accuracy_se"].fillna(0.0)
    return table.sort_values(["variant", "epsilon_target"]).reset_index(drop=True)


def format_report(table: pd.DataFrame) -> str:
    lines = ["RELATÓRIO DE VARREDURA", "=" * 60, ""]
    if table.empty:
        lines.append("Nenhuma execução encontrada.")
        return "\n".join(lines) + "\n"
    for variant, rows in table.groupby("variant", sort=True):
        lines.append(f"{variant}:")
        for _, row in rows.iterrows():
            lines.append(f"  ε={row['epsilon_target']:<6g} acurácia={row['accuracy_mean']:.4f} "
                         f"± {row['accuracy_se']:.4f} (n={int(row['runs'])}), "
                         f"bytes/passo={row['bytes_per_step']:.0f}")
        lines.append("")
    return "\n".join(lines)


def plot_accuracy(frame: pd.DataFrame, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import seaborn as sns

    finite = frame[np.isfinite(frame["epsilon_target"])]
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    sns.lineplot(data=finite, x="epsilon_target", y="final_accuracy", hue="variant",
                 marker="o", errorbar="se", ax=ax)
    ax.set_xlabel("ε")
    ax.set_ylabel("Acurácia de teste")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_costs(frame: pd.DataFrame, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import seaborn as sns

    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    sns.barplot(data=frame, x="variant", y="bytes_per_step", errorbar=None, ax=ax)
    ax.set_yscale("log")
    ax.set_xlabel("Variante")
    ax.set_ylabel("Bytes por passo")
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(root: str, out_dir: str, plots: bool = True) -> Dict[str, str]:
    """
    Agrega os resumos abaixo de `root` e grava tabela, texto e gráficos.

    Returns:
        Caminhos gravados por nome lógico
    """
    frame = load_summaries(root)
    table = aggregate(frame)
    output = Path(out_dir)
    output.mkdir(parents=True, exist_ok=True)
    paths = {}

    table_path = output / TABLE_FILE
    table.to_csv(table_path, index=False, float_format="%.6g", lineterminator="\n")
    paths["table"] = str(table_path)

    report_path = output / REPORT_FILE
    report_path.write_text(format_report(table), encoding="utf-8")
    paths["report"] = str(report_path)

    if plots and not frame.empty:
        plot_accuracy(frame, str(output / ACCURACY_PLOT))
        plot_costs(frame, str(output / COST_PLOT))
        paths["accuracy_plot"] = str(output / ACCURACY_PLOT)
        paths["cost_plot"] = str(output / COST_PLOT)

    logger.info(f"📝 Relatório gravado em {output}")
    return paths

#!/usr/bin/env python3
"""
Script de experimentos do VFL com MPC + DP.

Verbos:
  gen-data   gera o dataset sintético particionado (um CSV por cliente)
  run        executa uma variante e grava resultados e ledgers
  calibrate  calibra σ para (ε, δ, q, T) usando o cache
  sweep      variantes x ε x seeds, opcionalmente em paralelo
  report     agrega resultados (média ± e.p.) e desenha os gráficos

Códigos de saída: 0 ok, 2 configuração, 3 falha de protocolo,
4 contabilidade de privacidade, 5 invariante violado.
"""

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from tqdm import tqdm

# Adicionar src ao path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from src.mpc.errors import ProtocolFault
from src.privacy.bandmf import ScheduleError
from src.privacy.dpcore import AccountingError, CalibrationError, account, calibrate_sigma
from src.vfl.config import VARIANTS, ConfigError, ProtocolConfig, apply_overrides, load_config
from src.vfl.datasets import create_dataset, load_dataset, write_dataset
from src.vfl.estimation import EstimationError
from src.vfl.protocols import InvariantViolationError, run_protocol
from src.vfl.reporting import write_report, write_run_outputs

logger = logging.getLogger("vfl_experiment")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_ACCOUNTING = 4
EXIT_INVARIANT = 5

OUTPUT_ROOT_ENV = "VFL_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "data/runs"
SWEEP_EPSILONS = (1.0, 2.0, 5.0, 8.0, 10.0)
CACHE_FILE = "calibration_cache.json"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


def exit_code_for(error: BaseException) -> int:
    """Mapeia exceções para os códigos de saída da CLI."""
    if isinstance(error, InvariantViolationError):
        return EXIT_INVARIANT
    if isinstance(error, (AccountingError, CalibrationError)):
        return EXIT_ACCOUNTING
    if isinstance(error, (ProtocolFault, EstimationError)):
        return EXIT_PROTOCOL
    if isinstance(error, (ConfigError, ScheduleError, ValueError, FileNotFoundError)):
        return EXIT_CONFIG
    raise error


def _format_epsilon(epsilon: float) -> str:
    return "inf" if epsilon == float("inf") else f"{epsilon:g}"


def resolve_config(args: argparse.Namespace) -> ProtocolConfig:
    """Arquivo INI (opcional) mais as flags da linha de comando."""
    config = load_config(args.config) if getattr(args, "config", None) else ProtocolConfig()
    overrides = {
        "seed": getattr(args, "seed", None),
        "variant": getattr(args, "variant", None),
        "backend": getattr(args, "backend", None),
        "setting": getattr(args, "setting", None),
        "privacy.epsilon": getattr(args, "epsilon", None),
        "privacy.sigma": getattr(args, "sigma", None),
        "data_dir": getattr(args, "data_dir", None),
        "epochs": getattr(args, "epochs", None),
        "audit": True if getattr(args, "audit", False) else None,
    }
    return apply_overrides(config, overrides)


def run_directory(config: ProtocolConfig, root: Path) -> Path:
    return root / config.variant / f"eps{_format_epsilon(config.privacy.epsilon)}" / f"seed{config.seed}"


def execute_run(config: ProtocolConfig, out_dir: Path, cache_path: Optional[str] = None,
                progress: bool = False) -> Dict[str, Any]:
    """
    Executa uma configuração e grava seus artefatos.

    Raises:
        InvariantViolationError: após gravar, se a auditoria reprovar
    """
    if config.data_dir:
        dataset = load_dataset(config.data_dir)
    else:
        dataset = create_dataset(config.data)
    result = run_protocol(config, dataset, cache_path=cache_path, progress=progress)
    write_run_outputs(result, str(out_dir))
    if result.violations:
        raise InvariantViolationError(result.violations)
    return result.metrics.summary()


# ----------------------------------------------------------------------
# Verbos
# ----------------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    spec = config.data
    updates = {k: v for k, v in (("samples", args.samples), ("features", args.features),
                                  ("clients", args.clients), ("classes", args.classes),
                                  ("generator", args.generator), ("seed", args.data_seed))
               if v is not None}
    if updates:
        spec = dataclasses.replace(spec, **updates)
    problems = spec.validate()
    if problems:
        raise ConfigError(problems)
    if spec.samples % config.batch_size != 0:
        logger.warning(f"⚠️ M={spec.samples} não é divisível por B={config.batch_size}")

    out_dir = Path(args.out) if args.out else output_root() / "data"
    print("📊 GERAÇÃO DO DATASET SINTÉTICO")
    print("=" * 50)
    paths = write_dataset(create_dataset(spec), str(out_dir))
    for name, path in sorted(paths.items()):
        print(f"   {name}: {path}")
    print(f"✅ Dataset salvo em {out_dir}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    root = Path(args.out) if args.out else run_directory(config, output_root())
    print(f"🚀 EXECUÇÃO {config.variant} (ε={_format_epsilon(config.privacy.epsilon)}, seed={config.seed})")
    print("=" * 50)
    summary = execute_run(config, root, cache_path=str(output_root() / CACHE_FILE), progress=True)
    print(f"\n📊 RESUMO:")
    print(f"   Acurácia final: {summary['final_accuracy']:.4f}")
    print(f"   ε contabilizado: {summary['epsilon_accounted']}")
    print(f"   Bytes: {summary['bytes_total']:,} | Rodadas: {summary['rounds_total']:,}")
    print(f"   Tempo estimado LAN/WAN: {summary['walltime_lan_est']:.2f}s / {summary['walltime_wan_est']:.2f}s")
    print(f"📁 Resultados em: {root}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    cache = args.cache or str(output_root() / CACHE_FILE)
    sigma = calibrate_sigma(args.epsilon, args.delta, args.q, args.steps, args.mechanism, cache)
    verified = account(sigma, args.q, args.steps, args.delta)
    print(f"sigma={sigma:.6f}")
    print(f"epsilon={verified:.6f}")
    return EXIT_OK


def _sweep_job(job: Dict[str, Any]) -> int:
    """Uma execução da varredura (executável em processo separado)."""
    logging.basicConfig(level=job["log_level"])
    config = apply_overrides(job["base"], {"variant": job["variant"], "seed": job["seed"],
                                           "privacy.epsilon": job["epsilon"]})
    try:
        execute_run(config, run_directory(config, Path(job["root"])), cache_path=job["cache"])
        return EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"❌ {config.variant} ε={job['epsilon']} seed={job['seed']}: {e}")
        return code


def cmd_sweep(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    root = Path(args.out) if args.out else output_root()
    variants = args.variants.split(",") if args.variants else ["GShuff", "GBMF", "GLBMF", "LdpG"]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError([f"Variante desconhecida: '{v}'" for v in unknown])
    epsilons = [float(e) for e in args.epsilons.split(",")] if args.epsilons else list(SWEEP_EPSILONS)
    seeds = list(range(args.seeds))
    jobs = [{"base": base, "variant": v, "epsilon": e, "seed": s, "root": str(root),
             "cache": str(root / CACHE_FILE), "log_level": logging.getLogger().level}
            for v in variants for e in epsilons for s in seeds]

    print(f"🧮 VARREDURA: {len(variants)} variantes x {len(epsilons)} ε x {len(seeds)} seeds")
    print("=" * 50)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            codes = list(tqdm(pool.map(_sweep_job, jobs), total=len(jobs), desc="Varredura"))
    else:
        codes = [_sweep_job(job) for job in tqdm(jobs, desc="Varredura")]

    failed = sum(1 for c in codes if c != EXIT_OK)
    print(f"✅ {len(jobs) - failed}/{len(jobs)} execuções concluídas")
    if args.report:
        write_report(str(root), str(root / "report"))
    return max(codes) if codes else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    root = Path(args.root) if args.root else output_root()
    out_dir = Path(args.out) if args.out else root / "report"
    paths = write_report(str(root), str(out_dir), plots=not args.no_plots)
    print(Path(paths["report"]).read_text(encoding="utf-8"))
    print(f"📁 Relatório em: {out_dir}")
    return EXIT_OK


# ----------------------------------------------------------------------
# Argumentos
# ----------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="arquivo INI")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None, help="diretório de saída")
    parser.add_argument("--variant", type=str, default=None, choices=VARIANTS)
    parser.add_argument("--epsilon", type=float, default=None)
    parser.add_argument("--setting", type=int, default=None, choices=(1, 2))
    parser.add_argument("--backend", type=str, default=None, choices=("oracle", "rep3"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Experimentos de VFL com MPC + DP")
    parser.add_argument("--verbose", action="store_true", help="logs em nível DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="gera o dataset sintético")
    _add_common(gen)
    gen.add_argument("--samples", type=int, default=None)
    gen.add_argument("--features", type=int, default=None)
    gen.add_argument("--clients", type=int, default=None)
    gen.add_argument("--classes", type=int, default=None)
    gen.add_argument("--generator", type=str, default=None, choices=("gaussian-blobs", "linear-teacher"))
    gen.add_argument("--data-seed", type=int, default=None)
    gen.set_defaults(handler=cmd_gen_data)

    run = sub.add_parser("run", help="executa uma variante")
    _add_common(run)
    run.add_argument("--sigma", type=float, default=None, help="σ explícito (sem calibrar)")
    run.add_argument("--epochs", type=int, default=None)
    run.add_argument("--data-dir", type=str, default=None)
    run.add_argument("--audit", action="store_true", help="aberturas de auditoria")
    run.set_defaults(handler=cmd_run)

    cal = sub.add_parser("calibrate", help="calibra σ")
    cal.add_argument("--epsilon", type=float, required=True)
    cal.add_argument("--delta", type=float, default=1e-5)
    cal.add_argument("--q", type=float, default=1.0)
    cal.add_argument("--steps", type=int, default=1)
    cal.add_argument("--mechanism", type=str, default="gaussian",
                     choices=("gaussian", "subsampled_gaussian", "bandmf", "ldp"))
    cal.add_argument("--cache", type=str, default=None)
    cal.set_defaults(handler=cmd_calibrate)

    sweep = sub.add_parser("sweep", help="variantes x ε x seeds")
    _add_common(sweep)
    sweep.add_argument("--variants", type=str, default=None, help="lista separada por vírgulas")
    sweep.add_argument("--epsilons", type=str, default=None, help="padrão 1,2,5,8,10")
    sweep.add_argument("--seeds", type=int, default=4)
    sweep.add_argument("--epochs", type=int, default=None)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--report", action="store_true", help="gera o relatório ao final")
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", help="agrega resultados")
    report.add_argument("--root", type=str, default=None)
    report.add_argument("--out", type=str, default=None)
    report.add_argument("--no-plots", action="store_true")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        return args.handler(args)
    except Exception as e:
        code = exit_code_for(e)
        print(f"❌ {e}")
        return code


if __name__ == "__main__":
    sys.exit(main())

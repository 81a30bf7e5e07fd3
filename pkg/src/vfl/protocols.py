"""
Protocols: Treinadores do VFL com MPC + DP e referências em texto claro

- Plain: servidor único, SGD exato (limite superior de utilidade e oráculo σ=0)
- GShuff: locais congelados, embaralhamento seguro por época, ruído gaussiano
- GBMF: locais congelados, ordem fixa, ruído correlacionado BandMF
- GLBMF: como GBMF, mas cada cliente recebe a sua fatia ruidosa, reconstrói
  os gradientes por amostra e treina os adaptadores
- LdpG / LdpGL: clientes recortam e perturbam os próprios embeddings

Toda variante MPC passa o ruído pelo mesmo fluxo correlacionado (coeficientes
[1] no caso gaussiano), de modo que GShuff sem embaralhamento e GBMF com p=1
produzem trajetórias idênticas.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

try:
    from ..mpc.abb import CostLedger, SecretBackend, SecretValue, create_backend
    from ..mpc.transport import ANALYST, SERVERS, client_id
    from ..privacy.bandmf import bsr_coeffs, correlated_noise_stream, sensitivity
    from ..privacy.dpcore import AccountingError, RdpAccountant, accountant_for_variant, calibrate_sigma, gs_protocol
    from .config import LDP_VARIANTS, ProtocolConfig
    from .datasets import VerticalDataset
    from .estimation import assemble, clip_factors, create_estimator, effective_noise_std, error_bound
    from .metrics import BoundRecord, EpochRecord, RunMetrics, upstream_bytes
    from .models import (GlobalModel, LocalModel, accuracy, backprop_local, create_global_model,
                         create_local_model, forward_local, local_jacobians, loss_and_per_sample_grads,
                         one_hot, sgd_step)
    from . import secure_layers as sl
except ImportError:
    # Para execução direta
    from mpc.abb import CostLedger, SecretBackend, SecretValue, create_backend
    from mpc.transport import ANALYST, SERVERS, client_id
    from privacy.bandmf import bsr_coeffs, correlated_noise_stream, sensitivity
    from privacy.dpcore import AccountingError, RdpAccountant, accountant_for_variant, calibrate_sigma, gs_protocol
    from vfl.config import LDP_VARIANTS, ProtocolConfig
    from vfl.datasets import VerticalDataset
    from vfl.estimation import assemble, clip_factors, create_estimator, effective_noise_std, error_bound
    from vfl.metrics import BoundRecord, EpochRecord, RunMetrics, upstream_bytes
    from vfl.models import (GlobalModel, LocalModel, accuracy, backprop_local, create_global_model,
                            create_local_model, forward_local, local_jacobians, loss_and_per_sample_grads,
                            one_hot, sgd_step)
    import vfl.secure_layers as sl

logger = logging.getLogger(__name__)

RELEASE_STEP = "global_model"
CLIENT_STEP = "client_gradient"
AUDIT_MODEL_STEP = "audit_model"
AUDIT_CLIPPED_STEP = "audit_clipped"
AUDIT_GRADIENT_STEP = "audit_gradients"
AUDIT_EMBEDDING_STEP = "audit_embedding_grad"
AUDIT_STEPS = (AUDIT_MODEL_STEP, AUDIT_CLIPPED_STEP, AUDIT_GRADIENT_STEP, AUDIT_EMBEDDING_STEP)

CLIP_TOLERANCE = 1e-3
PLAINTEXT_ELEMENT_BYTES = 8


class InvariantViolationError(RuntimeError):
    """Auditoria de recorte ou de vazamento reprovada em uma execução."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("Invariantes violados:\n  - " + "\n  - ".join(self.violations))


# ----------------------------------------------------------------------
# Tipos
# ----------------------------------------------------------------------

@dataclass
class PrivacyPlan:
    """Contabilidade fixada antes do treinamento."""
    sigma: float
    epsilon_target: float
    epsilon_accounted: float
    q: float
    steps: int
    mechanism: str
    sens: float = 1.0
    coeffs: np.ndarray = field(default_factory=lambda: np.ones(1))
    accountant: Optional[RdpAccountant] = None

    def noise_scale(self, gamma: float) -> float:
        """Escala da tabela GS: (σ·sens)·γ."""
        return (self.sigma * self.sens) * gamma


@dataclass
class GradientPacket:
    """g̃ de um passo: fatia global (secreta) e fatias abertas a cada cliente."""
    step: int
    global_slice: SecretValue
    client_slices: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RunResult:
    config: ProtocolConfig
    global_model: GlobalModel
    local_models: List[LocalModel]
    metrics: RunMetrics
    plan: PrivacyPlan
    ledger: CostLedger
    backend: Optional[SecretBackend] = None
    trajectory: List[np.ndarray] = field(default_factory=list)   # θ por passo (audit)
    violations: List[str] = field(default_factory=list)


# ----------------------------------------------------------------------
# Contabilidade
# ----------------------------------------------------------------------

def plan_privacy(config: ProtocolConfig, num_samples: int,
                 cache_path: Optional[str] = None) -> PrivacyPlan:
    """
    Resolve σ (explícito ou calibrado) e verifica o ε contabilizado.

    Raises:
        AccountingError: ε contabilizado acima do alvo
        CalibrationError: alvo inalcançável
    """
    privacy = config.privacy
    if config.variant == "Plain":
        return PrivacyPlan(sigma=0.0, epsilon_target=math.inf, epsilon_accounted=math.inf,
                           q=1.0, steps=0, mechanism="none")

    q, steps, mechanism = accountant_for_variant(config.variant, num_samples,
                                                 config.batch_size, config.epochs)
    sens, coeffs = 1.0, np.ones(1)
    if config.variant in ("GBMF", "GLBMF"):
        total = config.total_steps(num_samples)
        coeffs = bsr_coeffs(config.workload(num_samples), config.band_width(num_samples)).c
        sens = sensitivity(coeffs, config.schema(num_samples), total)

    if privacy.sigma is not None:
        sigma = float(privacy.sigma)
    else:
        sigma = calibrate_sigma(privacy.epsilon, privacy.delta, q, steps, mechanism, cache_path)

    accountant = RdpAccountant(sigma=sigma, q=q, steps=steps, delta=privacy.delta, mechanism=mechanism)
    epsilon = accountant.epsilon()
    if epsilon > privacy.epsilon:
        logger.error(f"❌ Falha de contabilidade: ε={epsilon:.4f} > alvo {privacy.epsilon}")
        raise AccountingError(f"ε contabilizado {epsilon:.4f} excede o alvo {privacy.epsilon} "
                              f"(σ={sigma:g}, q={q:g}, T={steps})")
    logger.info(f"🔏 Contabilidade {config.variant}: σ={sigma:.4f}, sens={sens:.4f}, "
                f"ε={epsilon:.4f} (alvo {privacy.epsilon})")
    # o ruído entra na soma recortada; a média divide por B
    effective = sigma * privacy.clip_gamma * sens / config.batch_size
    logger.info(f"📉 Escala efetiva do ruído na média: σ·γ·sens/B = {effective:.4g}")
    return PrivacyPlan(sigma=sigma, epsilon_target=privacy.epsilon, epsilon_accounted=epsilon,
                       q=q, steps=steps, mechanism=mechanism, sens=sens, coeffs=coeffs,
                       accountant=accountant)


# ----------------------------------------------------------------------
# Auxiliares comuns
# ----------------------------------------------------------------------

def _initial_models(config: ProtocolConfig, dataset: VerticalDataset) -> Tuple[GlobalModel, List[LocalModel]]:
    locals_ = [create_local_model(dim, config.model, seed=config.seed + 1000 * (i + 1))
               for i, dim in enumerate(dataset.feature_dims)]
    total_dim = sum(m.embedding_dim for m in locals_)
    return create_global_model(total_dim, dataset.spec.classes, seed=config.seed), locals_


def _new_metrics(config: ProtocolConfig, plan: PrivacyPlan) -> RunMetrics:
    return RunMetrics(variant=config.variant, backend=config.backend if config.is_mpc else "plaintext",
                      seed=config.seed, epsilon_target=plan.epsilon_target,
                      epsilon_accounted=plan.epsilon_accounted, sigma=plan.sigma,
                      delta=config.privacy.delta, q=plan.q, steps=plan.steps, sens=plan.sens)


def _batch(index: int, batch_size: int) -> slice:
    return slice(index * batch_size, (index + 1) * batch_size)


def _train_loss(global_model: GlobalModel, local_models: Sequence[LocalModel],
                parts: Sequence[np.ndarray], labels: np.ndarray) -> float:
    H = np.concatenate([forward_local(m, x) for m, x in zip(local_models, parts)], axis=1)
    return float(loss_and_per_sample_grads(global_model, H, labels).losses.mean())


def evaluate(global_model: GlobalModel, local_models: Sequence[LocalModel],
             dataset: VerticalDataset) -> float:
    """Acurácia de teste dos modelos finais (já abertos)."""
    return accuracy(global_model, local_models, dataset.test_parts, dataset.test_labels)


def _epoch_record(epoch: int, ledger: CostLedger, since: CostLedger, num_clients: int,
                  global_model: Optional[GlobalModel], local_models: Sequence[LocalModel],
                  dataset: VerticalDataset) -> EpochRecord:
    delta = ledger.delta(since)
    loss = acc = None
    if global_model is not None:
        loss = _train_loss(global_model, local_models, dataset.train_parts, dataset.train_labels)
        acc = evaluate(global_model, local_models, dataset)
    return EpochRecord(epoch=epoch, train_loss=loss, test_accuracy=acc, bytes=delta.total_bytes(),
                       rounds=delta.rounds, client_upstream_bytes=upstream_bytes(delta, num_clients))


def _charge_plaintext(ledger: CostLedger, sender: str, elements: int) -> None:
    ledger.charge_bytes(sender, elements * PLAINTEXT_ELEMENT_BYTES)


# ----------------------------------------------------------------------
# Referência em texto claro
# ----------------------------------------------------------------------

def plaintext_train(config: ProtocolConfig, dataset: VerticalDataset,
                    plan: Optional[PrivacyPlan] = None, progress: bool = False) -> RunResult:
    """
    SGD exato com servidor único: θ com η_s e parâmetros locais treináveis
    com η_i pela regra da cadeia. Sem recorte e sem ruído.
    """
    plan = plan or plan_privacy(config, dataset.num_samples)
    global_model, local_models = _initial_models(config, dataset)
    metrics = _new_metrics(config, plan)
    ledger = CostLedger()
    B, N = config.batch_size, dataset.num_clients
    num_batches = config.num_batches(dataset.num_samples)
    dims = [m.embedding_dim for m in local_models]
    splits = np.cumsum(dims)[:-1]
    trajectory = []

    for epoch in tqdm(range(config.epochs), desc="Plain", disable=not progress):
        since = ledger.snapshot()
        for s in range(num_batches):
            rows = _batch(s, B)
            step_start = ledger.snapshot()
            X = [part[rows] for part in dataset.train_parts]
            H_parts = [forward_local(m, x) for m, x in zip(local_models, X)]
            for i, H_i in enumerate(H_parts):
                _charge_plaintext(ledger, client_id(i), H_i.size)
            ledger.charge_round()

            grads = loss_and_per_sample_grads(global_model, np.concatenate(H_parts, axis=1),
                                              dataset.train_labels[rows])
            g_theta = grads.flat_theta().mean(axis=0)
            g_H = np.split(grads.H / B, splits, axis=1)
            global_model.set_theta(global_model.theta() - config.eta_s * g_theta)

            if config.eta_i > 0:
                for i, model in enumerate(local_models):
                    _charge_plaintext(ledger, SERVERS[0], g_H[i].size)
                    sgd_step(model.params, backprop_local(model, X[i], g_H[i]), config.eta_i)
                ledger.charge_round()
            metrics.add_step_cost(epoch * num_batches + s, ledger.delta(step_start))
            if config.audit:
                trajectory.append(global_model.theta())

        metrics.add_epoch(_epoch_record(epoch + 1, ledger, since, N, global_model,
                                        local_models, dataset))

    metrics.finish(ledger, evaluate(global_model, local_models, dataset))
    return RunResult(config=config, global_model=global_model, local_models=local_models,
                     metrics=metrics, plan=plan, ledger=ledger, trajectory=trajectory)


# ----------------------------------------------------------------------
# Variantes MPC
# ----------------------------------------------------------------------

class _Cohort:
    """Estado compartilhado por um treinamento na coorte de servidores."""

    def __init__(self, config: ProtocolConfig, dataset: VerticalDataset, plan: PrivacyPlan,
                 width: int):
        self.config = config
        self.dataset = dataset
        self.plan = plan
        self.gamma = config.privacy.clip_gamma
        self.B = config.batch_size
        self.N = dataset.num_clients
        self.num_batches = config.num_batches(dataset.num_samples)
        self.total_steps = config.total_steps(dataset.num_samples)

        self.backend = create_backend(config.backend, config.numerics, config.backend_config(),
                                      seed=config.seed, cohort=f"cohort{config.seed}",
                                      num_clients=self.N)
        self.backend.leakage.authorize(RELEASE_STEP, ANALYST, "release")
        if config.audit:
            for step in AUDIT_STEPS:
                self.backend.leakage.authorize(step, "*", "audit")

        self.global_model, self.local_models = _initial_models(config, dataset)
        self.shared = sl.share_global_model(self.backend, self.global_model.W, self.global_model.b)
        self.metrics = _new_metrics(config, plan)
        self.trajectory: List[np.ndarray] = []

        table = gs_protocol(self.backend, self.total_steps, width, plan.noise_scale(self.gamma))
        self.noise = correlated_noise_stream(self.backend, table, plan.coeffs, post_scale=1.0 / self.B)

    @property
    def cost(self) -> CostLedger:
        return self.backend.cost

    def aggregate(self, gradients: SecretValue, step: int) -> SecretValue:
        """Recorte conjunto, soma, ruído da linha `step` e média."""
        clipped = sl.clip_per_sample(gradients, self.gamma)
        if self.config.audit:
            opened = self.backend.open(clipped, AUDIT_CLIPPED_STEP, ANALYST, "audit", step)
            norms = np.linalg.norm(opened, axis=1)
            self.metrics.note_clip_ratio(float(norms.max()) / self.gamma)
        summed = self.backend.sum(clipped, axis=0)
        return sl.noisy_mean(self.backend, summed, self.noise.row(step), self.B)

    def audit_model(self, step: int) -> None:
        if self.config.audit:
            theta = self.backend.open(self.shared.flat(), AUDIT_MODEL_STEP, ANALYST, "audit", step)
            self.trajectory.append(theta)

    def audited_global(self) -> Optional[GlobalModel]:
        if not self.trajectory:
            return None
        model = self.global_model.copy()
        model.set_theta(self.trajectory[-1])
        return model

    def close_epoch(self, epoch: int, since: CostLedger) -> None:
        self.metrics.add_epoch(_epoch_record(epoch, self.cost, since, self.N, self.audited_global(),
                                             self.local_models, self.dataset))

    def finish(self) -> RunResult:
        theta = self.backend.open(self.shared.flat(), RELEASE_STEP, ANALYST, "release")
        self.global_model.set_theta(theta)
        acc = evaluate(self.global_model, self.local_models, self.dataset)
        self.metrics.finish(self.cost, acc, self.backend.leakage.digest())
        logger.info(f"🏁 {self.config.variant}: acurácia final {acc:.4f}, "
                    f"{self.metrics.bytes_total} bytes, {self.metrics.rounds_total} rodadas")
        return RunResult(config=self.config, global_model=self.global_model,
                         local_models=self.local_models, metrics=self.metrics, plan=self.plan,
                         ledger=self.cost, backend=self.backend, trajectory=self.trajectory)


def _train_frozen(config: ProtocolConfig, dataset: VerticalDataset, plan: PrivacyPlan,
                  shuffle: bool, progress: bool) -> RunResult:
    """Treino só da cabeça global sobre embeddings enviados uma única vez."""
    global_probe, _ = _initial_models(config, dataset)
    cohort = _Cohort(config, dataset, plan, width=global_probe.n_params)
    bk, B, S = cohort.backend, cohort.B, dataset.spec.classes
    d_H = global_probe.input_dim

    # Única comunicação dos clientes: todos os embeddings e os rótulos
    items = [(forward_local(m, x), client_id(i))
             for i, (m, x) in enumerate(zip(cohort.local_models, dataset.train_parts))]
    items.append((one_hot(dataset.train_labels, S), client_id(dataset.label_client)))
    rows = bk.concat(bk.input_many(items), axis=1)
    logger.info(f"📤 Embeddings enviados: {rows.shape[0]} linhas x {rows.shape[1]} colunas")

    for epoch in tqdm(range(config.epochs), desc=config.variant, disable=not progress):
        since = cohort.cost.snapshot()
        if shuffle:
            rows = bk.shuffle(rows, identity=config.identity_shuffle)
        for s in range(cohort.num_batches):
            t = epoch * cohort.num_batches + s
            step_start = cohort.cost.snapshot()
            batch = bk.index(rows, _batch(s, B))
            H = bk.index(batch, (Ellipsis, slice(0, d_H)))
            Y = bk.index(batch, (Ellipsis, slice(d_H, d_H + S)))
            grads = sl.per_sample_gradients(bk, H, Y, cohort.shared)
            noisy = cohort.aggregate(grads.theta, t)
            cohort.shared = sl.sgd_update(bk, cohort.shared, noisy, config.eta_s)
            cohort.metrics.add_step_cost(t, cohort.cost.delta(step_start))
            cohort.audit_model(t)
            logger.debug(f"🔁 Passo {t}: {cohort.metrics.step_costs[-1].bytes} bytes")
        cohort.close_epoch(epoch + 1, since)
    return cohort.finish()


def g_shuff_train(config: ProtocolConfig, dataset: VerticalDataset,
                  plan: Optional[PrivacyPlan] = None, progress: bool = False) -> RunResult:
    """Locais congelados, embaralhamento seguro a cada época e ruído gaussiano σγ."""
    plan = plan or plan_privacy(config, dataset.num_samples)
    return _train_frozen(config, dataset, plan, shuffle=config.shuffle, progress=progress)


def g_bmf_train(config: ProtocolConfig, dataset: VerticalDataset,
                plan: Optional[PrivacyPlan] = None, progress: bool = False) -> RunResult:
    """Locais congelados, ordem fixa e ruído correlacionado σγ·sens."""
    plan = plan or plan_privacy(config, dataset.num_samples)
    return _train_frozen(config, dataset, plan, shuffle=False, progress=progress)


def gl_bmf_train(config: ProtocolConfig, dataset: VerticalDataset,
                 plan: Optional[PrivacyPlan] = None, progress: bool = False) -> RunResult:
    """
    GL-BMF: a cada passo os clientes enviam embeddings e jacobianas da camada
    designada; a coorte calcula os gradientes por amostra de θ e da camada,
    recorta a concatenação com um único γ, agrega com ruído BandMF e abre a
    cada cliente apenas a sua fatia. O cliente estima ĝ_H por ridge e
    retropropaga em todos os parâmetros treináveis.
    """
    plan = plan or plan_privacy(config, dataset.num_samples)
    global_probe, locals_probe = _initial_models(config, dataset)
    layer = config.model.jacobian_layer
    layer_sizes = [m.layer_size(layer) for m in locals_probe]
    n_theta = global_probe.n_params
    cohort = _Cohort(config, dataset, plan, width=n_theta + sum(layer_sizes))
    bk, B, N = cohort.backend, cohort.B, cohort.N
    dims = [m.embedding_dim for m in cohort.local_models]
    estimator = create_estimator(config.estimation.estimator, config.estimation.ridge_lambda)
    squared = config.estimation.noise_norm == "squared"
    for i in range(N):
        bk.leakage.authorize(CLIENT_STEP, client_id(i), "release")
    warned = set()

    labels = bk.input(one_hot(dataset.train_labels, dataset.spec.classes), client_id(dataset.label_client))

    for epoch in tqdm(range(config.epochs), desc="GLBMF", disable=not progress):
        since = cohort.cost.snapshot()
        for s in range(cohort.num_batches):
            t = epoch * cohort.num_batches + s
            rows = _batch(s, B)
            step_start = cohort.cost.snapshot()
            X = [part[rows] for part in dataset.train_parts]
            jacobians = [local_jacobians(m, x, layer) for m, x in zip(cohort.local_models, X)]
            items = [(forward_local(m, x), client_id(i)) for i, (m, x) in enumerate(zip(cohort.local_models, X))]
            items += [(J, client_id(i)) for i, J in enumerate(jacobians)]
            shares = bk.input_many(items)
            H, J_shares = bk.concat(shares[:N], axis=1), shares[N:]

            grads = sl.per_sample_gradients(bk, H, bk.index(labels, rows), cohort.shared)
            g_H = sl.split_columns(bk, grads.embeddings, dims)
            layer_grads = [sl.local_layer_gradients(bk, J, g) for J, g in zip(J_shares, g_H)]
            concatenated = bk.concat([grads.theta] + layer_grads, axis=1)

            truth = None
            if config.audit:
                opened_G = bk.open(concatenated, AUDIT_GRADIENT_STEP, ANALYST, "audit", t)
                opened_gH = bk.open(grads.embeddings, AUDIT_EMBEDDING_STEP, ANALYST, "audit", t)
                factors = clip_factors(opened_G, cohort.gamma)
                truth = np.split(opened_gH * factors[:, None], np.cumsum(dims)[:-1], axis=1)

            noisy = cohort.aggregate(concatenated, t)
            packet = _release_slices(bk, noisy, t, n_theta, layer_sizes)
            cohort.shared = sl.sgd_update(bk, cohort.shared, packet.global_slice, config.eta_s)

            sigma_t = effective_noise_std(plan.sigma, cohort.gamma, plan.sens,
                                          cohort.noise.row_norm(t, squared=squared))
            for i, model in enumerate(cohort.local_models):
                name = client_id(i)
                system = assemble(jacobians[i], packet.client_slices[name], sigma_t)
                if not system.well_posed and name not in warned:
                    logger.warning(f"⚠️ Sistema mal-posto em {name}: n^L={system.rows} < "
                                   f"d·B={system.unknowns}; a regularização segue")
                    warned.add(name)
                reconstruction = estimator(system)
                bound = error_bound(system, cohort.gamma * math.sqrt(B),
                                    exact_limit=config.estimation.eigen_exact_limit)
                record = BoundRecord(step=t, client=name, sigma_t=sigma_t, lam=reconstruction.lam,
                                     bound=bound, well_posed=system.well_posed)
                if truth is not None:
                    diff = reconstruction.estimate - truth[i]
                    record.realized_error = float(np.sum(diff ** 2))
                    record.realized_max_abs = float(np.max(np.abs(diff)))
                cohort.metrics.bounds.append(record)
                logger.debug(f"📐 {name} passo {t}: σ_t={sigma_t:.4g}, limite={bound:.4g}")

                local_grads = backprop_local(model, X[i], reconstruction.estimate / B)
                sgd_step(model.params, local_grads, config.eta_i)

            cohort.metrics.add_step_cost(t, cohort.cost.delta(step_start))
            cohort.audit_model(t)
        cohort.close_epoch(epoch + 1, since)
    return cohort.finish()


def _release_slices(backend: SecretBackend, noisy: SecretValue, step: int, n_theta: int,
                    layer_sizes: Sequence[int]) -> GradientPacket:
    """Separa g̃ em fatia global e fatias de cliente; cada fatia vai só ao seu dono."""
    parts = sl.split_columns(backend, noisy, [n_theta] + list(layer_sizes))
    packet = GradientPacket(step=step, global_slice=parts[0])
    for i, part in enumerate(parts[1:]):
        name = client_id(i)
        packet.client_slices[name] = backend.open(part, CLIENT_STEP, name, "release", step)
    return packet


# ----------------------------------------------------------------------
# Linhas de base com DP local
# ----------------------------------------------------------------------

def privatize_embeddings(H: np.ndarray, gamma: float, sigma: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Recorte por amostra em γ seguido de N(0, σ²γ²)."""
    norms = np.linalg.norm(H, axis=1)
    factors = np.minimum(1.0, gamma / np.maximum(norms, np.finfo(np.float64).tiny))
    return H * factors[:, None] + rng.normal(0.0, sigma * gamma, size=H.shape)


def ldp_train(config: ProtocolConfig, dataset: VerticalDataset,
              plan: Optional[PrivacyPlan] = None, progress: bool = False) -> RunResult:
    """
    LdpG: embeddings perturbados enviados uma vez; LdpGL: reenviados a cada
    época e o servidor devolve ∂L/∂H̃ em texto claro para o treino local.
    O gradiente local atravessa o recorte como identidade.
    """
    if config.variant not in LDP_VARIANTS:
        raise ValueError(f"ldp_train não aceita a variante '{config.variant}'")
    plan = plan or plan_privacy(config, dataset.num_samples)
    train_locals = config.variant == "LdpGL"
    global_model, local_models = _initial_models(config, dataset)
    metrics = _new_metrics(config, plan)
    ledger = CostLedger()
    B, N, gamma = config.batch_size, dataset.num_clients, config.privacy.clip_gamma
    num_batches = config.num_batches(dataset.num_samples)
    splits = np.cumsum([m.embedding_dim for m in local_models])[:-1]
    released: List[np.ndarray] = []
    trajectory = []

    for epoch in tqdm(range(config.epochs), desc=config.variant, disable=not progress):
        since = ledger.snapshot()
        if epoch == 0 or train_locals:
            released = []
            for i, (model, part) in enumerate(zip(local_models, dataset.train_parts)):
                rng = np.random.default_rng([config.seed, 4242, epoch, i])
                released.append(privatize_embeddings(forward_local(model, part), gamma, plan.sigma, rng))
                _charge_plaintext(ledger, client_id(i), released[-1].size)
            ledger.charge_round()

        for s in range(num_batches):
            rows = _batch(s, B)
            step_start = ledger.snapshot()
            H = np.concatenate([r[rows] for r in released], axis=1)
            grads = loss_and_per_sample_grads(global_model, H, dataset.train_labels[rows])
            g_H = np.split(grads.H / B, splits, axis=1)
            global_model.set_theta(global_model.theta() - config.eta_s * grads.flat_theta().mean(axis=0))
            if train_locals:
                for i, model in enumerate(local_models):
                    _charge_plaintext(ledger, SERVERS[0], g_H[i].size)
                    x = dataset.train_parts[i][rows]
                    sgd_step(model.params, backprop_local(model, x, g_H[i]), config.eta_i)
                ledger.charge_round()
            metrics.add_step_cost(epoch * num_batches + s, ledger.delta(step_start))
            if config.audit:
                trajectory.append(global_model.theta())

        metrics.add_epoch(_epoch_record(epoch + 1, ledger, since, N, global_model,
                                        local_models, dataset))

    metrics.finish(ledger, evaluate(global_model, local_models, dataset))
    return RunResult(config=config, global_model=global_model, local_models=local_models,
                     metrics=metrics, plan=plan, ledger=ledger, trajectory=trajectory)


# ----------------------------------------------------------------------
# Despacho e auditoria
# ----------------------------------------------------------------------

TRAINERS = {
    "Plain": plaintext_train,
    "GShuff": g_shuff_train,
    "GBMF": g_bmf_train,
    "GLBMF": gl_bmf_train,
    "LdpG": ldp_train,
    "LdpGL": ldp_train,
}


def expected_releases(result: RunResult) -> List[Tuple[str, str, Optional[int]]]:
    """Superfície de liberação declarada de cada variante MPC."""
    expected = []
    if result.config.variant == "GLBMF":
        for t in range(len(result.metrics.step_costs)):
            expected.extend((CLIENT_STEP, client_id(i), t) for i in range(len(result.local_models)))
    expected.append((RELEASE_STEP, ANALYST, None))
    return expected


def verify_invariants(result: RunResult) -> List[str]:
    """
    Invariantes verificáveis após a execução.

    Returns:
        Lista de violações (vazia quando tudo confere)
    """
    violations = []
    ratio = result.metrics.audit_max_clip_ratio
    if ratio is not None and ratio > 1.0 + CLIP_TOLERANCE:
        violations.append(f"Norma recortada {ratio:.6f}·γ acima da tolerância")
    if result.backend is not None:
        observed = [(e.step, e.recipient, e.step_index) for e in result.backend.leakage.releases()]
        if observed != expected_releases(result):
            violations.append(f"Liberações ({len(observed)}) diferem da superfície declarada")
    for violation in violations:
        logger.error(f"❌ {violation}")
    return violations


def run_protocol(config: ProtocolConfig, dataset: VerticalDataset,
                 cache_path: Optional[str] = None, progress: bool = False) -> RunResult:
    """
    Valida a configuração, fixa a contabilidade e executa a variante.

    Raises:
        ConfigError: configuração inválida
        AccountingError / CalibrationError: privacidade
        ProtocolFault: aborto da coorte MPC
    """
    config.validate(dataset.num_samples)
    config.privacy.validate(dataset.num_samples)
    start = time.time()
    logger.info(f"🚀 Executando {config.variant} ({config.backend if config.is_mpc else 'texto claro'}), "
                f"seed={config.seed}, E={config.epochs}, B={config.batch_size}")
    plan = plan_privacy(config, dataset.num_samples, cache_path)
    result = TRAINERS[config.variant](config, dataset, plan=plan, progress=progress)
    result.violations = verify_invariants(result)
    logger.info(f"⏱️ {config.variant} concluído em {time.time() - start:.1f}s")
    return result

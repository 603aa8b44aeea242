"""
Experiment phases over a shared run context

Each phase reads what earlier phases left on the RunContext and returns the
MetricsReport describing its output model. MIA rates always use the
threshold frozen on the pre-unlearning model: mia_rate_pre is the rate of
that model, mia_rate_post the rate of the phase's output model.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..analyzers import MiaEvaluator, build_mia_sets, global_accuracy
from ..collectors import load_assignment, load_dataset
from ..config import ExperimentConfig
from ..exceptions import ConfigError
from ..federation import FederatedClient, ServerState, init_server, run_federated
from ..models import Dataset, MetricsReport, MiaThreshold, Split, Variant
from ..nn import ParamLayout
from ..processors import edge_cut, induce_shards, partition_graph
from ..unlearning import run_unlearning
from ..virtual import build_virtual_client, run_repair
from .oracle import retrain_oracle

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RunContext:
    cfg: ExperimentConfig
    dataset: Dataset
    assignment: np.ndarray
    fed_state: Optional[ServerState] = None      # trained federation, every client
    thresholds: dict = field(default_factory=dict)  # client id -> MiaThreshold
    evaluators: dict = field(default_factory=dict)  # client id -> MiaEvaluator
    theta_u: Optional[np.ndarray] = None
    departed: list = field(default_factory=list)
    virtuals: list = field(default_factory=list)
    repaired: Optional[ServerState] = None

    @property
    def targets(self) -> list[int]:
        ordered = [self.cfg.target_client] + list(self.cfg.extra_targets)
        return list(dict.fromkeys(ordered))

    @property
    def primary(self) -> int:
        return self.cfg.target_client

    @property
    def layout(self) -> ParamLayout:
        return self.fed_state.layout

    @property
    def theta0(self) -> np.ndarray:
        return self.fed_state.global_params

    def retained_graphs(self, departed=None) -> list:
        gone = set(self.targets if departed is None else departed)
        return [c.inputs for c in self.fed_state.clients if c.client_id not in gone]

    def accuracy(self, theta: np.ndarray) -> float:
        """Test accuracy over the retained clients"""
        return global_accuracy(theta, self.layout, self.retained_graphs(), Split.TEST)

    def mia_pair(self, theta: np.ndarray) -> tuple[float, float]:
        """(rate of the pre-unlearning model, rate of theta) for the primary target"""
        evaluator = self.evaluators[self.primary]
        thr = self.thresholds[self.primary]
        return evaluator.rate(self.theta0, thr), evaluator.rate(theta, thr)

    def fork(self, cfg: ExperimentConfig) -> "RunContext":
        """Context sharing the trained federation but nothing downstream of it"""
        return RunContext(cfg=cfg, dataset=self.dataset, assignment=self.assignment, fed_state=self.fed_state,
                          thresholds={self.primary: self.thresholds[self.primary]},
                          evaluators={self.primary: self.evaluators[self.primary]})


def prepare_context(cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> RunContext:
    """Load the dataset and fix the client partition"""
    ds = load_dataset(cfg.dataset) if dataset is None else dataset
    k = cfg.federation.clients
    if cfg.partition.file is not None:
        assignment = load_assignment(cfg.partition.file, n=ds.n, num_parts=k)
        logger.info(f"Loaded partition from {cfg.partition.file}")
    else:
        assignment = partition_graph(ds.graph, k, seed=cfg.partition.seed)
    return RunContext(cfg=cfg, dataset=ds, assignment=assignment)


def make_evaluator(state: ServerState, target_id: int, departed=()) -> MiaEvaluator:
    gone = set(departed)
    target = state.client(target_id)
    retained = [c for c in state.clients if c.client_id != target_id and c.client_id not in gone]
    sets = build_mia_sets(target.shard, [c.shard for c in retained])
    graphs = {c.client_id: c.inputs for c in state.clients}
    return MiaEvaluator(sets, graphs, state.layout)


def restore_federation(ctx: RunContext, theta0: np.ndarray, history: list) -> None:
    """Rebuild the trained ServerState from checkpointed parameters"""
    cfg = ctx.cfg
    clients = [FederatedClient.from_shard(s) for s in induce_shards(ctx.dataset, ctx.assignment)]
    layout = ParamLayout(d=ctx.dataset.num_features, h=cfg.federation.hidden, c=ctx.dataset.num_classes)
    state = init_server(clients, layout, start=theta0, rule=cfg.federation.weight_rule, seed=cfg.federation.seed)
    state.round = cfg.federation.rounds
    state.history = list(history)
    ctx.fed_state = state
    ctx.evaluators[ctx.primary] = make_evaluator(state, ctx.primary)


def _check_targets(ctx: RunContext, shards) -> None:
    present = {s.client_id for s in shards}
    for key, target in [("target_client", ctx.primary)] + [
        (f"extra_targets.{i}", t) for i, t in enumerate(ctx.cfg.extra_targets)
    ]:
        if target not in present:
            raise ConfigError(key, f"client {target} has no nodes in the partition")


def train_phase(ctx: RunContext) -> MetricsReport:
    """FedAvg training and the frozen MIA threshold for the primary target"""
    cfg = ctx.cfg
    shards = induce_shards(ctx.dataset, ctx.assignment)
    _check_targets(ctx, shards)

    state, theta0 = run_federated(ctx.dataset, cfg.federation, shards=shards)
    ctx.fed_state = state
    evaluator = make_evaluator(state, ctx.primary)
    ctx.evaluators[ctx.primary] = evaluator
    ctx.thresholds[ctx.primary] = evaluator.fit(theta0)
    return train_report(ctx)


def train_report(ctx: RunContext) -> MetricsReport:
    state, thr = ctx.fed_state, ctx.thresholds[ctx.primary]
    accuracy = global_accuracy(ctx.theta0, ctx.layout, [c.inputs for c in state.clients], Split.TEST)
    rate = ctx.evaluators[ctx.primary].rate(ctx.theta0, thr)
    logger.info(f"Pre-unlearning: test accuracy {accuracy:.4f}, MIA rate {rate:.4f}")
    return MetricsReport(
        name="train",
        accuracy=accuracy,
        mia_rate_pre=rate,
        mia_rate_post=rate,
        curves={"rounds": list(state.history)},
        config={"federation": ctx.cfg.federation.model_dump(mode="json")},
        extra={
            "tau_pre": thr.to_dict(),
            "edge_cut": edge_cut(ctx.dataset.graph, ctx.assignment),
            "client_sizes": {str(c.client_id): c.num_nodes for c in state.clients},
        },
    )


def _without(state: ServerState, departed, theta: np.ndarray) -> ServerState:
    keep = [i for i, c in enumerate(state.clients) if c.client_id not in set(departed)]
    return replace(state, clients=[state.clients[i] for i in keep], weights=state.weights[keep],
                   global_params=theta)


def unlearn_phase(ctx: RunContext) -> MetricsReport:
    """Unlearn every target in order; later targets get a threshold fitted on the current model"""
    cfg = ctx.cfg
    gradient_correction = cfg.unlearn.gradient_correction and cfg.variant is not Variant.NO_GRU
    theta = ctx.theta0
    ctx.departed = []
    curves = {}
    per_target = {}

    for j in ctx.targets:
        current = _without(ctx.fed_state, ctx.departed, theta)
        if j not in ctx.thresholds:
            ctx.evaluators[j] = make_evaluator(ctx.fed_state, j, departed=ctx.departed)
            ctx.thresholds[j] = ctx.evaluators[j].fit(theta)
        result = run_unlearning(current, j, cfg.unlearn, cfg.federation.train, ctx.thresholds[j],
                                evaluator=ctx.evaluators[j], gradient_correction=gradient_correction, start=theta)
        per_target[str(j)] = {
            "mia_rate_before": ctx.evaluators[j].rate(theta, ctx.thresholds[j]),
            "mia_rate_after": ctx.evaluators[j].rate(result.theta, ctx.thresholds[j]),
            "drift": result.state.drift,
        }
        curves["epochs" if j == ctx.primary else f"epochs_client_{j}"] = result.records
        theta = result.theta
        ctx.departed.append(j)

    ctx.theta_u = theta
    return unlearn_report(ctx, curves, per_target)


def unlearn_report(ctx: RunContext, curves: dict, per_target: dict) -> MetricsReport:
    accuracy = ctx.accuracy(ctx.theta_u)
    pre, post = ctx.mia_pair(ctx.theta_u)
    logger.info(f"Post-unlearning: retained test accuracy {accuracy:.4f}, MIA rate {pre:.4f} -> {post:.4f}")
    return MetricsReport(
        name="unlearn",
        accuracy=accuracy,
        mia_rate_pre=pre,
        mia_rate_post=post,
        curves=curves,
        config={"unlearn": ctx.cfg.unlearn.model_dump(mode="json"), "variant": ctx.cfg.variant.value},
        extra={"targets": per_target, "drift": float(np.linalg.norm(ctx.theta_u - ctx.theta0))},
    )


def repair_phase(ctx: RunContext) -> MetricsReport:
    """Virtual-client repair rounds; the no_virtual variant skips them"""
    cfg = ctx.cfg
    if cfg.variant is Variant.NO_VIRTUAL:
        logger.info("Variant no_virtual: repair rounds skipped")
        ctx.virtuals = []
        ctx.repaired = None
        theta = ctx.theta_u
        curves, extra = {}, {"skipped": True}
    else:
        ctx.virtuals = [
            build_virtual_client(ctx.fed_state.client(j).shard, ctx.theta0, ctx.layout, cfg.virtual,
                                 isolated=cfg.isolated_nodes)
            for j in ctx.departed
        ]
        ctx.repaired = run_repair(ctx.fed_state, ctx.theta_u, ctx.virtuals, cfg.virtual.repair_rounds,
                                  cfg.federation, departed=ctx.departed)
        theta = ctx.repaired.global_params
        curves = {"rounds": list(ctx.repaired.history)}
        extra = {"skipped": False, "virtual": {str(v.client_id): v.provenance for v in ctx.virtuals}}

    accuracy = ctx.accuracy(theta)
    pre, post = ctx.mia_pair(theta)
    _, post_unlearn = ctx.mia_pair(ctx.theta_u)
    extra["mia_rebound"] = post - post_unlearn
    logger.info(f"Post-repair: retained test accuracy {accuracy:.4f}, MIA rate {post:.4f}")
    return MetricsReport(
        name="repair",
        accuracy=accuracy,
        mia_rate_pre=pre,
        mia_rate_post=post,
        curves=curves,
        config={"virtual": cfg.virtual.model_dump(mode="json"), "variant": cfg.variant.value},
        extra=extra,
    )


def retrain_phase(ctx: RunContext) -> MetricsReport:
    """Retrain-from-scratch oracle over the clients that stay"""
    state = retrain_oracle(ctx.fed_state.clients, ctx.layout, ctx.cfg.federation, exclude=ctx.targets)
    theta = state.global_params
    accuracy = ctx.accuracy(theta)
    pre, post = ctx.mia_pair(theta)
    logger.info(f"Retrain oracle: retained test accuracy {accuracy:.4f}, MIA rate {post:.4f}")
    return MetricsReport(
        name="retrain",
        accuracy=accuracy,
        mia_rate_pre=pre,
        mia_rate_post=post,
        curves={"rounds": list(state.history)},
        config={"federation": ctx.cfg.federation.model_dump(mode="json")},
        extra={"excluded": ctx.targets},
    )


def run_ablation(
    cfg: ExperimentConfig,
    variant: Variant,
    trained: Optional[RunContext] = None,
    dataset: Optional[Dataset] = None,
) -> MetricsReport:
    """
    Unlearn and repair with one component disabled.

    Args:
        cfg: experiment config; its variant is replaced by `variant`
        variant: full, no_gru (raw unlearning direction) or no_virtual (no repair)
        trained: context whose trained federation is reused
        dataset: preloaded dataset when no trained context is given

    Returns:
        MetricsReport with the final accuracy and the post-unlearning MIA rate
    """
    variant = Variant(variant)
    vcfg = cfg.with_override("variant", variant.value)
    if trained is not None and trained.fed_state is not None:
        ctx = trained.fork(vcfg)
    else:
        ctx = prepare_context(vcfg, dataset)
        train_phase(ctx)

    logger.info(f"Ablation variant: {variant.value}")
    unlearned = unlearn_phase(ctx)
    repaired = repair_phase(ctx)
    return MetricsReport(
        name=variant.value,
        accuracy=repaired.accuracy,
        mia_rate_pre=unlearned.mia_rate_pre,
        mia_rate_post=unlearned.mia_rate_post,
        curves={"epochs": unlearned.curves.get("epochs", []), "rounds": repaired.curves.get("rounds", [])},
        config={"variant": variant.value},
        extra={
            "accuracy_post_unlearn": unlearned.accuracy,
            "mia_rate_post_repair": repaired.mia_rate_post,
        },
    )

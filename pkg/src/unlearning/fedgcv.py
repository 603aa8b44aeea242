"""
Gradient-corrected unlearning of one departing client

Every epoch:
    Δ_u = -∇(npo + margin) on the departing client's train nodes
    Δ_r = Σ p'_i (w_i^local - θ) over retained clients (one local pass each)
    Δ̂_u = Δ_u - min(<Δ_u, Δ_r>, 0) / ‖Δ_r‖² · Δ_r
    θ  ← project_ball(θ + clip(η_u · s_f · Δ̂_u))
"""
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..analyzers.metrics import global_accuracy, global_loss
from ..analyzers.mia import MiaEvaluator
from ..config import TrainConfig, UnlearnConfig
from ..exceptions import EmptySplitError
from ..models import MiaThreshold, Split
from ..nn import GcnParams, ParamLayout, backward, gcn_forward
from .objectives import margin_from_logits, npo_from_logits, reference_log_probs

logger = logging.getLogger(__name__)

RETAIN_EPS = 1e-12


@dataclass(eq=False)
class UnlearnState:
    theta: np.ndarray
    theta0: np.ndarray       # anchor and NPO reference
    target_id: int
    threshold: MiaThreshold
    ref_logp: np.ndarray     # log p_ref(y) on the target train nodes
    epoch: int = 0

    @property
    def drift(self) -> float:
        return float(np.linalg.norm(self.theta - self.theta0))


@dataclass
class Correction:
    direction: np.ndarray
    dot: float
    corrected: bool
    degenerate_retain: bool = False


@dataclass
class EpochLog:
    epoch: int
    target_ce: float
    npo: float
    margin: float
    corrected: bool
    dot_ur: Optional[float]
    drift: float
    mia_rate: Optional[float] = None
    retain_acc: Optional[float] = None
    degenerate_retain: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class UnlearnResult:
    theta: np.ndarray
    state: UnlearnState
    log: list = field(default_factory=list)

    @property
    def records(self) -> list[dict]:
        return [entry.to_dict() for entry in self.log]


def start_unlearning(theta0: np.ndarray, target, layout: ParamLayout, threshold: MiaThreshold) -> UnlearnState:
    """State anchored at the trained global; the reference model is frozen here"""
    nodes = np.flatnonzero(target.inputs.train_mask)
    if nodes.size == 0:
        raise EmptySplitError(f"client {target.client_id} has no train nodes to unlearn")
    return UnlearnState(
        theta=np.array(theta0, dtype=np.float64),
        theta0=np.array(theta0, dtype=np.float64),
        target_id=target.client_id,
        threshold=threshold,
        ref_logp=reference_log_probs(theta0, layout, target.inputs, nodes),
    )


def unlearn_direction(
    state: UnlearnState,
    target,
    layout: ParamLayout,
    cfg: UnlearnConfig,
    dropout_seed: Optional[int] = None,
) -> tuple[np.ndarray, dict]:
    """
    Negative gradient of npo + margin at the current parameters.

    Returns:
        (Δ_u, {"npo": ..., "margin": ...})
    """
    inputs = target.inputs
    nodes = np.flatnonzero(inputs.train_mask)
    logits, cache = gcn_forward(GcnParams.unflatten(state.theta, layout), inputs,
                                dropout=cfg.dropout, dropout_seed=dropout_seed)
    npo, g_npo = npo_from_logits(logits, inputs.y, nodes, state.ref_logp, cfg.npo_beta)
    margin, g_margin, _ = margin_from_logits(logits, inputs.y, nodes, state.threshold.tau_pre,
                                             cfg.margin, cfg.margin_weight)
    grad = backward(cache, g_npo + g_margin).flatten()
    return -grad, {"npo": npo, "margin": margin}


def retain_direction(
    theta: np.ndarray,
    retain: Sequence,
    weights: np.ndarray,
    train_cfg: TrainConfig,
    layout: ParamLayout,
    epochs: int,
    round_index: int,
    seed: int,
) -> np.ndarray:
    """Weighted mean displacement of one short local training run per retained client"""
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    order = sorted(range(len(retain)), key=lambda i: retain[i].client_id)
    total = np.zeros_like(theta)
    for i in order:
        update = retain[i].train(theta, train_cfg, layout, round_index, seed, epochs=epochs)
        total += weights[i] * (update.params - theta)
    return total


def gradient_correct(delta_u: np.ndarray, delta_r: np.ndarray, eps: float = RETAIN_EPS) -> Correction:
    """
    Remove the component of Δ_u that opposes Δ_r.

    A non-negative inner product leaves Δ_u untouched (same object); a
    vanishing Δ_r is flagged and also passes Δ_u through.
    """
    dot = float(np.dot(delta_u, delta_r))
    norm_sq = float(np.dot(delta_r, delta_r))
    if np.sqrt(norm_sq) <= eps:
        return Correction(direction=delta_u, dot=dot, corrected=False, degenerate_retain=True)
    if dot >= 0.0:
        return Correction(direction=delta_u, dot=dot, corrected=False)
    return Correction(direction=delta_u - (dot / norm_sq) * delta_r, dot=dot, corrected=True)


def clip_and_project(step: np.ndarray, theta: np.ndarray, theta0: np.ndarray, c_max: float, tau: float) -> np.ndarray:
    """Clip the step to norm c_max, apply it, then project onto ‖θ - θ0‖ ≤ τ"""
    norm = float(np.linalg.norm(step))
    if norm > c_max:
        step = step * (c_max / norm)
    theta_new = theta + step
    offset = theta_new - theta0
    drift = float(np.linalg.norm(offset))
    if drift > tau:
        theta_new = theta0 + offset * (tau / drift)
    return theta_new


def unlearn_round(
    state: UnlearnState,
    target,
    retain: Sequence,
    retain_weights: np.ndarray,
    cfg: UnlearnConfig,
    train_cfg: TrainConfig,
    layout: ParamLayout,
    gradient_correction: Optional[bool] = None,
    evaluator: Optional[MiaEvaluator] = None,
) -> tuple[UnlearnState, EpochLog]:
    """One unlearning epoch; returns the new state and its log entry"""
    use_correction = cfg.gradient_correction if gradient_correction is None else gradient_correction
    rng = np.random.default_rng([cfg.seed, state.target_id, state.epoch])
    dropout_seed = int(rng.integers(2**63 - 1))

    delta_u, terms = unlearn_direction(state, target, layout, cfg, dropout_seed=dropout_seed)

    dot_ur = None
    corrected = degenerate = False
    direction = delta_u
    if use_correction and retain:
        delta_r = retain_direction(state.theta, retain, retain_weights, train_cfg, layout,
                                   epochs=cfg.retain_local_epochs, round_index=state.epoch,
                                   seed=cfg.seed)
        correction = gradient_correct(delta_u, delta_r)
        direction, dot_ur = correction.direction, correction.dot
        corrected, degenerate = correction.corrected, correction.degenerate_retain
        if degenerate:
            logger.warning(f"Epoch {state.epoch}: retain direction vanished; using the raw unlearning direction")

    theta = clip_and_project(cfg.lr * cfg.scale * direction, state.theta, state.theta0,
                             cfg.clip, cfg.drift_radius)
    new_state = replace(state, theta=theta, epoch=state.epoch + 1)

    entry = EpochLog(
        epoch=new_state.epoch,
        target_ce=global_loss(theta, layout, [target.inputs], Split.TRAIN),
        npo=terms["npo"],
        margin=terms["margin"],
        corrected=corrected,
        dot_ur=dot_ur,
        drift=new_state.drift,
        degenerate_retain=degenerate,
    )
    if evaluator is not None:
        entry.mia_rate = evaluator.rate(theta, state.threshold)
    if retain:
        try:
            entry.retain_acc = global_accuracy(theta, layout, [c.inputs for c in retain], Split.TEST)
        except EmptySplitError:
            pass
    logger.debug(
        f"Unlearn epoch {entry.epoch}: target_ce={entry.target_ce:.4f} npo={entry.npo:.4f} "
        f"margin={entry.margin:.4f} drift={entry.drift:.3f} corrected={entry.corrected}"
    )
    return new_state, entry


def run_unlearning(
    fed_state,
    target_id: int,
    cfg: UnlearnConfig,
    train_cfg: TrainConfig,
    threshold: MiaThreshold,
    evaluator: Optional[MiaEvaluator] = None,
    gradient_correction: Optional[bool] = None,
    start: Optional[np.ndarray] = None,
) -> UnlearnResult:
    """
    Run cfg.epochs unlearning epochs for client `target_id`.

    Args:
        fed_state: trained ServerState (clients, weights, layout, global)
        target_id: departing client
        cfg: unlearning hyperparameters
        train_cfg: local training settings used for the retain direction
        threshold: tau_pre fitted on the trained global
        evaluator: records the MIA rate per epoch when given
        gradient_correction: overrides cfg.gradient_correction
        start: anchor parameters (default: fed_state.global_params)

    Returns:
        UnlearnResult with the unlearned parameters and the per-epoch log
    """
    target = fed_state.client(target_id)
    retain_idx = [i for i, c in enumerate(fed_state.clients) if c.client_id != target_id]
    retain = [fed_state.clients[i] for i in retain_idx]
    weights = fed_state.weights[retain_idx] if retain_idx else np.zeros(0)

    theta0 = fed_state.global_params if start is None else start
    state = start_unlearning(theta0, target, fed_state.layout, threshold)
    logger.info(f"Unlearning client {target_id}: {cfg.epochs} epochs, {len(retain)} retained clients")

    log = []
    for _ in range(cfg.epochs):
        state, entry = unlearn_round(state, target, retain, weights, cfg, train_cfg, fed_state.layout,
                                     gradient_correction=gradient_correction, evaluator=evaluator)
        log.append(entry)

    if log:
        logger.info(f"Unlearning done: target_ce={log[-1].target_ce:.4f}, drift={log[-1].drift:.3f}, "
                    f"mia_rate={log[-1].mia_rate}")
    return UnlearnResult(theta=state.theta, state=state, log=log)

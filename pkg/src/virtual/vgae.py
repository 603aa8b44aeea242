"""
Variational graph autoencoder with hand-derived gradients

Encoder (no biases):
    H     = ReLU(Â X W0)
    μ     = Â H Wμ
    log σ² = Â H Wσ
    Z     = μ + σ ⊙ ε

Loss = BCE(σ(z_i·z_j)) over the entries of Ã = A + I against an equal
number of sampled non-edges, plus the KL term -0.5/n² Σ (1 + log σ² - μ² - σ²).
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from ..config import VirtualConfig
from ..exceptions import DivergenceError, ShapeError
from ..models import SparseGraph
from ..nn.optim import Adam
from ..processors.graph import normalized_adjacency

logger = logging.getLogger(__name__)

NEGATIVE_DRAW_FACTOR = 4


@dataclass(eq=False)
class VgaeParams:
    w0: np.ndarray    # d×h
    w_mu: np.ndarray  # h×z
    w_lv: np.ndarray  # h×z

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w0.ravel(), self.w_mu.ravel(), self.w_lv.ravel()])

    @classmethod
    def unflatten(cls, vec: np.ndarray, d: int, h: int, z: int) -> "VgaeParams":
        if vec.shape != (d * h + 2 * h * z,):
            raise ShapeError(f"VGAE vector has shape {vec.shape}, expected ({d * h + 2 * h * z},)")
        a, b = d * h, d * h + h * z
        return cls(w0=vec[:a].reshape(d, h), w_mu=vec[a:b].reshape(h, z), w_lv=vec[b:].reshape(h, z))

    @classmethod
    def glorot(cls, d: int, h: int, z: int, rng: np.random.Generator) -> "VgaeParams":
        def uniform(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(w0=uniform(d, h), w_mu=uniform(h, z), w_lv=uniform(h, z))


@dataclass(frozen=True, eq=False)
class VgaeInputs:
    a_hat: sp.csr_matrix
    ax: np.ndarray
    positives: np.ndarray  # (P, 2) pairs of Ã, self-pairs included
    adjacency: sp.csr_matrix

    @classmethod
    def from_graph(cls, graph: SparseGraph, x: np.ndarray) -> "VgaeInputs":
        a_hat = normalized_adjacency(graph)
        diag = np.repeat(np.arange(graph.n, dtype=np.int64)[:, None], 2, axis=1)
        return cls(
            a_hat=a_hat,
            ax=np.asarray(a_hat @ np.asarray(x, dtype=np.float64)),
            positives=np.concatenate([graph.edges, diag]),
            adjacency=graph.adjacency,
        )

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]


@dataclass(eq=False)
class VgaeModel:
    """Trained encoder plus the latent sample drawn from it"""
    params: VgaeParams
    mu: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    seed: int
    losses: list = field(default_factory=list)
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    auc: Optional[float] = None

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "z_dim": int(self.z.shape[1]),
            "hidden": int(self.params.w0.shape[1]),
            "epochs": len(self.losses),
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "auc": None if self.auc is None or np.isnan(self.auc) else self.auc,
        }


def sample_negatives(adjacency: sp.csr_matrix, count: int, rng: np.random.Generator) -> np.ndarray:
    """Up to `count` uniformly drawn off-diagonal non-edges"""
    n = adjacency.shape[0]
    if count == 0 or n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = rng.integers(n, size=(NEGATIVE_DRAW_FACTOR * count + 8, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    linked = np.asarray(adjacency[pairs[:, 0], pairs[:, 1]]).ravel() > 0
    return pairs[~linked][:count]


def encode(params: VgaeParams, inputs: VgaeInputs) -> tuple[np.ndarray, np.ndarray, dict]:
    pre = inputs.ax @ params.w0
    h = np.maximum(pre, 0.0)
    p = np.asarray(inputs.a_hat @ h)
    return p @ params.w_mu, p @ params.w_lv, {"pre": pre, "p": p}


def _pair_scores(z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])


def _scatter_pairs(dz: np.ndarray, z: np.ndarray, pairs: np.ndarray, g: np.ndarray) -> None:
    np.add.at(dz, pairs[:, 0], g[:, None] * z[pairs[:, 1]])
    np.add.at(dz, pairs[:, 1], g[:, None] * z[pairs[:, 0]])


def kl_term(mu: np.ndarray, logvar: np.ndarray) -> float:
    n = mu.shape[0]
    return float(-0.5 / n**2 * np.sum(1.0 + logvar - mu**2 - np.exp(logvar)))


def vgae_loss_and_grad(
    params: VgaeParams,
    inputs: VgaeInputs,
    eps: np.ndarray,
    negatives: np.ndarray,
) -> tuple[float, VgaeParams, dict]:
    """
    Loss and gradient for one fixed (ε, negatives) draw.

    Returns:
        (loss, gradient with the params' shapes, {"recon": ..., "kl": ...})
    """
    mu, logvar, cache = encode(params, inputs)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    n = inputs.n

    pos = inputs.positives
    s_pos = _pair_scores(z, pos)
    recon = float(-log_expit(s_pos).mean())
    dz = np.zeros_like(z)
    _scatter_pairs(dz, z, pos, -expit(-s_pos) / pos.shape[0])

    if negatives.size:
        s_neg = _pair_scores(z, negatives)
        recon += float(-log_expit(-s_neg).mean())
        _scatter_pairs(dz, z, negatives, expit(s_neg) / negatives.shape[0])

    kl = kl_term(mu, logvar)
    loss = recon + kl

    dmu = dz + mu / n**2
    dlv = dz * eps * 0.5 * sigma + 0.5 / n**2 * (np.exp(logvar) - 1.0)

    p = cache["p"]
    dp = dmu @ params.w_mu.T + dlv @ params.w_lv.T
    dh = np.asarray(inputs.a_hat @ dp)
    dpre = dh * (cache["pre"] > 0.0)
    grad = VgaeParams(w0=inputs.ax.T @ dpre, w_mu=p.T @ dmu, w_lv=p.T @ dlv)
    return loss, grad, {"recon": recon, "kl": kl}


def link_scores(z: np.ndarray, positives: np.ndarray, negatives: np.ndarray) -> float:
    """Ranking AUC of σ(z_i·z_j) for edges against non-edges; ties count half"""
    if positives.size == 0 or negatives.size == 0:
        return float("nan")
    scores = np.concatenate([_pair_scores(z, positives), _pair_scores(z, negatives)])
    ranks = rankdata(scores)
    n_pos, n_neg = len(positives), len(negatives)
    return float((ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def vgae_train(graph: SparseGraph, x: np.ndarray, cfg: VirtualConfig, seed: Optional[int] = None) -> VgaeModel:
    """
    Train the VGAE with Adam for cfg.vgae_epochs steps, one ε and one
    negative draw per step.

    Raises:
        DivergenceError: the loss becomes non-finite
    """
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, 0])
    inputs = VgaeInputs.from_graph(graph, x)
    d, n = inputs.ax.shape[1], inputs.n
    params = VgaeParams.glorot(d, cfg.hidden, cfg.z_dim, rng)
    theta = params.flatten()

    # fixed draw so the first and last losses are comparable
    eval_rng = np.random.default_rng([seed, 1])
    eval_eps = eval_rng.standard_normal((n, cfg.z_dim))
    eval_neg = sample_negatives(inputs.adjacency, len(inputs.positives), eval_rng)

    def evaluate(vec):
        loss, _, _ = vgae_loss_and_grad(VgaeParams.unflatten(vec, d, cfg.hidden, cfg.z_dim), inputs, eval_eps, eval_neg)
        return loss

    initial = evaluate(theta)
    optimizer = Adam(cfg.vgae_lr)
    losses = []
    for epoch in range(cfg.vgae_epochs):
        eps = rng.standard_normal((n, cfg.z_dim))
        negatives = sample_negatives(inputs.adjacency, len(inputs.positives), rng)
        loss, grad, _ = vgae_loss_and_grad(VgaeParams.unflatten(theta, d, cfg.hidden, cfg.z_dim), inputs, eps, negatives)
        if not np.isfinite(loss):
            raise DivergenceError(f"VGAE loss became non-finite at epoch {epoch}")
        losses.append(loss)
        theta = optimizer.step(theta, grad.flatten())

    final = evaluate(theta)
    if not np.isfinite(final):
        raise DivergenceError("VGAE loss became non-finite after training")

    params = VgaeParams.unflatten(theta, d, cfg.hidden, cfg.z_dim)
    mu, logvar, _ = encode(params, inputs)
    eps = np.random.default_rng([seed, 2]).standard_normal(mu.shape)
    z = mu + np.exp(0.5 * logvar) * eps

    model = VgaeModel(params=params, mu=mu, logvar=logvar, eps=eps, z=z, seed=seed,
                      losses=losses, initial_loss=initial, final_loss=final)
    model.auc = link_scores(mu, graph.edges, eval_neg)
    logger.info(f"VGAE trained on {n} nodes: loss {initial:.4f} -> {final:.4f}, link AUC {model.auc:.3f}")
    return model

"""
Virtual client synthesis and post-unlearning repair

The departing client computes everything that touches its raw subgraph:
the low-frequency spectral profile of its normalized Laplacian, a VGAE
latent sample projected onto that subspace, the thresholded synthetic
adjacency and per-feature statistics. Only a VirtualUpload crosses to the
server, which labels the synthetic nodes with the pre-unlearning model and
hosts the result as an extra client during repair rounds.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from ..config import FedConfig, VirtualConfig
from ..exceptions import PrivacyError, ShapeError
from ..federation import FederatedClient, ServerState, init_server, run_rounds
from ..models import ClientShard, Dataset, FeatureStats, IsolatedNodePolicy, SparseGraph, SpectralProfile, SynthGraph
from ..nn import GraphInputs, ParamLayout, predict
from ..processors import normalized_adjacency, normalized_laplacian, smallest_eigenpairs
from .vgae import vgae_train

logger = logging.getLogger(__name__)

DEFAULT_MAX_K = 32
RESAMPLE_ATTEMPTS = 10


def default_k(n: int) -> int:
    return max(1, min(DEFAULT_MAX_K, n - 1))


def extract_spectral_profile(
    graph: SparseGraph,
    k: int,
    isolated: IsolatedNodePolicy = IsolatedNodePolicy.ZERO,
    seed: int = 0,
) -> SpectralProfile:
    """k smallest eigenpairs of the graph's normalized Laplacian"""
    if k > graph.n:
        raise ShapeError(f"k={k} exceeds the shard's {graph.n} nodes")
    return smallest_eigenpairs(normalized_laplacian(graph, isolated), k, seed=seed)


def project_latent(z: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """U Uᵀ Z for a column-orthonormal U"""
    if basis.ndim != 2 or z.ndim != 2 or basis.shape[0] != z.shape[0]:
        raise ShapeError(f"basis {basis.shape} and latent {z.shape} disagree")
    return basis @ (basis.T @ z)


def edge_probabilities(z_proj: np.ndarray) -> np.ndarray:
    return expit(z_proj @ z_proj.T)


def decode_adjacency(z_proj: np.ndarray, gamma: float) -> np.ndarray:
    """Symmetric 0/1 matrix with A[i][j] = 1 iff σ(z_i·z_j) > γ and i ≠ j"""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    upper = np.triu(edge_probabilities(z_proj) > gamma, k=1)
    return (upper | upper.T).astype(np.int8)


def match_edge_threshold(z_proj: np.ndarray, target_edges: int) -> float:
    """
    Threshold whose decoded graph keeps the `target_edges` most probable pairs.

    The result lies strictly inside (0, 1); probability ties at the cut can
    make the decoded edge count differ from the target.
    """
    n = z_proj.shape[0]
    probs = edge_probabilities(z_proj)[np.triu_indices(n, k=1)]
    if probs.size == 0:
        return 0.5
    ranked = np.sort(probs)[::-1]
    if target_edges <= 0:
        gamma = ranked[0]
    elif target_edges >= ranked.size:
        gamma = 0.5 * ranked[-1]
    else:
        gamma = 0.5 * (ranked[target_edges - 1] + ranked[target_edges])
    return float(np.clip(gamma, 1e-9, 1.0 - 1e-9))


def synthesize_features(
    stats: FeatureStats,
    n: int,
    seed: int,
    forbidden: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Rows drawn i.i.d. as μ + σ⊙ε1 + σ_x·ε2.

    Rows that exactly reproduce a forbidden (raw) row are redrawn.

    Raises:
        PrivacyError: a raw row is still reproduced after repeated redraws
    """
    rng = np.random.default_rng(seed)
    d = stats.mu.shape[0]

    def draw(count):
        return stats.mu + stats.sigma * rng.standard_normal((count, d)) + stats.noise_std * rng.standard_normal((count, d))

    x = draw(n)
    if forbidden is None or forbidden.size == 0:
        return x

    raw_rows = {np.ascontiguousarray(row).tobytes() for row in np.asarray(forbidden, dtype=np.float64)}

    def collisions():
        return np.array([i for i in range(n) if np.ascontiguousarray(x[i]).tobytes() in raw_rows], dtype=np.int64)

    hits = collisions()
    for _ in range(RESAMPLE_ATTEMPTS):
        if hits.size == 0:
            return x
        x[hits] = draw(hits.size)
        hits = collisions()
    if hits.size:
        raise PrivacyError(f"{hits.size} synthetic feature rows reproduce raw rows of the departed client")
    return x


@dataclass(frozen=True, eq=False)
class VirtualUpload:
    """Everything the departing client releases; raw X and A are not part of it"""
    client_id: int
    synth: SynthGraph
    stats: FeatureStats
    eigenvalues: np.ndarray
    provenance: dict = field(default_factory=dict)


def prepare_virtual_upload(
    shard: ClientShard,
    cfg: VirtualConfig,
    isolated: IsolatedNodePolicy = IsolatedNodePolicy.ZERO,
) -> VirtualUpload:
    """Client-side synthesis from the departing shard"""
    ds = shard.local
    n = ds.n
    k = default_k(n) if cfg.k is None else min(cfg.k, n)
    seed = cfg.seed

    profile = extract_spectral_profile(ds.graph, k, isolated=isolated, seed=seed)
    model = vgae_train(ds.graph, ds.x, cfg, seed=seed)
    z_proj = project_latent(model.z, profile.eigenvectors)

    gamma = match_edge_threshold(z_proj, ds.graph.num_edges) if cfg.match_edge_count else cfg.gamma
    adjacency = decode_adjacency(z_proj, gamma)
    rows, cols = np.nonzero(np.triu(adjacency, k=1))
    graph = SparseGraph.from_edges(n, np.stack([rows, cols], axis=1))

    stats = FeatureStats.from_features(ds.x, cfg.sigma_x)
    x_syn = synthesize_features(stats, n, seed=seed + 1, forbidden=ds.x)

    provenance = {
        "k": k,
        "gamma": gamma,
        "sigma_x": cfg.sigma_x,
        "seeds": {"spectral": seed, "vgae": model.seed, "features": seed + 1},
        "vgae": model.summary(),
        "edges": {"original": ds.graph.num_edges, "synthetic": graph.num_edges},
    }
    logger.info(
        f"Client {shard.client_id} synthesized {n} virtual nodes: k={k}, gamma={gamma:.4f}, "
        f"edges {ds.graph.num_edges} -> {graph.num_edges}"
    )
    return VirtualUpload(
        client_id=shard.client_id,
        synth=SynthGraph(graph=graph, x=x_syn, provenance=provenance),
        stats=stats,
        eigenvalues=profile.eigenvalues,
        provenance=provenance,
    )


def spectral_deviation(upload: VirtualUpload, isolated: IsolatedNodePolicy = IsolatedNodePolicy.ZERO) -> float:
    """Mean absolute gap between released and synthetic low eigenvalues"""
    k = upload.eigenvalues.size
    synthetic = extract_spectral_profile(upload.synth.graph, k, isolated=isolated)
    return float(np.mean(np.abs(synthetic.eigenvalues - upload.eigenvalues)))


def host_virtual_client(upload: VirtualUpload, theta0: np.ndarray, layout: ParamLayout, num_classes: int) -> ClientShard:
    """
    Server-side wrapping: pseudo-labels from the pre-unlearning model and a
    full train mask.
    """
    synth = upload.synth
    n = synth.graph.n
    inputs = GraphInputs.from_arrays(normalized_adjacency(synth.graph), synth.x)
    labels = predict(theta0, layout, inputs)
    local = Dataset(
        graph=synth.graph,
        x=synth.x,
        y=labels.astype(np.int64),
        train_mask=np.ones(n, dtype=bool),
        val_mask=np.zeros(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        num_classes=num_classes,
    )
    local.validate(require_all_classes=False)
    return ClientShard(
        client_id=upload.client_id,
        global_ids=np.full(n, -1, dtype=np.int64),
        local=local,
        is_virtual=True,
        provenance=dict(upload.provenance),
    )


def build_virtual_client(
    shard: ClientShard,
    theta0: np.ndarray,
    layout: ParamLayout,
    cfg: VirtualConfig,
    isolated: IsolatedNodePolicy = IsolatedNodePolicy.ZERO,
) -> ClientShard:
    """Synthesize on the departing client, then host the result on the server"""
    upload = prepare_virtual_upload(shard, cfg, isolated=isolated)
    virtual = host_virtual_client(upload, theta0, layout, shard.local.num_classes)
    virtual.provenance["spectral_deviation"] = spectral_deviation(upload, isolated)
    return virtual


def run_repair(
    fed_state: ServerState,
    theta_u: np.ndarray,
    virtuals: Sequence[ClientShard],
    rounds: int,
    cfg: FedConfig,
    departed: Optional[Sequence[int]] = None,
) -> ServerState:
    """
    Extra FedAvg rounds from θ_u over the retained clients plus the virtual ones.

    Args:
        fed_state: trained ServerState holding every original client
        theta_u: unlearned parameters
        virtuals: hosted virtual shards (empty runs retained clients only)
        rounds: R_v
        cfg: federation settings
        departed: client ids that have left (default: the virtual shards' ids)

    Returns:
        ServerState after the repair rounds; its weights are recomputed by
        node count over the new client set
    """
    departed = set(v.client_id for v in virtuals) if departed is None else set(departed)
    clients = [c for c in fed_state.clients if c.client_id not in departed]
    clients += [FederatedClient.from_shard(v) for v in virtuals]

    state = init_server(clients, fed_state.layout, start=theta_u, rule=cfg.weight_rule, seed=cfg.seed)
    state.round = fed_state.round
    logger.info(f"Repair: {rounds} rounds over {len(clients)} clients ({len(virtuals)} virtual)")
    return run_rounds(state, cfg, rounds)

"""
Virtual client: VGAE, spectral synthesis of a replacement shard, repair rounds
"""
from .synthesis import (
    VirtualUpload,
    build_virtual_client,
    decode_adjacency,
    default_k,
    extract_spectral_profile,
    host_virtual_client,
    match_edge_threshold,
    prepare_virtual_upload,
    project_latent,
    run_repair,
    spectral_deviation,
    synthesize_features,
)
from .vgae import VgaeInputs, VgaeModel, VgaeParams, kl_term, link_scores, vgae_loss_and_grad, vgae_train

__all__ = [
    "VgaeParams",
    "VgaeInputs",
    "VgaeModel",
    "vgae_loss_and_grad",
    "vgae_train",
    "kl_term",
    "link_scores",
    "default_k",
    "extract_spectral_profile",
    "project_latent",
    "decode_adjacency",
    "match_edge_threshold",
    "synthesize_features",
    "VirtualUpload",
    "prepare_virtual_upload",
    "host_virtual_client",
    "spectral_deviation",
    "build_virtual_client",
    "run_repair",
]

"""
FedGCV

Graph federated unlearning simulator: FedAvg over GCN client shards,
gradient-corrected NPO unlearning of a departing client, and virtual-client
repair rounds, with a fixed-threshold membership-inference evaluation.
"""

__version__ = "0.1.0"

"""
Result emission: JSON report and CSV tables for plotting
"""
from .results import curves_frame, emit_results, metrics_frame, to_json, write_atomic, write_jsonl

__all__ = ["emit_results", "metrics_frame", "curves_frame", "to_json", "write_atomic", "write_jsonl"]

"""
Loss-threshold membership inference with a frozen pre-unlearning threshold

A node is predicted "member" when its cross-entropy under the model is
below tau_pre. The threshold is fitted once on the pre-unlearning model by
maximizing balanced accuracy between the departing client's train nodes
(members) and retained clients' test nodes (non-members), then reused for
every later model.
"""
import logging
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import ks_2samp

from ..exceptions import EmptySplitError
from ..models import ClientShard, MiaSets, MiaThreshold, NodeSelection
from ..nn import GraphInputs, ParamLayout, node_losses

logger = logging.getLogger(__name__)

# two-sample KS p-value above which the loss distributions count as indistinguishable
CHANCE_PVALUE = 0.05


def build_mia_sets(target: ClientShard, retain: Sequence[ClientShard]) -> MiaSets:
    """
    Members: target train nodes. Non-members: retained clients' test nodes.

    Raises:
        EmptySplitError: either side would be empty
    """
    members = np.flatnonzero(target.local.train_mask)
    if members.size == 0:
        raise EmptySplitError(f"client {target.client_id} has no train nodes to attack")

    nonmembers = []
    for shard in sorted(retain, key=lambda s: s.client_id):
        if shard.client_id == target.client_id:
            continue
        idx = np.flatnonzero(shard.local.test_mask)
        if idx.size:
            nonmembers.append(NodeSelection(shard.client_id, tuple(idx.tolist())))
    if not nonmembers:
        raise EmptySplitError("retained clients hold no test nodes to use as non-members")

    return MiaSets(
        members=NodeSelection(target.client_id, tuple(members.tolist())),
        nonmembers=tuple(nonmembers),
    )


def _balanced_scores(members: np.ndarray, nonmembers: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """
    2·|M|·|N| × balanced accuracy at each candidate, as exact integers.
    """
    m_sorted = np.sort(members)
    n_sorted = np.sort(nonmembers)
    members_below = np.searchsorted(m_sorted, candidates, side="left")
    nonmembers_at_or_above = n_sorted.size - np.searchsorted(n_sorted, candidates, side="left")
    return n_sorted.size * members_below.astype(np.int64) + m_sorted.size * nonmembers_at_or_above.astype(np.int64)


def fit_threshold(member_losses, nonmember_losses) -> MiaThreshold:
    """
    Threshold maximizing balanced accuracy over midpoints of the sorted union.

    Ties go to the smaller threshold. When every loss is identical the
    threshold is that value. Either way the result is flagged degenerate when
    a two-sample KS test cannot tell the two loss samples apart.
    """
    members = np.asarray(member_losses, dtype=np.float64)
    nonmembers = np.asarray(nonmember_losses, dtype=np.float64)
    if members.size == 0 or nonmembers.size == 0:
        raise EmptySplitError("both member and non-member losses are required")

    values = np.unique(np.concatenate([members, nonmembers]))
    if values.size == 1:
        logger.warning(f"All {members.size + nonmembers.size} MIA losses equal {values[0]:.6g}; threshold is degenerate")
        return MiaThreshold.summarize(values[0], members, nonmembers, 0.5, 0.5, degenerate=True)

    candidates = 0.5 * (values[:-1] + values[1:])
    scores = _balanced_scores(members, nonmembers, candidates)
    total = 2 * members.size * nonmembers.size
    best = int(np.argmax(scores))  # first maximum = smallest threshold
    balanced = scores[best] / total
    separability = max(int(scores.max()), total - int(scores.min())) / total

    pvalue = float(ks_2samp(members, nonmembers).pvalue)
    degenerate = pvalue > CHANCE_PVALUE
    if degenerate:
        logger.warning(f"MIA losses indistinguishable (KS p={pvalue:.3g}); balanced accuracy {balanced:.4f} is near chance")

    logger.debug(f"MIA threshold {candidates[best]:.6g}: balanced accuracy {balanced:.4f}")
    return MiaThreshold.summarize(candidates[best], members, nonmembers, balanced, separability,
                                  degenerate=degenerate)


def mia_rate(member_losses, thr: MiaThreshold) -> float:
    """Fraction of member losses strictly below the frozen threshold"""
    losses = np.asarray(member_losses, dtype=np.float64)
    if losses.size == 0:
        raise EmptySplitError("no member losses")
    return float(np.count_nonzero(losses < thr.tau_pre) / losses.size)


class MiaEvaluator:
    """Binds MIA sets to the graphs their node ids refer to"""

    def __init__(self, sets: MiaSets, graphs: Mapping[int, GraphInputs], layout: ParamLayout):
        self.sets = sets
        self.graphs = dict(graphs)
        self.layout = layout

    def _losses(self, theta: np.ndarray, selection: NodeSelection) -> np.ndarray:
        return node_losses(theta, self.layout, self.graphs[selection.client_id], selection.nodes)

    def member_losses(self, theta: np.ndarray) -> np.ndarray:
        return self._losses(theta, self.sets.members)

    def nonmember_losses(self, theta: np.ndarray) -> np.ndarray:
        return np.concatenate([self._losses(theta, sel) for sel in self.sets.nonmembers])

    def fit(self, theta_pre: np.ndarray) -> MiaThreshold:
        thr = fit_threshold(self.member_losses(theta_pre), self.nonmember_losses(theta_pre))
        logger.info(
            f"Fitted tau_pre={thr.tau_pre:.4f} on {len(self.sets.members.nodes)} members / "
            f"{thr.nonmember_summary['count']} non-members (balanced accuracy {thr.balanced_accuracy:.3f})"
        )
        return thr

    def rate(self, theta: np.ndarray, thr: MiaThreshold) -> float:
        return mia_rate(self.member_losses(theta), thr)

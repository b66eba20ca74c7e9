"""Channel pruning driven by batch-norm scale magnitudes.

All BN gammas in the image trunk are ranked globally by absolute value and
the smallest fraction is marked for pruning.  Mid-block channels (the BN
between the two 3x3 convolutions) can be removed physically; block-input
and final-BN channels feed layers that are shared with unprunable convs,
so they are only ever pseudo-pruned through the {0,1} channel-select
masks.  Masked and physically sliced variants of the same plan compute
identical outputs, which the tests rely on.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptyReportError,
    NoBatchNormError,
    PlanModelMismatchError,
    RateOutOfRangeError,
)
from .net.model import FusionModel
from .net.train import TrainConfig, predict, pair_targets, train


@dataclass(frozen=True)
class PruneLayer:
    layer_id: str
    channels: int
    removable: bool


@dataclass(frozen=True)
class PrunePlan:
    rate: float
    threshold: float
    keep: dict  # layer_id -> bool array of kept channels
    layers: tuple  # PruneLayer inventory the plan was derived from

    @property
    def pruned_channels(self):
        return int(sum((~mask).sum() for mask in self.keep.values()))

    @property
    def total_channels(self):
        return int(sum(layer.channels for layer in self.layers))


def inventory(model: FusionModel):
    """Prunable BN layers with their select gates, trunk order."""
    out = []
    for i, blk in enumerate(model.blocks):
        out.append((f"block{i}.bn1", blk.bn1, blk.sel1, False))
        out.append((f"block{i}.bn2", blk.bn2, blk.sel2, True))
    out.append(("final_bn", model.final_bn, model.final_sel, False))
    return out


def rank_channels(model: FusionModel):
    """(abs gamma, layer_id, channel) ascending; ties keep trunk order."""
    inv = inventory(model)
    if not inv:
        raise NoBatchNormError("model has no prunable batch-norm layers")
    entries = []
    for order, (layer_id, bn, _sel, _removable) in enumerate(inv):
        for ch, gamma in enumerate(bn.gamma.data):
            entries.append((abs(float(gamma)), order, ch, layer_id))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    return entries


def make_plan(model: FusionModel, rate):
    """Mark the floor(rate * total) globally smallest gammas for pruning,
    but always keep at least one channel in every layer."""
    if not 0.0 <= rate < 1.0:
        raise RateOutOfRangeError(f"prune rate must be in [0, 1), got {rate}")
    inv = inventory(model)
    entries = rank_channels(model)
    n_prune = math.floor(rate * len(entries))
    keep = {layer_id: np.ones(bn.gamma.data.size, dtype=bool)
            for layer_id, bn, _s, _r in inv}
    threshold = 0.0
    for score, _order, ch, layer_id in entries[:n_prune]:
        mask = keep[layer_id]
        if mask.sum() <= 1:
            continue  # never empty a layer
        mask[ch] = False
        threshold = score
    layers = tuple(
        PruneLayer(layer_id, bn.gamma.data.size, removable)
        for layer_id, bn, _s, removable in inv
    )
    return PrunePlan(rate=float(rate), threshold=threshold, keep=dict(keep),
                     layers=layers)


def _check_plan(model: FusionModel, plan: PrunePlan):
    inv = inventory(model)
    current = tuple(
        PruneLayer(layer_id, bn.gamma.data.size, removable)
        for layer_id, bn, _s, removable in inv
    )
    if current != plan.layers:
        raise PlanModelMismatchError(
            "plan was derived from a different model layout"
        )


def apply_plan(model: FusionModel, plan: PrunePlan, physical=True):
    """Return a pruned copy.  physical=False applies every keep mask through
    the channel-select gates; physical=True additionally slices the
    removable mid-block channels out of the surrounding convolutions."""
    _check_plan(model, plan)
    pruned = copy.deepcopy(model)
    for i, blk in enumerate(pruned.blocks):
        blk.sel1.mask = blk.sel1.mask * plan.keep[f"block{i}.bn1"]
        mid_keep = plan.keep[f"block{i}.bn2"]
        if physical:
            blk.conv1.weight.data = blk.conv1.weight.data[mid_keep]
            blk.conv1.out_ch = int(mid_keep.sum())
            blk.bn2.gamma.data = blk.bn2.gamma.data[mid_keep]
            blk.bn2.beta.data = blk.bn2.beta.data[mid_keep]
            blk.bn2.running_mean = blk.bn2.running_mean[mid_keep]
            blk.bn2.running_var = blk.bn2.running_var[mid_keep]
            blk.bn2.channels = int(mid_keep.sum())
            blk.sel2.mask = blk.sel2.mask[mid_keep]
            blk.conv2.weight.data = blk.conv2.weight.data[:, mid_keep]
            blk.conv2.in_ch = int(mid_keep.sum())
        else:
            blk.sel2.mask = blk.sel2.mask * mid_keep
    pruned.final_sel.mask = pruned.final_sel.mask * plan.keep["final_bn"]
    if physical:
        new_blocks = tuple(
            (int(plan.keep[f"block{i}.bn2"].sum()), out)
            for i, (_mid, out) in enumerate(model.config.block_channels)
        )
        pruned.config = replace(model.config, block_channels=new_blocks)
    return pruned


def selector_index(accuracy_pct, rate_pct, normalized=False):
    """Combined retention/compression score; higher is better.  Inputs are
    in percent.  normalized rescales into [0, 1] by the score of a perfect
    (100, 100) corner."""
    value = math.hypot(accuracy_pct, rate_pct)
    if normalized:
        value /= math.hypot(100.0, 100.0)
    return value


def accuracy_on(model, pairs, loss_mode="binary"):
    targets = pair_targets(pairs, loss_mode)
    preds = predict(model, pairs, loss_mode)
    return float((preds == targets).mean()) if len(pairs) else 0.0


def sweep(model, train_pairs, test_pairs, rates, base_config: TrainConfig,
          finetune_epochs=2, normalized=False):
    """Prune at each rate, fine-tune at a tenth of the base learning rate,
    and report accuracy before and after."""
    rows = []
    for rate in rates:
        plan = make_plan(model, rate)
        pruned = apply_plan(model, plan, physical=True)
        acc_before = accuracy_on(pruned, test_pairs, base_config.loss_mode)
        if finetune_epochs > 0 and rate > 0:
            tune_cfg = replace(
                base_config,
                epochs=finetune_epochs,
                initial_lr=base_config.initial_lr * 0.1,
                seed=base_config.seed + 1,
            )
            train(pruned, train_pairs, tune_cfg)
        acc_after = accuracy_on(pruned, test_pairs, base_config.loss_mode)
        rows.append({
            "rate": float(rate),
            "pruned_channels": plan.pruned_channels,
            "total_channels": plan.total_channels,
            "accuracy_before": acc_before,
            "accuracy_after": acc_after,
            "selector": selector_index(acc_after * 100.0, rate * 100.0,
                                       normalized=normalized),
        })
    return rows


def select_optimal(rows):
    """Row with the highest selector; ties prefer the higher prune rate."""
    if not rows:
        raise EmptyReportError("cannot select from an empty prune report")
    return max(rows, key=lambda r: (r["selector"], r["rate"]))

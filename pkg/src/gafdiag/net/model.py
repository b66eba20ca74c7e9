"""Dual-input fusion classifier.

An image trunk (stem conv, max pool, three pre-activation residual blocks,
final BN) feeds two heads: a global max pool and a dropout + width-pool
feature transformer.  A small 1-D conv stack embeds the raw series.  The
three feature vectors are concatenated and a single linear layer produces
the logits.  Branches can be disabled by name, which zeroes their slice of
the fused vector, so ablation needs no retraining-time surgery.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import CheckpointError, ShapeMismatchError
from ..util import atomic_write_bytes, derive_rng
from .layers import (
    BatchNorm1d,
    BatchNorm2d,
    ChannelDrop,
    ChannelSelect,
    Conv1d,
    Conv2d,
    Linear,
    MaxPool2d,
    MaxReduce,
    ReLU,
)

BRANCH_NAMES = ("series", "global", "transformer")
CHECKPOINT_MAGIC = b"GFD1"

# stem stride 2, pool 2, then one stride-2 block per stage
TRUNK_DOWNSCALE = 32


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    series_len: int = 64
    series_channels: int = 8
    stem_channels: int = 16
    block_channels: tuple = ((16, 16), (32, 32), (64, 64))
    n_classes: int = 1
    keep_rate: float = 0.9
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.image_size % TRUNK_DOWNSCALE:
            raise ShapeMismatchError(
                f"image_size must be a multiple of {TRUNK_DOWNSCALE}"
            )
        object.__setattr__(
            self,
            "block_channels",
            tuple((int(m), int(o)) for m, o in self.block_channels),
        )

    @property
    def feature_width(self):
        return self.image_size // TRUNK_DOWNSCALE

    @property
    def image_channels(self):
        return self.block_channels[-1][1]

    @property
    def fused_features(self):
        w = self.feature_width
        return self.series_channels + self.image_channels * (1 + w)

    @classmethod
    def standard(cls, image_size=64, series_len=128, series_channels=64,
                 image_channels=64, n_classes=1, keep_rate=0.9):
        quarter = max(2, image_channels // 4)
        half = max(2, image_channels // 2)
        return cls(
            image_size=image_size,
            series_len=series_len,
            series_channels=series_channels,
            stem_channels=quarter,
            block_channels=((quarter, quarter), (half, half),
                            (image_channels, image_channels)),
            n_classes=n_classes,
            keep_rate=keep_rate,
        )


class ResidualBlock:
    """Pre-activation residual block: BN-select-ReLU-conv twice, plus a
    1x1 strided shortcut conv from the block input."""

    def __init__(self, in_ch, mid_ch, out_ch, stride, eps, momentum, rng):
        self.bn1 = BatchNorm2d(in_ch, eps, momentum)
        self.sel1 = ChannelSelect(in_ch)
        self.relu1 = ReLU()
        self.conv1 = Conv2d(in_ch, mid_ch, 3, stride=stride, padding=1,
                            bias=False, rng=rng)
        self.bn2 = BatchNorm2d(mid_ch, eps, momentum)
        self.sel2 = ChannelSelect(mid_ch)
        self.relu2 = ReLU()
        self.conv2 = Conv2d(mid_ch, out_ch, 3, stride=1, padding=1,
                            bias=True, rng=rng)
        self.shortcut = Conv2d(in_ch, out_ch, 1, stride=stride, padding=0,
                               bias=True, rng=rng)

    def forward(self, x, train=False):
        h = self.bn1.forward(x, train)
        h = self.sel1.forward(h, train)
        h = self.relu1.forward(h, train)
        h = self.conv1.forward(h, train)
        h = self.bn2.forward(h, train)
        h = self.sel2.forward(h, train)
        h = self.relu2.forward(h, train)
        h = self.conv2.forward(h, train)
        return h + self.shortcut.forward(x, train)

    def backward(self, grad):
        h = self.conv2.backward(grad)
        h = self.relu2.backward(h)
        h = self.sel2.backward(h)
        h = self.bn2.backward(h)
        h = self.conv1.backward(h)
        h = self.relu1.backward(h)
        h = self.sel1.backward(h)
        h = self.bn1.backward(h)
        return h + self.shortcut.backward(grad)


class FusionModel:
    def __init__(self, config: ModelConfig, seed=0):
        self.config = config
        self.disabled = frozenset()
        rng = derive_rng(seed, "init")
        c = config
        self.stem = Conv2d(1, c.stem_channels, 3, stride=2, padding=1,
                           bias=True, rng=rng)
        self.pool = MaxPool2d()
        self.blocks = []
        in_ch = c.stem_channels
        for mid, out in c.block_channels:
            self.blocks.append(
                ResidualBlock(in_ch, mid, out, 2, c.bn_eps, c.bn_momentum, rng)
            )
            in_ch = out
        self.final_bn = BatchNorm2d(in_ch, c.bn_eps, c.bn_momentum)
        self.final_sel = ChannelSelect(in_ch)
        self.final_relu = ReLU()
        self.global_reduce_w = MaxReduce(axis=-1)
        self.global_reduce_h = MaxReduce(axis=-1)
        self.drop = ChannelDrop(c.keep_rate)
        self.trans_reduce = MaxReduce(axis=-1)
        cs = c.series_channels
        self.series_convs = [
            Conv1d(1, cs, 7, padding=3, rng=rng),
            Conv1d(cs, cs, 3, padding=1, rng=rng),
            Conv1d(cs, cs, 1, rng=rng),
            Conv1d(cs, cs, 1, rng=rng),
        ]
        self.series_bns = [BatchNorm1d(cs, c.bn_eps, c.bn_momentum)
                           for _ in range(3)]
        self.series_relus = [ReLU() for _ in range(3)]
        self.series_reduce = MaxReduce(axis=-1)
        self.fusion = Linear(c.fused_features, c.n_classes, rng=rng)

    # --- wiring -----------------------------------------------------------

    def set_disabled(self, names):
        names = frozenset(names)
        unknown = names - set(BRANCH_NAMES)
        if unknown:
            raise ShapeMismatchError(f"unknown branch names: {sorted(unknown)}")
        self.disabled = names

    def _need_trunk(self):
        return "global" not in self.disabled or "transformer" not in self.disabled

    def _check_inputs(self, series, images):
        c = self.config
        if series.ndim != 3 or series.shape[1] != 1 or series.shape[2] != c.series_len:
            raise ShapeMismatchError(
                f"series batch must be (B, 1, {c.series_len}), got {series.shape}"
            )
        if (images.ndim != 4 or images.shape[1] != 1
                or images.shape[2:] != (c.image_size, c.image_size)):
            raise ShapeMismatchError(
                f"image batch must be (B, 1, {c.image_size}, {c.image_size}),"
                f" got {images.shape}"
            )
        if series.shape[0] != images.shape[0]:
            raise ShapeMismatchError("series and image batch sizes differ")

    def _trunk(self, images, train):
        t = self.stem.forward(images, train)
        t = self.pool.forward(t, train)
        for block in self.blocks:
            t = block.forward(t, train)
        t = self.final_bn.forward(t, train)
        t = self.final_sel.forward(t, train)
        return self.final_relu.forward(t, train)

    def _series_branch(self, series, train):
        h = series
        for conv, bn, relu in zip(self.series_convs[:-1], self.series_bns,
                                  self.series_relus):
            h = relu.forward(bn.forward(conv.forward(h, train), train), train)
        h = self.series_convs[-1].forward(h, train)
        return self.series_reduce.forward(h, train)

    def forward(self, series, images, train=False, rng=None):
        series = np.asarray(series, dtype=np.float64)
        images = np.asarray(images, dtype=np.float64)
        self._check_inputs(series, images)
        c = self.config
        b = series.shape[0]
        w = c.feature_width
        if "series" in self.disabled:
            series_vec = np.zeros((b, c.series_channels))
        else:
            series_vec = self._series_branch(series, train)
        if self._need_trunk():
            feat = self._trunk(images, train)
        if "global" in self.disabled:
            global_vec = np.zeros((b, c.image_channels))
        else:
            g = self.global_reduce_w.forward(feat, train)
            global_vec = self.global_reduce_h.forward(g, train)
        if "transformer" in self.disabled:
            trans_vec = np.zeros((b, c.image_channels * w))
        else:
            d = self.drop.forward(feat, train, rng=rng)
            trans_vec = self.trans_reduce.forward(d, train).reshape(b, -1)
        fused = np.concatenate([series_vec, global_vec, trans_vec], axis=1)
        return self.fusion.forward(fused, train)

    def backward(self, dlogits):
        c = self.config
        w = c.feature_width
        b = dlogits.shape[0]
        dfused = self.fusion.backward(np.asarray(dlogits, dtype=np.float64))
        cs = c.series_channels
        ci = c.image_channels
        dseries_vec = dfused[:, :cs]
        dglobal_vec = dfused[:, cs : cs + ci]
        dtrans_vec = dfused[:, cs + ci :]
        if "series" not in self.disabled:
            h = self.series_reduce.backward(dseries_vec)
            h = self.series_convs[-1].backward(h)
            for conv, bn, relu in zip(
                reversed(self.series_convs[:-1]), reversed(self.series_bns),
                reversed(self.series_relus),
            ):
                h = conv.backward(bn.backward(relu.backward(h)))
        if not self._need_trunk():
            return None
        dfeat = np.zeros((b, ci, w, w))
        if "global" not in self.disabled:
            g = self.global_reduce_h.backward(dglobal_vec)
            dfeat += self.global_reduce_w.backward(g)
        if "transformer" not in self.disabled:
            d = self.trans_reduce.backward(dtrans_vec.reshape(b, ci, w))
            dfeat += self.drop.backward(d)
        t = self.final_relu.backward(dfeat)
        t = self.final_sel.backward(t)
        t = self.final_bn.backward(t)
        for block in reversed(self.blocks):
            t = block.backward(t)
        t = self.pool.backward(t)
        return self.stem.backward(t)

    def branch_features(self, series, images):
        """Eval-mode per-branch vectors, ignoring the disabled set."""
        series = np.asarray(series, dtype=np.float64)
        images = np.asarray(images, dtype=np.float64)
        self._check_inputs(series, images)
        b = series.shape[0]
        series_vec = self._series_branch(series, False)
        feat = self._trunk(images, False)
        g = self.global_reduce_w.forward(feat, False)
        global_vec = self.global_reduce_h.forward(g, False)
        trans_vec = self.trans_reduce.forward(feat, False).reshape(b, -1)
        return {"series": series_vec, "global": global_vec,
                "transformer": trans_vec}

    # --- parameter access -------------------------------------------------

    def named_params(self):
        out = [("stem.weight", self.stem.weight), ("stem.bias", self.stem.bias)]
        for i, blk in enumerate(self.blocks):
            p = f"block{i}."
            out += [
                (p + "bn1.gamma", blk.bn1.gamma),
                (p + "bn1.beta", blk.bn1.beta),
                (p + "conv1.weight", blk.conv1.weight),
                (p + "bn2.gamma", blk.bn2.gamma),
                (p + "bn2.beta", blk.bn2.beta),
                (p + "conv2.weight", blk.conv2.weight),
                (p + "conv2.bias", blk.conv2.bias),
                (p + "shortcut.weight", blk.shortcut.weight),
                (p + "shortcut.bias", blk.shortcut.bias),
            ]
        out += [
            ("final_bn.gamma", self.final_bn.gamma),
            ("final_bn.beta", self.final_bn.beta),
        ]
        for i, conv in enumerate(self.series_convs):
            out += [
                (f"series{i}.weight", conv.weight),
                (f"series{i}.bias", conv.bias),
            ]
        for i, bn in enumerate(self.series_bns):
            out += [
                (f"series_bn{i}.gamma", bn.gamma),
                (f"series_bn{i}.beta", bn.beta),
            ]
        out += [("fusion.weight", self.fusion.weight),
                ("fusion.bias", self.fusion.bias)]
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def named_buffers(self):
        out = []
        for i, blk in enumerate(self.blocks):
            p = f"block{i}."
            out += [
                (p + "bn1.running_mean", blk.bn1, "running_mean"),
                (p + "bn1.running_var", blk.bn1, "running_var"),
                (p + "bn2.running_mean", blk.bn2, "running_mean"),
                (p + "bn2.running_var", blk.bn2, "running_var"),
                (p + "sel1.mask", blk.sel1, "mask"),
                (p + "sel2.mask", blk.sel2, "mask"),
            ]
        out += [
            ("final_bn.running_mean", self.final_bn, "running_mean"),
            ("final_bn.running_var", self.final_bn, "running_var"),
            ("final_sel.mask", self.final_sel, "mask"),
        ]
        for i, bn in enumerate(self.series_bns):
            out += [
                (f"series_bn{i}.running_mean", bn, "running_mean"),
                (f"series_bn{i}.running_var", bn, "running_var"),
            ]
        return out


# --- checkpoints ----------------------------------------------------------


def save_model(model: FusionModel, path):
    cfg = asdict(model.config)
    cfg["block_channels"] = [list(pair) for pair in cfg["block_channels"]]
    names_p = [n for n, _ in model.named_params()]
    names_b = [n for n, _, _ in model.named_buffers()]
    header = {
        "format": 1,
        "config": cfg,
        "disabled": sorted(model.disabled),
        "params": names_p,
        "buffers": names_b,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(head)), head]
    for _, param in model.named_params():
        chunks.append(np.ascontiguousarray(param.data, dtype="<f8").tobytes())
    for _, obj, attr in model.named_buffers():
        chunks.append(np.ascontiguousarray(getattr(obj, attr), dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_model(path) -> FusionModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    if len(blob) < 8:
        raise CheckpointError("truncated checkpoint header")
    (head_len,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + head_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[8 : 8 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format") != 1:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format')}")
    cfg = dict(header["config"])
    cfg["block_channels"] = tuple(tuple(p) for p in cfg["block_channels"])
    model = FusionModel(ModelConfig(**cfg))
    model.set_disabled(header.get("disabled", ()))
    param_map = dict(model.named_params())
    buffer_map = {n: (obj, attr) for n, obj, attr in model.named_buffers()}
    if header["params"] != list(param_map) or header["buffers"] != list(buffer_map):
        raise CheckpointError("checkpoint array listing does not match model")
    offset = 8 + head_len
    for name in header["params"]:
        param = param_map[name]
        nbytes = param.data.size * 8
        if offset + nbytes > len(blob):
            raise CheckpointError(f"truncated payload at {name}")
        param.data = np.frombuffer(
            blob, dtype="<f8", count=param.data.size, offset=offset
        ).reshape(param.data.shape).copy()
        offset += nbytes
    for name in header["buffers"]:
        obj, attr = buffer_map[name]
        arr = getattr(obj, attr)
        nbytes = arr.size * 8
        if offset + nbytes > len(blob):
            raise CheckpointError(f"truncated payload at {name}")
        setattr(obj, attr, np.frombuffer(
            blob, dtype="<f8", count=arr.size, offset=offset
        ).reshape(arr.shape).copy())
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return model

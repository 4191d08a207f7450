"""Student and teacher depth networks.

One architecture serves both: a convolutional encoder, a skip-connected
decoder that restores the input resolution, and an ordinal regression head
that predicts per-image adaptive depth bins plus per-pixel bin probabilities.
The student (3 input channels) sees HR and LR color images through the same
weights; the teacher (1 input channel) reconstructs LR depth maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import ColorImage, DepthMap


@dataclass
class NetworkConfig:
    """Architecture hyperparameters.

    encoder_blocks lists (out_channels, downsample-by-2) per block;
    decoder_channels mirrors the encoder length. The final decoder block takes
    the raw network input as its skip connection, which is the only grid left
    at full resolution.
    """

    in_channels: int = 3
    encoder_blocks: tuple[tuple[int, bool], ...] = ((16, True), (32, True), (48, True), (64, True))
    decoder_channels: tuple[int, ...] = (48, 32, 16, 16)
    patch_size: int = 8
    transformer_layers: int = 4
    embed_dim: int = 32
    n_heads: int = 4
    n_bins: int = 64
    d_min: float = 1.0
    d_max: float = 10.0
    tap_indices: tuple[int, ...] = (1, 2)
    n_kernels: int = 16
    pos_grid: int = 8

    def __post_init__(self):
        self.encoder_blocks = tuple((int(c), bool(d)) for c, d in self.encoder_blocks)
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        self.tap_indices = tuple(int(i) for i in self.tap_indices)
        if len(self.decoder_channels) != len(self.encoder_blocks):
            raise ValueError("decoder_channels must mirror encoder_blocks in length")
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if not (0 < self.d_min < self.d_max):
            raise ValueError(f"bad depth range [{self.d_min}, {self.d_max}]")
        if self.patch_size < 1 or self.embed_dim < 1 or self.transformer_layers < 1:
            raise ValueError("patch_size, embed_dim, transformer_layers must be positive")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError("embed_dim must be divisible by n_heads")
        if any(i < 0 or i >= len(self.decoder_channels) for i in self.tap_indices):
            raise ValueError(f"tap_indices out of range: {self.tap_indices}")
        if self.n_kernels < 1:
            raise ValueError("n_kernels must be >= 1")

    @property
    def n_downsamples(self) -> int:
        return sum(1 for _, down in self.encoder_blocks if down)

    @property
    def stride_multiple(self) -> int:
        """Input dims are padded to a multiple of this before the forward pass."""
        return math.lcm(2**self.n_downsamples, self.patch_size)

    def drn_variant(self) -> "NetworkConfig":
        """Teacher configuration: identical except for the one-channel input."""
        return replace(self, in_channels=1)

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "encoder_blocks": [list(b) for b in self.encoder_blocks],
            "decoder_channels": list(self.decoder_channels),
            "patch_size": self.patch_size,
            "transformer_layers": self.transformer_layers,
            "embed_dim": self.embed_dim,
            "n_heads": self.n_heads,
            "n_bins": self.n_bins,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "tap_indices": list(self.tap_indices),
            "n_kernels": self.n_kernels,
            "pos_grid": self.pos_grid,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["encoder_blocks"] = tuple((c, bool(down)) for c, down in d["encoder_blocks"])
        d["decoder_channels"] = tuple(d["decoder_channels"])
        d["tap_indices"] = tuple(d["tap_indices"])
        return cls(**d)


@dataclass
class BinPartition:
    """Adaptive depth bins: strictly increasing centers, widths summing to 1."""

    centers: torch.Tensor
    widths: torch.Tensor

    def __post_init__(self):
        c = self.centers.detach().double()
        w = self.widths.detach().double()
        if c.ndim != 1 or w.shape != c.shape:
            raise ValueError("centers and widths must be equal-length vectors")
        if bool((torch.diff(c) <= 0).any()):
            raise ValueError("bin centers must be strictly increasing")
        if bool((w <= 0).any()):
            raise ValueError("bin widths must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-5:
            raise ValueError(f"bin widths must sum to 1, got {float(w.sum())}")

    @property
    def n(self) -> int:
        return self.centers.shape[0]


@dataclass
class FeatureTap:
    """A named intermediate feature grid captured for affinity distillation."""

    name: str
    grid: torch.Tensor  # (C, H, W)
    source: str  # student-LR | student-HR | teacher


@dataclass
class Prediction:
    """Full inference output for one image."""

    depth: DepthMap
    bins: BinPartition
    probabilities: np.ndarray  # (H, W, N), per-pixel softmax scores
    taps: list[FeatureTap] = field(default_factory=list)


BIN_EPS = 1e-3


def adaptive_bins(logits: torch.Tensor, d_min: float, d_max: float,
                  eps: float = BIN_EPS):
    """Map bin logits to normalized widths and strictly increasing centers.

    widths_i = (relu(l_i)+eps) / sum_j (relu(l_j)+eps);
    centers_i = d_min + (d_max-d_min) * (widths_i/2 + sum_{j<i} widths_j).
    Works on any leading batch dims; the bin axis is the last one.
    """
    pos = F.relu(logits) + eps
    widths = pos / pos.sum(dim=-1, keepdim=True)
    cum = torch.cumsum(widths, dim=-1)
    centers = d_min + (d_max - d_min) * (cum - 0.5 * widths)
    return centers, widths


def bin_centers_from_logits(bin_logits, d_min: float, d_max: float,
                            eps: float = BIN_EPS) -> BinPartition:
    """Public single-vector form of :func:`adaptive_bins` (float64 precision)."""
    logits = torch.as_tensor(np.asarray(bin_logits), dtype=torch.float64).reshape(-1)
    if logits.numel() < 2:
        raise ValueError("need at least 2 bins")
    centers, widths = adaptive_bins(logits, d_min, d_max, eps)
    return BinPartition(centers, widths)


def depth_from_bins(probabilities: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
    """Per-pixel depth as the probability-weighted sum of bin centers.

    probabilities: (N, H, W) or (B, N, H, W); centers: (N,) or (B, N).
    """
    p = torch.as_tensor(probabilities)
    c = torch.as_tensor(getattr(centers, "centers", centers))
    batched = p.ndim == 4
    if not batched:
        p = p.unsqueeze(0)
        c = c.reshape(1, -1)
    sums = p.sum(dim=1)
    if bool(((sums - 1.0).abs() > 1e-3).any()):
        raise ValueError("per-pixel probabilities must sum to 1")
    depth = torch.einsum("bnhw,bn->bhw", p, c.to(p.dtype))
    return depth if batched else depth.squeeze(0)


class _ConvBlock(nn.Module):
    """conv3x3 -> batch-norm -> ReLU, optionally halving the resolution."""

    def __init__(self, c_in: int, c_out: int, down: bool = False):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=2 if down else 1, padding=1)
        self.bn = nn.BatchNorm2d(c_out)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class OrdinalRegressionHead(nn.Module):
    """Patch transformer over the decoded grid.

    Patch embeddings (p x p, stride p) plus learned positional encodings feed
    a transformer encoder; an MLP on the first output embedding yields the bin
    logits, and the next ``n_kernels`` embeddings act as 1x1 kernels over a
    3x3-convolved copy of the decoded grid to form range-attention maps, which
    a final 1x1 convolution turns into per-pixel bin scores.
    """

    def __init__(self, c_dec: int, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        e = cfg.embed_dim
        self.patch_embed = nn.Conv2d(c_dec, e, cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, e, cfg.pos_grid, cfg.pos_grid))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=e, nhead=cfg.n_heads, dim_feedforward=2 * e,
            dropout=0.0, activation="gelu", batch_first=True,
        )
        self.transformer = nn.TransformerEncoder(layer, cfg.transformer_layers)
        self.bin_mlp = nn.Sequential(nn.Linear(e, e), nn.ReLU(inplace=True), nn.Linear(e, cfg.n_bins))
        self.range_conv = nn.Conv2d(c_dec, e, 3, padding=1)
        self.to_bin_scores = nn.Conv2d(cfg.n_kernels, cfg.n_bins, 1)

    def forward(self, decoded: torch.Tensor):
        b, _, h, w = decoded.shape
        p = self.cfg.patch_size
        if h % p or w % p:
            raise ValueError(f"head input {h}x{w} not divisible by patch size {p}")
        tokens = self.patch_embed(decoded)  # (B, E, h/p, w/p)
        gh, gw = tokens.shape[-2:]
        if gh * gw < self.cfg.n_kernels + 1:
            raise ValueError(
                f"{gh * gw} patches cannot supply 1 bin embedding + {self.cfg.n_kernels} kernels"
            )
        pos = F.interpolate(self.pos_embed, size=(gh, gw), mode="bilinear", align_corners=False)
        seq = (tokens + pos).flatten(2).transpose(1, 2)  # (B, T, E)
        out = self.transformer(seq)
        bin_logits = self.bin_mlp(out[:, 0])
        kernels = out[:, 1 : 1 + self.cfg.n_kernels]  # (B, k, E)
        queries = self.range_conv(decoded)  # (B, E, H, W)
        range_maps = torch.einsum("bke,behw->bkhw", kernels, queries)
        probs = torch.softmax(self.to_bin_scores(range_maps), dim=1)
        return bin_logits, probs


class DepthNet(nn.Module):
    """Encoder / decoder / ordinal-regression depth network.

    forward() accepts (B, C, H, W) and returns a dict with per-image adaptive
    bins, per-pixel probabilities, depth, and the configured decoder taps.
    Inputs whose dims are not a multiple of ``config.stride_multiple`` are
    symmetrically zero-padded and the outputs cropped back.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        chans = [config.in_channels] + [c for c, _ in config.encoder_blocks]
        self.encoder = nn.ModuleList(
            _ConvBlock(chans[i], chans[i + 1], down)
            for i, (_, down) in enumerate(config.encoder_blocks)
        )
        # decoder block i upsamples x2 and concatenates the encoder grid one
        # resolution up; the last block concatenates the raw input instead
        skip_chans = [c for c, _ in config.encoder_blocks[-2::-1]] + [config.in_channels]
        dec_in = [config.encoder_blocks[-1][0]] + list(config.decoder_channels[:-1])
        self.decoder = nn.ModuleList(
            _ConvBlock(dec_in[i] + skip_chans[i], config.decoder_channels[i])
            for i in range(len(config.decoder_channels))
        )
        self.head = OrdinalRegressionHead(config.decoder_channels[-1], config)

    def encode(self, x: torch.Tensor) -> list[torch.Tensor]:
        """One feature grid per encoder block; dims must divide 2^n_downsamples."""
        h, w = x.shape[-2:]
        div = 2**self.config.n_downsamples
        if h % div or w % div:
            raise ValueError(f"encoder input {h}x{w} not divisible by {div}")
        feats = []
        for block in self.encoder:
            x = block(x)
            feats.append(x)
        return feats

    def decode(self, feats: list[torch.Tensor], x: torch.Tensor):
        """Upsample-and-skip decoding back to the input resolution.

        Decoder block i mirrors encoder block n-1-i: it upsamples x2 exactly
        when that encoder block downsampled, then concatenates the grid one
        step up (the raw input for the last block). Returns the final grid
        and the per-block outputs (for taps).
        """
        skips = list(feats[-2::-1]) + [x]
        downs = [down for _, down in self.config.encoder_blocks[::-1]]
        h = feats[-1]
        outputs = []
        for block, skip, down in zip(self.decoder, skips, downs):
            if down:
                h = F.interpolate(h, scale_factor=2.0, mode="bilinear", align_corners=False)
            if h.shape[-2:] != skip.shape[-2:]:
                raise RuntimeError(
                    f"skip shape mismatch: decoder at {tuple(h.shape[-2:])}, "
                    f"skip at {tuple(skip.shape[-2:])}"
                )
            h = block(torch.cat([h, skip], dim=1))
            outputs.append(h)
        return h, outputs

    def forward(self, x: torch.Tensor) -> dict:
        if x.ndim != 4:
            raise ValueError(f"expected (B, C, H, W), got shape {tuple(x.shape)}")
        if x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected {self.config.in_channels} input channels, got {x.shape[1]}")
        h, w = x.shape[-2:]
        m = self.config.stride_multiple
        pad_h = (-h) % m
        pad_w = (-w) % m
        if pad_h or pad_w:
            left, top = pad_w // 2, pad_h // 2
            x = F.pad(x, (left, pad_w - left, top, pad_h - top))
        else:
            left = top = 0

        feats = self.encode(x)
        decoded, dec_outputs = self.decode(feats, x)
        bin_logits, probs = self.head(decoded)
        if pad_h or pad_w:
            probs = probs[..., top : top + h, left : left + w]
        centers, widths = adaptive_bins(bin_logits, self.config.d_min, self.config.d_max)
        depth = torch.einsum("bnhw,bn->bhw", probs, centers)
        taps = {f"dec{i}": dec_outputs[i] for i in self.config.tap_indices}
        return {
            "depth": depth,
            "bin_logits": bin_logits,
            "centers": centers,
            "widths": widths,
            "probabilities": probs,
            "taps": taps,
        }


def normalize_depth_input(d: DepthMap, d_min: float, d_max: float) -> torch.Tensor:
    """Teacher input normalization: (v - d_min) / (d_max - d_min), invalid -> 0."""
    vals = (d.values.astype(np.float32) - d_min) / (d_max - d_min)
    vals = np.where(d.valid, vals, 0.0).astype(np.float32)
    return torch.from_numpy(vals).unsqueeze(0)


def color_to_tensor(img: ColorImage) -> torch.Tensor:
    return torch.from_numpy(img.pixels).permute(2, 0, 1).contiguous()


def _prediction_from_output(out: dict, cfg: NetworkConfig, tap_source: str) -> Prediction:
    depth_t = out["depth"][0]
    probs = out["probabilities"][0]
    centers = out["centers"][0]
    widths = out["widths"][0]
    vals = depth_t.numpy()
    depth = DepthMap(
        np.clip(vals, cfg.d_min, cfg.d_max),
        np.ones_like(vals, dtype=bool),
        cfg.d_min,
        cfg.d_max,
    )
    taps = [
        FeatureTap(name=name, grid=grid[0], source=tap_source)
        for name, grid in out["taps"].items()
    ]
    return Prediction(
        depth=depth,
        bins=BinPartition(centers, widths),
        probabilities=probs.permute(1, 2, 0).numpy(),
        taps=taps,
    )


def forward_mden(model: DepthNet, img: ColorImage, tap_source: str = "student-HR") -> Prediction:
    """Single-image student inference (eval mode, running statistics)."""
    if model.config.in_channels != 3:
        raise ValueError("forward_mden requires a 3-channel (color) network")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(color_to_tensor(img).unsqueeze(0))
    finally:
        model.train(was_training)
    return _prediction_from_output(out, model.config, tap_source)


def forward_drn(model: DepthNet, d: DepthMap) -> Prediction:
    """Single-map teacher inference: depth in, reconstructed depth out."""
    if model.config.in_channels != 1:
        raise ValueError("forward_drn requires a 1-channel (depth) network")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            x = normalize_depth_input(d, model.config.d_min, model.config.d_max)
            out = model(x.unsqueeze(0))
    finally:
        model.train(was_training)
    return _prediction_from_output(out, model.config, "teacher")

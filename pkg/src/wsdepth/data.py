"""Resolution-mismatched sample pairs: domain types, downsampling, masking,
augmentation, synthetic scenes, and the on-disk dataset layout.

Every operation here is a pure function of its inputs and safe to call from
parallel loader workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import FormatError
from .resize import bilinear_resize, scaled_size

MIN_SIDE = 16  # minimum color-image side, set by the patch-embedding head

_BOUND_TOL = 1e-4  # slack for float32 rounding at declared depth bounds


# ---------------------------------------------------------------------------
# domain types


@dataclass
class ColorImage:
    """H x W x 3 grid of intensities in [0, 1], float32."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"color image must be HxWx3, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(
                f"color image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape[0]}x{px.shape[1]}"
            )
        if not np.isfinite(px).all():
            raise ValueError("color image contains non-finite intensities")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("color intensities must lie in [0, 1]")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class DepthMap:
    """H x W metric depth grid with a validity mask.

    Invalid pixels carry value 0 by convention; valid pixels lie in
    [d_min, d_max] and are strictly positive.
    """

    values: np.ndarray
    valid: np.ndarray
    d_min: float
    d_max: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        mask = np.asarray(self.valid, dtype=bool)
        if vals.ndim != 2:
            raise ValueError(f"depth values must be HxW, got shape {vals.shape}")
        if mask.shape != vals.shape:
            raise ValueError("validity mask shape must match depth values")
        if not (self.d_min < self.d_max):
            raise ValueError(f"need d_min < d_max, got {self.d_min} >= {self.d_max}")
        if mask.any():
            vv = vals[mask]
            if not np.isfinite(vv).all():
                raise ValueError("valid depth contains non-finite values")
            tol = _BOUND_TOL * max(1.0, self.d_max)
            if vv.min() <= 0.0:
                raise ValueError("valid depth values must be strictly positive")
            if vv.min() < self.d_min - tol or vv.max() > self.d_max + tol:
                raise ValueError(
                    f"valid depth outside [{self.d_min}, {self.d_max}]: "
                    f"range [{vv.min()}, {vv.max()}]"
                )
        # convention: invalid pixels carry value 0
        vals = np.where(mask, vals, np.float32(0.0))
        self.values = vals
        self.valid = mask

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class SamplePair:
    """HR color image paired with LR depth supervision.

    ``depth_hr_eval`` is evaluation-only ground truth and is never used by any
    training loss.
    """

    color_hr: ColorImage
    depth_lr: DepthMap
    mu: float
    depth_hr_eval: DepthMap | None = None

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0):
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        want = scaled_size(self.color_hr.height, self.color_hr.width, self.mu)
        got = (self.depth_lr.height, self.depth_lr.width)
        if got != want:
            raise ValueError(f"LR depth dims {got} do not match round(mu*HR) {want}")
        if self.depth_hr_eval is not None:
            hr = (self.depth_hr_eval.height, self.depth_hr_eval.width)
            if hr != (self.color_hr.height, self.color_hr.width):
                raise ValueError(f"HR eval depth dims {hr} do not match color dims")


@dataclass
class SyntheticSceneSpec:
    """Deterministic recipe for one toy scene (rectangles over a far plane)."""

    seed: int
    num_rects: int
    depth_range: tuple[float, float]
    texture_amplitude: float
    size: tuple[int, int]
    mu: float = 0.5

    def __post_init__(self):
        d_min, d_max = self.depth_range
        if not (0.0 < d_min < d_max):
            raise ValueError(f"bad depth range {self.depth_range}")
        if self.num_rects < 0:
            raise ValueError("num_rects must be >= 0")
        if not (0.0 <= self.texture_amplitude <= 0.5):
            raise ValueError("texture_amplitude must lie in [0, 0.5]")
        h, w = self.size
        if h < MIN_SIDE or w < MIN_SIDE:
            raise ValueError(f"scene size must be at least {MIN_SIDE}, got {self.size}")
        if not (0.0 < self.mu < 1.0):
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")


# ---------------------------------------------------------------------------
# downsampling


def _check_mu(mu: float) -> None:
    if not (0.0 < mu <= 1.0):
        raise ValueError(f"mu must lie in (0, 1], got {mu}")


def downsample_image(img: ColorImage, mu: float) -> ColorImage:
    """Bilinear downsample to round(mu*H) x round(mu*W) (half-pixel centers)."""
    _check_mu(mu)
    oh, ow = scaled_size(img.height, img.width, mu)
    if oh < MIN_SIDE or ow < MIN_SIDE:
        raise ValueError(f"downsampled color image {oh}x{ow} below minimum {MIN_SIDE}")
    t = torch.from_numpy(img.pixels).permute(2, 0, 1)
    out = bilinear_resize(t, oh, ow).permute(1, 2, 0).numpy()
    return ColorImage(np.clip(out, 0.0, 1.0))


def _window_ids(n_in: int, n_out: int) -> np.ndarray:
    # partition input index r into output cell floor(r * n_out / n_in)
    return (np.arange(n_in) * n_out) // n_in


def _valid_mean_shrink(d: DepthMap, oh: int, ow: int):
    # each output pixel averages the valid inputs inside its footprint window
    # (the preimage of floor(r * out / in)); an empty window stays invalid
    rid = _window_ids(d.height, oh)
    cid = _window_ids(d.width, ow)
    wid = (rid[:, None] * ow + cid[None, :]).ravel()
    vmask = d.valid.ravel().astype(np.float64)
    sums = np.bincount(wid, weights=d.values.ravel().astype(np.float64) * vmask, minlength=oh * ow)
    cnts = np.bincount(wid, weights=vmask, minlength=oh * ow)
    valid = (cnts > 0).reshape(oh, ow)
    vals = np.where(valid.ravel(), sums / np.maximum(cnts, 1.0), 0.0).reshape(oh, ow)
    return vals, valid


def downsample_depth(d: DepthMap, mu: float) -> DepthMap:
    """Downsample depth to round(mu*H) x round(mu*W).

    Dense (all-valid) maps use the same bilinear operator as color images.
    Maps with invalid pixels average the valid inputs inside each output
    pixel's footprint window; a window with no valid input stays invalid.
    """
    _check_mu(mu)
    h, w = d.height, d.width
    oh, ow = scaled_size(h, w, mu)
    if oh < 1 or ow < 1:
        raise ValueError(f"downsampled depth {oh}x{ow} is empty")
    if d.valid.all():
        vals = bilinear_resize(torch.from_numpy(d.values).double(), oh, ow).numpy()
        valid = np.ones((oh, ow), dtype=bool)
    else:
        vals, valid = _valid_mean_shrink(d, oh, ow)
    vals = np.where(valid, np.clip(vals, d.d_min, d.d_max), 0.0)
    return DepthMap(vals, valid, d.d_min, d.d_max)


# ---------------------------------------------------------------------------
# augmentation


def hflip_color(img: ColorImage) -> ColorImage:
    return ColorImage(img.pixels[:, ::-1].copy())


def hflip_depth(d: DepthMap) -> DepthMap:
    return DepthMap(d.values[:, ::-1].copy(), d.valid[:, ::-1].copy(), d.d_min, d.d_max)


def _inverse_rotation_coords(h: int, w: int, angle_deg: float):
    # source coordinates for each destination pixel, rotating content by
    # +angle about the grid center in (col, row) space
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    sx = c * dx + s * dy + cx
    sy = -s * dx + c * dy + cy
    return sy, sx


def _rotate_color(pixels: np.ndarray, angle_deg: float) -> np.ndarray:
    h, w = pixels.shape[:2]
    sy, sx = _inverse_rotation_coords(h, w, angle_deg)
    inside = (sy >= 0) & (sy <= h - 1) & (sx >= 0) & (sx <= w - 1)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    ty = (sy - y0)[..., None]
    tx = (sx - x0)[..., None]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    src = pixels.astype(np.float64)
    out = (
        src[y0c, x0c] * (1 - ty) * (1 - tx)
        + src[y0c, x1c] * (1 - ty) * tx
        + src[y1c, x0c] * ty * (1 - tx)
        + src[y1c, x1c] * ty * tx
    )
    out[~inside] = 0.0  # swept in from outside the source: black
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _rotate_depth(values: np.ndarray, valid: np.ndarray, angle_deg: float):
    # nearest-neighbor: interpolating across depth discontinuities would
    # fabricate surfaces that do not exist
    h, w = values.shape
    sy, sx = _inverse_rotation_coords(h, w, angle_deg)
    ry = np.rint(sy).astype(np.int64)
    rx = np.rint(sx).astype(np.int64)
    inside = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
    ryc = np.clip(ry, 0, h - 1)
    rxc = np.clip(rx, 0, w - 1)
    out_vals = values[ryc, rxc]
    out_valid = valid[ryc, rxc] & inside
    return np.where(out_valid, out_vals, 0.0), out_valid


def apply_augmentation(pair: SamplePair, flip: bool, angle_deg: float) -> SamplePair:
    """Deterministic augmentation core: optional mirror, then rotation.

    Color is resampled bilinearly, depth by nearest neighbor; pixels mapped
    from outside the source become black in color and invalid in depth. The
    HR color and all depth grids receive the same flip and angle.
    """
    color = hflip_color(pair.color_hr) if flip else pair.color_hr
    depth_lr = hflip_depth(pair.depth_lr) if flip else pair.depth_lr
    depth_hr = pair.depth_hr_eval
    if depth_hr is not None and flip:
        depth_hr = hflip_depth(depth_hr)

    if angle_deg != 0.0:
        color = ColorImage(_rotate_color(color.pixels, angle_deg))
        vals, mask = _rotate_depth(depth_lr.values, depth_lr.valid, angle_deg)
        depth_lr = DepthMap(vals, mask, depth_lr.d_min, depth_lr.d_max)
        if depth_hr is not None:
            vals, mask = _rotate_depth(depth_hr.values, depth_hr.valid, angle_deg)
            depth_hr = DepthMap(vals, mask, depth_hr.d_min, depth_hr.d_max)
    return SamplePair(color, depth_lr, pair.mu, depth_hr)


def augment(pair: SamplePair, seed) -> SamplePair:
    """Seeded augmentation: mirror with probability 0.5, rotate uniformly in
    [-5, +5] degrees. Draw order is fixed (flip first, then angle)."""
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < 0.5)
    angle = float(rng.uniform(-5.0, 5.0))
    return apply_augmentation(pair, flip, angle)


# ---------------------------------------------------------------------------
# synthetic scenes


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def scene_rectangles(spec: SyntheticSceneSpec) -> list[tuple[int, int, int, int, float]]:
    """The seeded rectangle draws (r0, c0, height, width, depth), in paint order.

    Draw order per rectangle is fixed: height, width, row, col, depth. The
    texture parameters are drawn from the same generator only after all
    rectangle geometry, so this list is reproducible on its own.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.size
    d_min, d_max = spec.depth_range
    rects = []
    for _ in range(spec.num_rects):
        rh = int(rng.integers(h // 8, h // 2 + 1))
        rw = int(rng.integers(w // 8, w // 2 + 1))
        r0 = int(rng.integers(0, h - rh + 1))
        c0 = int(rng.integers(0, w - rw + 1))
        dep = float(rng.uniform(d_min, d_max))
        rects.append((r0, c0, rh, rw, dep))
    return rects


def generate_synthetic_scene(spec: SyntheticSceneSpec) -> SamplePair:
    """Deterministic toy scene: axis-aligned rectangles over a plane at d_max.

    Color is a pure function of HR depth (hue encodes normalized depth; a
    seeded per-region sinusoid of the configured amplitude modulates only the
    value channel), so depth is recoverable from color and the toy task is
    learnable. LR depth is the downsampled HR depth; all masks are dense.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.size
    d_min, d_max = spec.depth_range

    depth = np.full((h, w), d_max, dtype=np.float64)
    region = np.zeros((h, w), dtype=np.int64)
    for k in range(spec.num_rects):
        rh = int(rng.integers(h // 8, h // 2 + 1))
        rw = int(rng.integers(w // 8, w // 2 + 1))
        r0 = int(rng.integers(0, h - rh + 1))
        c0 = int(rng.integers(0, w - rw + 1))
        dep = float(rng.uniform(d_min, d_max))
        depth[r0 : r0 + rh, c0 : c0 + rw] = dep
        region[r0 : r0 + rh, c0 : c0 + rw] = k + 1

    # per-region texture on the value channel only, so hue stays depth-coded
    value = np.full((h, w), 0.5, dtype=np.float64)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for k in range(spec.num_rects + 1):
        fy, fx = rng.uniform(0.05, 0.25, size=2)
        py, px = rng.uniform(0.0, 1.0, size=2)
        pattern = np.sin(2 * np.pi * (fy * yy + py)) * np.sin(2 * np.pi * (fx * xx + px))
        value = np.where(region == k, 0.5 + spec.texture_amplitude * pattern, value)

    norm = (depth - d_min) / (d_max - d_min)
    hue = norm * (2.0 / 3.0)  # d_min -> red, d_max -> blue
    sat = np.full((h, w), 0.85)
    color = ColorImage(np.clip(_hsv_to_rgb(hue, sat, value), 0.0, 1.0))

    depth_hr = DepthMap(depth, np.ones((h, w), dtype=bool), d_min, d_max)
    depth_lr = downsample_depth(depth_hr, spec.mu)
    return SamplePair(color, depth_lr, spec.mu, depth_hr_eval=depth_hr)


class SyntheticDataset:
    """Lazily regenerated sequence of synthetic sample pairs.

    Scene i uses seed = base_seed + i; regeneration is cheap and bit-stable,
    so nothing is cached.
    """

    def __init__(self, count: int, base_seed: int, *, size=(128, 128), mu=0.5,
                 num_rects=6, depth_range=(1.0, 10.0), texture_amplitude=0.15):
        self.count = int(count)
        self.base_seed = int(base_seed)
        self.size = tuple(size)
        self.mu = float(mu)
        self.num_rects = int(num_rects)
        self.depth_range = (float(depth_range[0]), float(depth_range[1]))
        self.texture_amplitude = float(texture_amplitude)
        self.names = [f"scene_{i:05d}" for i in range(self.count)]

    def spec_for(self, i: int) -> SyntheticSceneSpec:
        return SyntheticSceneSpec(
            seed=self.base_seed + i,
            num_rects=self.num_rects,
            depth_range=self.depth_range,
            texture_amplitude=self.texture_amplitude,
            size=self.size,
            mu=self.mu,
        )

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> SamplePair:
        if not 0 <= i < self.count:
            raise IndexError(i)
        return generate_synthetic_scene(self.spec_for(i))


# ---------------------------------------------------------------------------
# dataset files


@dataclass
class DatasetConfig:
    """Contents of dataset.cfg (UTF-8 ``key = value`` lines)."""

    depth_scale: float
    d_min: float
    d_max: float
    mu: float
    resize_policy: str = "strict"

    def __post_init__(self):
        if self.depth_scale <= 0:
            raise FormatError(f"depth_scale must be positive, got {self.depth_scale}")
        if not (0.0 < self.d_min < self.d_max):
            raise FormatError(f"bad depth bounds [{self.d_min}, {self.d_max}]")
        if not (0.0 < self.mu < 1.0):
            raise FormatError(f"mu must lie in (0, 1), got {self.mu}")
        if self.resize_policy not in ("strict", "bilinear"):
            raise FormatError(f"resize_policy must be strict|bilinear, got {self.resize_policy!r}")


def parse_kv_lines(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def read_dataset_config(path) -> DatasetConfig:
    kv = parse_kv_lines(Path(path).read_text(encoding="utf-8"))
    try:
        return DatasetConfig(
            depth_scale=float(kv["depth_scale"]),
            d_min=float(kv["d_min"]),
            d_max=float(kv["d_max"]),
            mu=float(kv["mu"]),
            resize_policy=kv.get("resize_policy", "strict"),
        )
    except KeyError as e:
        raise FormatError(f"dataset.cfg missing key {e.args[0]!r}") from e


def write_dataset_config(path, cfg: DatasetConfig) -> None:
    text = (
        f"depth_scale = {cfg.depth_scale}\n"
        f"d_min = {cfg.d_min}\n"
        f"d_max = {cfg.d_max}\n"
        f"mu = {cfg.mu}\n"
        f"resize_policy = {cfg.resize_policy}\n"
    )
    Path(path).write_text(text, encoding="utf-8")


def save_color_png(path, img: ColorImage) -> None:
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_color_png(path) -> ColorImage:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except OSError:
        raise
    except Exception as e:  # PIL raises assorted types for corrupt files
        raise FormatError(f"cannot decode color image {path}: {e}") from e
    return ColorImage(arr / 255.0)


def save_depth_png(path, d: DepthMap, depth_scale: float) -> None:
    """16-bit single-channel PNG; raw = round(value * scale), 0 marks invalid.

    Valid pixels that would round to 0 are written as 1 so validity survives
    the round trip; values beyond the 16-bit range are clipped.
    """
    raw = np.rint(d.values.astype(np.float64) * depth_scale)
    raw = np.clip(raw, 0, 65535)
    raw = np.where(d.valid, np.maximum(raw, 1), 0).astype(np.uint16)
    Image.fromarray(raw).save(path)


def load_depth_png(path, depth_scale: float, d_min: float, d_max: float) -> DepthMap:
    """Read a 16-bit depth PNG. raw 0 = invalid; metric depth = raw / scale.

    Valid values are clamped into [d_min, d_max] to absorb quantization at the
    declared bounds.
    """
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except OSError:
        raise
    except Exception as e:
        raise FormatError(f"cannot decode depth image {path}: {e}") from e
    if arr.ndim != 2:
        raise FormatError(f"depth image {path} must be single-channel, got shape {arr.shape}")
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise FormatError(f"depth image {path} has unsupported dtype {arr.dtype}")
    raw = arr.astype(np.float64)
    valid = raw > 0
    vals = np.where(valid, np.clip(raw / depth_scale, d_min, d_max), 0.0)
    return DepthMap(vals, valid, d_min, d_max)


def _resize_depth_to(d: DepthMap, oh: int, ow: int) -> DepthMap:
    # bilinear resize policy; sparse maps shrink by valid-mean windows and
    # grow by nearest neighbor so zeros never bleed into supervision
    if d.valid.all():
        vals = bilinear_resize(torch.from_numpy(d.values).double(), oh, ow).numpy()
        vals = np.clip(vals, d.d_min, d.d_max)
        return DepthMap(vals, np.ones((oh, ow), dtype=bool), d.d_min, d.d_max)
    if oh <= d.height and ow <= d.width:
        vals, valid = _valid_mean_shrink(d, oh, ow)
        vals = np.where(valid, np.clip(vals, d.d_min, d.d_max), 0.0)
        return DepthMap(vals, valid, d.d_min, d.d_max)
    ys = np.clip(np.rint((np.arange(oh) + 0.5) * d.height / oh - 0.5).astype(np.int64), 0, d.height - 1)
    xs = np.clip(np.rint((np.arange(ow) + 0.5) * d.width / ow - 0.5).astype(np.int64), 0, d.width - 1)
    vals = d.values[ys[:, None], xs[None, :]]
    valid = d.valid[ys[:, None], xs[None, :]]
    return DepthMap(np.where(valid, vals, 0.0), valid, d.d_min, d.d_max)


def load_sample(color_path, depth_path, mu: float, *, depth_scale: float,
                d_min: float, d_max: float, resize_policy: str = "strict") -> SamplePair:
    """Load one color/depth pair from disk.

    The depth grid must already match round(mu*H) x round(mu*W); otherwise the
    configured resize policy is applied ('strict' raises a format error).
    """
    color = load_color_png(color_path)
    depth = load_depth_png(depth_path, depth_scale, d_min, d_max)
    want = scaled_size(color.height, color.width, mu)
    got = (depth.height, depth.width)
    if got != want:
        if resize_policy == "strict":
            raise FormatError(
                f"depth dims {got} do not match round(mu*HR) {want} for {depth_path} "
                f"(resize_policy=strict)"
            )
        depth = _resize_depth_to(depth, *want)
    return SamplePair(color, depth, mu)


def write_dataset(root, pairs, cfg: DatasetConfig, *, names=None, include_hr: bool = True) -> list[str]:
    """Write pairs to the documented layout: color/, depth/, dataset.cfg.

    When HR evaluation depth is present and ``include_hr`` is set, it is also
    written under depth_hr/ (evaluation-only; not part of training inputs).
    """
    root = Path(root)
    (root / "color").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    if names is None:
        names = [f"{i:05d}" for i in range(len(pairs))]
    for name, pair in zip(names, pairs):
        save_color_png(root / "color" / f"{name}.png", pair.color_hr)
        save_depth_png(root / "depth" / f"{name}.png", pair.depth_lr, cfg.depth_scale)
        if include_hr and pair.depth_hr_eval is not None:
            (root / "depth_hr").mkdir(exist_ok=True)
            save_depth_png(root / "depth_hr" / f"{name}.png", pair.depth_hr_eval, cfg.depth_scale)
    write_dataset_config(root / "dataset.cfg", cfg)
    return list(names)


class DirectoryDataset:
    """Lazy reader for the on-disk layout written by :func:`write_dataset`."""

    def __init__(self, root):
        self.root = Path(root)
        cfg_path = self.root / "dataset.cfg"
        if not cfg_path.is_file():
            raise FormatError(f"missing dataset.cfg under {self.root}")
        self.config = read_dataset_config(cfg_path)
        color_names = sorted(p.stem for p in (self.root / "color").glob("*.png"))
        depth_names = sorted(p.stem for p in (self.root / "depth").glob("*.png"))
        if not color_names:
            raise FormatError(f"no color images under {self.root / 'color'}")
        if color_names != depth_names:
            raise FormatError("color/ and depth/ file names do not match")
        self.names = color_names
        self._hr_dir = self.root / "depth_hr"

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, i: int) -> SamplePair:
        name = self.names[i]
        cfg = self.config
        pair = load_sample(
            self.root / "color" / f"{name}.png",
            self.root / "depth" / f"{name}.png",
            cfg.mu,
            depth_scale=cfg.depth_scale,
            d_min=cfg.d_min,
            d_max=cfg.d_max,
            resize_policy=cfg.resize_policy,
        )
        hr_path = self._hr_dir / f"{name}.png"
        if hr_path.is_file():
            hr = load_depth_png(hr_path, cfg.depth_scale, cfg.d_min, cfg.d_max)
            pair = SamplePair(pair.color_hr, pair.depth_lr, pair.mu, depth_hr_eval=hr)
        return pair

"""Training objectives: per-branch reconstruction, network consistency,
affinity-space distillation, and their composition.

Every loss is a pure function returning a scalar tensor; analytic gradients
come from autograd and are pinned against finite differences in the test
suite. Depth arguments may be DepthMap instances or raw tensors (with an
optional validity mask for the tensor form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import NoValidPixelsError
from .resize import bilinear_resize, scaled_size

DEFAULT_CHAMFER_MAX_POINTS = 512
DEFAULT_AFFINITY_CAP = 1024


@dataclass
class LossWeights:
    """Loss coefficients; defaults follow the training recipe."""

    alpha: float = 10.0   # LR reconstruction term
    beta: float = 1.0     # HR reconstruction term
    gamma: float = 1.0    # network consistency term
    lam: float = 0.1      # bin-center regularizer inside reconstruction
    a: float = 10.0       # scale-invariant loss multiplier
    b_si: float = 0.85    # scale-invariance degree (1 = fully invariant)
    w_distill: tuple[float, ...] | None = None  # per-tap weights; None = all ones

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lam", "a"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (0.0 <= self.b_si <= 1.0):
            raise ValueError(f"b_si must lie in [0, 1], got {self.b_si}")
        if self.w_distill is not None:
            self.w_distill = tuple(float(w) for w in self.w_distill)
            if any(w < 0 for w in self.w_distill):
                raise ValueError("distillation weights must be nonnegative")


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x))


def _depth_values_mask(x, valid=None):
    """Accept a DepthMap or a tensor (+ optional mask); return (values, mask)."""
    if hasattr(x, "values") and hasattr(x, "valid"):
        return torch.from_numpy(x.values), torch.from_numpy(x.valid)
    t = _as_tensor(x)
    if valid is None:
        return t, torch.ones_like(t, dtype=torch.bool)
    return t, _as_tensor(valid).bool()


def _centers_tensor(bins) -> torch.Tensor:
    c = getattr(bins, "centers", bins)
    return _as_tensor(c).reshape(-1)


def si_loss(pred, gt, a: float = 10.0, b_si: float = 0.85, *, gt_valid=None) -> torch.Tensor:
    """Scaled scale-invariant log loss over the gt-valid pixels.

    L = a * sqrt(mean(g^2) - b_si * (sum g)^2 / T^2) with g = ln(pred) - ln(gt)
    and T the number of valid pixels; the radicand is clamped at zero against
    negative floating-point residue near perfect fits.
    """
    p, _ = _depth_values_mask(pred)
    g, mask = _depth_values_mask(gt, gt_valid)
    if p.shape != g.shape:
        raise ValueError(f"pred shape {tuple(p.shape)} != gt shape {tuple(g.shape)}")
    t_count = int(mask.sum())
    if t_count == 0:
        raise NoValidPixelsError("si_loss needs at least one valid ground-truth pixel")
    pv = p[mask]
    gv = g[mask]
    if bool((pv <= 0).any()):
        raise ValueError("si_loss: nonpositive prediction at a valid pixel")
    if bool((gv <= 0).any()):
        raise ValueError("si_loss: nonpositive ground truth at a valid pixel")
    glog = torch.log(pv) - torch.log(gv)
    radicand = (glog * glog).sum() / t_count - (b_si / t_count**2) * glog.sum() ** 2
    return a * torch.sqrt(torch.clamp(radicand, min=0.0))


def chamfer_bins_loss(bins, x, *, max_points: int = DEFAULT_CHAMFER_MAX_POINTS,
                      seed: int = 0) -> torch.Tensor:
    """Bidirectional Chamfer distance between bin centers and gt depth values.

    sum_{x in X} min_b (x-b)^2 + sum_{b} min_{x in X} (x-b)^2. X larger than
    ``max_points`` is uniformly subsampled without replacement by a generator
    seeded with ``seed``, keeping the quadratic cost bounded.
    """
    centers = _centers_tensor(bins)
    xv = _as_tensor(x).reshape(-1)
    if centers.numel() < 1:
        raise ValueError("chamfer_bins_loss needs at least one bin center")
    if xv.numel() == 0:
        raise NoValidPixelsError("chamfer_bins_loss: empty ground-truth value set")
    if xv.numel() > max_points:
        idx = np.random.default_rng(seed).choice(xv.numel(), size=max_points, replace=False)
        xv = xv[torch.from_numpy(np.ascontiguousarray(idx))]
    diff = centers.view(-1, 1) - xv.view(1, -1).to(centers.dtype)
    d2 = diff * diff
    return d2.min(dim=0).values.sum() + d2.min(dim=1).values.sum()


def reconstruction_loss(pred, gt, bins, weights: LossWeights, *, gt_valid=None,
                        chamfer_max_points: int = DEFAULT_CHAMFER_MAX_POINTS,
                        chamfer_seed: int = 0) -> torch.Tensor:
    """Pixel term plus bin regularizer: si_loss + lam * chamfer_bins_loss.

    The Chamfer point set X is the multiset of valid gt depth values.
    """
    gvals, gmask = _depth_values_mask(gt, gt_valid)
    loss = si_loss(pred, gvals, weights.a, weights.b_si, gt_valid=gmask)
    if weights.lam != 0.0:
        x = gvals[gmask]
        loss = loss + weights.lam * chamfer_bins_loss(
            bins, x, max_points=chamfer_max_points, seed=chamfer_seed
        )
    return loss


def net_consistency_loss(pred_hr, pred_lr, mu: float) -> torch.Tensor:
    """Mean squared error between the downsampled HR prediction and the LR one.

    Both predictions are dense, so no mask applies; Down is the shared
    half-pixel bilinear operator.
    """
    ph, _ = _depth_values_mask(pred_hr)
    pl, _ = _depth_values_mask(pred_lr)
    want = scaled_size(ph.shape[-2], ph.shape[-1], mu)
    if tuple(pl.shape[-2:]) != want:
        raise ValueError(
            f"LR prediction dims {tuple(pl.shape[-2:])} do not match round(mu*HR) {want}"
        )
    down = bilinear_resize(ph, *want)
    diff = down - pl.to(down.dtype)
    return (diff * diff).mean()


def _affinity_dims(h: int, w: int, cap: int) -> tuple[int, int]:
    if h * w <= cap:
        return h, w
    s = math.sqrt(cap / (h * w))
    return max(1, math.floor(h * s)), max(1, math.floor(w * s))


def affinity(feat, *, cap: int = DEFAULT_AFFINITY_CAP) -> torch.Tensor:
    """Row-softmaxed Gram matrix of a (C, H, W) feature grid's pixel vectors.

    Grids with more than ``cap`` pixels are first bilinearly shrunk so that
    h*w <= cap. Each row of the returned (hw, hw) matrix sums to 1.
    """
    f = getattr(feat, "grid", feat)
    f = _as_tensor(f)
    if f.ndim != 3:
        raise ValueError(f"affinity expects a (C, H, W) grid, got shape {tuple(f.shape)}")
    c, h, w = f.shape
    nh, nw = _affinity_dims(h, w, cap)
    if (nh, nw) != (h, w):
        f = bilinear_resize(f, nh, nw)
    x = f.reshape(c, nh * nw).transpose(0, 1)
    gram = x @ x.transpose(0, 1)
    return torch.softmax(gram, dim=1)


def distill_loss(teacher_taps, student_taps, w=None, *,
                 cap: int = DEFAULT_AFFINITY_CAP) -> torch.Tensor:
    """Mean absolute difference between teacher and student affinity matrices.

    (1/n) * sum_i w_i * mean |A(teacher_i) - A(student_i)|, averaged over all
    matrix entries. Teacher features are detached: the teacher is trained
    beforehand and stays frozen.
    """
    n = len(teacher_taps)
    if n == 0 or len(student_taps) != n:
        raise ValueError(
            f"tap lists must be equal nonempty length, got {n} and {len(student_taps)}"
        )
    if w is None:
        w = [1.0] * n
    if len(w) != n:
        raise ValueError(f"need one weight per tap pair, got {len(w)} for {n} pairs")
    total = None
    for t_tap, s_tap, wi in zip(teacher_taps, student_taps, w):
        t = _as_tensor(getattr(t_tap, "grid", t_tap)).detach()
        s = _as_tensor(getattr(s_tap, "grid", s_tap))
        td = _affinity_dims(t.shape[-2], t.shape[-1], cap)
        sd = _affinity_dims(s.shape[-2], s.shape[-1], cap)
        if td != sd:
            raise ValueError(f"paired taps disagree on spatial dims after cap resize: {td} vs {sd}")
        term = wi * (affinity(t, cap=cap) - affinity(s, cap=cap)).abs().mean()
        total = term if total is None else total + term
    return total / n


def mden_loss(pred_hr, pred_lr, gt_lr, bins_hr, bins_lr, mu: float,
              weights: LossWeights, *, enabled=("LR", "HR", "net"), gt_valid=None,
              chamfer_max_points: int = DEFAULT_CHAMFER_MAX_POINTS,
              chamfer_seed: int = 0, return_components: bool = False):
    """Student objective: alpha*L_LR + beta*L_HR + gamma*L_net.

    L_LR compares the LR-branch prediction with LR ground truth; L_HR compares
    the downsampled HR-branch prediction with the same LR ground truth (using
    the HR branch's own bin centers); L_net ties the two branches together.
    ``enabled`` masks terms out for ablations; masked terms are not computed.
    """
    gvals, gmask = _depth_values_mask(gt_lr, gt_valid)
    components = {"LR": 0.0, "HR": 0.0, "net": 0.0}
    total = None

    def add(term):
        nonlocal total
        total = term if total is None else total + term

    if "LR" in enabled:
        l_lr = reconstruction_loss(
            pred_lr, gvals, bins_lr, weights, gt_valid=gmask,
            chamfer_max_points=chamfer_max_points, chamfer_seed=chamfer_seed,
        )
        components["LR"] = l_lr
        add(weights.alpha * l_lr)
    if "HR" in enabled:
        ph, _ = _depth_values_mask(pred_hr)
        want = scaled_size(ph.shape[-2], ph.shape[-1], mu)
        if tuple(gvals.shape[-2:]) != want:
            raise ValueError(
                f"LR ground truth dims {tuple(gvals.shape[-2:])} do not match round(mu*HR) {want}"
            )
        down = bilinear_resize(ph, gvals.shape[-2], gvals.shape[-1])
        l_hr = reconstruction_loss(
            down, gvals, bins_hr, weights, gt_valid=gmask,
            chamfer_max_points=chamfer_max_points, chamfer_seed=chamfer_seed,
        )
        components["HR"] = l_hr
        add(weights.beta * l_hr)
    if "net" in enabled:
        l_net = net_consistency_loss(pred_hr, pred_lr, mu)
        components["net"] = l_net
        add(weights.gamma * l_net)
    if total is None:
        total = torch.zeros(())
    if return_components:
        return total, components
    return total


def total_loss(mden_value, distill_value) -> torch.Tensor:
    """Full objective: student loss plus distillation loss."""
    m = _as_tensor(mden_value)
    d = _as_tensor(distill_value)
    if not bool(torch.isfinite(m)) or not bool(torch.isfinite(d)):
        raise FloatingPointError(
            f"non-finite loss inputs: mden={float(m)}, distill={float(d)}"
        )
    return m + d

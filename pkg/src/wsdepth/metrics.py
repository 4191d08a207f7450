"""Evaluation statistics and protocols: the eight standard depth metrics,
the central evaluation crop, and mirror-averaged inference."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .data import ColorImage, DepthMap, hflip_color
from .errors import NoValidPixelsError

# central-crop fractions for road-scene benchmarks (rows, then cols; half-open)
GARG_ROW_FRACS = (0.40810811, 0.99189189)
GARG_COL_FRACS = (0.03594771, 0.96405229)


@dataclass(frozen=True)
class CropRect:
    """Half-open evaluation window [top, bottom) x [left, right)."""

    top: int
    bottom: int
    left: int
    right: int


def garg_crop(h: int, w: int) -> CropRect:
    """Central evaluation crop; fractions multiplied by the dims and floored.

    Note the crop is defined on the full image dims: cropping a crop is not
    idempotent.
    """
    if h < 1 or w < 1:
        raise ValueError(f"dims must be positive, got {h}x{w}")
    return CropRect(
        top=int(np.floor(GARG_ROW_FRACS[0] * h)),
        bottom=int(np.floor(GARG_ROW_FRACS[1] * h)),
        left=int(np.floor(GARG_COL_FRACS[0] * w)),
        right=int(np.floor(GARG_COL_FRACS[1] * w)),
    )


@dataclass(frozen=True)
class EvalProtocol:
    cap_m: float | None = None
    crop: CropRect | None = None
    mirror_averaged: bool = False


@dataclass
class MetricsReport:
    """The eight evaluation statistics plus protocol metadata."""

    rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    protocol: EvalProtocol = field(default_factory=EvalProtocol)

    def __post_init__(self):
        if not (self.delta1 <= self.delta2 <= self.delta3):
            raise ValueError(
                f"delta thresholds must be nested: {self.delta1}, {self.delta2}, {self.delta3}"
            )
        for name in ("rel", "sq_rel", "rmse", "rmse_log", "log10"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        crop = self.protocol.crop
        d["protocol"]["crop"] = (
            [crop.top, crop.bottom, crop.left, crop.right] if crop is not None else None
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        proto = dict(d.pop("protocol", {}))
        crop = proto.get("crop")
        proto["crop"] = CropRect(*crop) if crop is not None else None
        return cls(protocol=EvalProtocol(**proto), **d)


def compute_metrics(pred: DepthMap, gt: DepthMap, cap: float | None = None,
                    crop: CropRect | None = None, *,
                    mirror_averaged: bool = False) -> MetricsReport:
    """Evaluate a prediction against ground truth on the gt-valid pixels.

    With a cap both pred and gt are clamped to [gt.d_min, cap]. Delta
    thresholds use a strict '<': a ratio of exactly 1.25 is excluded.
    """
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError(
            f"pred dims {(pred.height, pred.width)} != gt dims {(gt.height, gt.width)}"
        )
    sel = gt.valid
    if crop is not None:
        window = np.zeros_like(sel)
        window[crop.top : crop.bottom, crop.left : crop.right] = True
        sel = sel & window
    n = int(sel.sum())
    if n == 0:
        raise NoValidPixelsError("no valid ground-truth pixels in the evaluation region")

    p = pred.values[sel].astype(np.float64)
    g = gt.values[sel].astype(np.float64)
    if cap is not None:
        p = np.clip(p, gt.d_min, cap)
        g = np.clip(g, gt.d_min, cap)
    if (p <= 0).any():
        raise ValueError("metrics need strictly positive predictions at valid pixels")

    err = g - p
    ratio = np.maximum(g / p, p / g)
    report = MetricsReport(
        rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err * err / g)),
        rmse=float(np.sqrt(np.mean(err * err))),
        rmse_log=float(np.sqrt(np.mean((np.log(g) - np.log(p)) ** 2))),
        log10=float(np.mean(np.abs(np.log10(g) - np.log10(p)))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        n_pixels=n,
        protocol=EvalProtocol(cap_m=cap, crop=crop, mirror_averaged=mirror_averaged),
    )
    return report


def mirror_average_predict(predict_fn, img: ColorImage) -> DepthMap:
    """Average a prediction with the flipped-back prediction of the mirror.

    0.5 * (predict(img) + hflip(predict(hflip(img)))).
    """
    p1 = predict_fn(img)
    p2 = predict_fn(hflip_color(img))
    vals = 0.5 * (p1.values + p2.values[:, ::-1])
    valid = p1.valid & p2.valid[:, ::-1]
    return DepthMap(np.where(valid, vals, 0.0), valid, p1.d_min, p1.d_max)


def aggregate_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Arithmetic mean of each statistic over images; pixel counts are summed."""
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    mean = lambda name: float(np.mean([getattr(r, name) for r in reports]))
    return MetricsReport(
        rel=mean("rel"),
        sq_rel=mean("sq_rel"),
        rmse=mean("rmse"),
        rmse_log=mean("rmse_log"),
        log10=mean("log10"),
        delta1=mean("delta1"),
        delta2=mean("delta2"),
        delta3=mean("delta3"),
        n_pixels=int(sum(r.n_pixels for r in reports)),
        protocol=reports[0].protocol,
    )


def report_lines(per_image: list[tuple[str, MetricsReport]],
                 aggregate: MetricsReport) -> list[str]:
    """Human-readable line-oriented report."""
    header = (
        f"{'image':<20} {'REL':>8} {'SqRel':>8} {'RMSE':>8} {'RMSElog':>8} "
        f"{'log10':>8} {'d1':>7} {'d2':>7} {'d3':>7} {'pixels':>9}"
    )
    fmt = "{name:<20} {r.rel:8.4f} {r.sq_rel:8.4f} {r.rmse:8.4f} {r.rmse_log:8.4f} " \
          "{r.log10:8.4f} {r.delta1:7.4f} {r.delta2:7.4f} {r.delta3:7.4f} {r.n_pixels:9d}"
    lines = [header]
    for name, rep in per_image:
        lines.append(fmt.format(name=name, r=rep))
    lines.append(fmt.format(name="AGGREGATE", r=aggregate))
    proto = aggregate.protocol
    lines.append(
        f"protocol: cap={proto.cap_m} crop={proto.crop} mirror_averaged={proto.mirror_averaged}"
    )
    return lines

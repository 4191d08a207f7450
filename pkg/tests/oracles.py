"""Independent reference implementations used to pin the package numerics.

Everything here is written directly from the defining formulas in plain
numpy/python double precision, deliberately avoiding the package's own code
paths (no shared resize, no torch ops on the hot path).
"""

import math

import numpy as np


def bilinear_resize_oracle(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Per-pixel half-pixel-center bilinear interpolation with edge clamping."""
    h, w = src.shape
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            sy = (i + 0.5) * h / out_h - 0.5
            sx = (j + 0.5) * w / out_w - 0.5
            y0 = math.floor(sy)
            x0 = math.floor(sx)
            ty = sy - y0
            tx = sx - x0
            y0c = min(max(y0, 0), h - 1)
            y1c = min(max(y0 + 1, 0), h - 1)
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            out[i, j] = (
                src[y0c, x0c] * (1 - ty) * (1 - tx)
                + src[y0c, x1c] * (1 - ty) * tx
                + src[y1c, x0c] * ty * (1 - tx)
                + src[y1c, x1c] * ty * tx
            )
    return out


def valid_mean_downsample_oracle(values, valid, out_h, out_w):
    """Direct window enumeration for sparse depth downsampling."""
    h, w = values.shape
    out_v = np.zeros((out_h, out_w), dtype=np.float64)
    out_m = np.zeros((out_h, out_w), dtype=bool)
    for i in range(out_h):
        for j in range(out_w):
            acc, cnt = 0.0, 0
            for r in range(h):
                if (r * out_h) // h != i:
                    continue
                for c in range(w):
                    if (c * out_w) // w != j:
                        continue
                    if valid[r, c]:
                        acc += float(values[r, c])
                        cnt += 1
            if cnt:
                out_v[i, j] = acc / cnt
                out_m[i, j] = True
    return out_v, out_m


def si_loss_oracle(pred, gt, valid, a=10.0, b_si=0.85) -> float:
    """Direct per-pixel summation of the scale-invariant log loss."""
    g = []
    for p, t, m in zip(np.ravel(pred), np.ravel(gt), np.ravel(valid)):
        if m:
            g.append(math.log(p) - math.log(t))
    t_count = len(g)
    s1 = math.fsum(x * x for x in g)
    s2 = math.fsum(g)
    radicand = s1 / t_count - (b_si / t_count**2) * s2 * s2
    return a * math.sqrt(max(radicand, 0.0))


def chamfer_oracle(centers, xs) -> float:
    """Brute force over all pairs."""
    fwd = math.fsum(min((x - y) ** 2 for y in centers) for x in xs)
    rev = math.fsum(min((x - y) ** 2 for x in xs) for y in centers)
    return fwd + rev


def net_consistency_oracle(pred_hr, pred_lr) -> float:
    """Direct loop: bilinear-downsample HR (per-pixel oracle), mean square diff."""
    oh, ow = pred_lr.shape
    down = bilinear_resize_oracle(np.asarray(pred_hr, dtype=np.float64), oh, ow)
    return float(np.mean((down - np.asarray(pred_lr, dtype=np.float64)) ** 2))


def affinity_oracle(feat_chw: np.ndarray) -> np.ndarray:
    """Row-softmaxed Gram matrix, row-by-row in double precision."""
    c, h, w = feat_chw.shape
    x = np.asarray(feat_chw, dtype=np.float64).reshape(c, h * w).T
    n = h * w
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        row = np.array([float(np.dot(x[i], x[j])) for j in range(n)])
        row = np.exp(row - row.max())
        out[i] = row / row.sum()
    return out


def distill_oracle(teacher_feats, student_feats, weights) -> float:
    terms = []
    for t, s, w in zip(teacher_feats, student_feats, weights):
        at = affinity_oracle(np.asarray(t, dtype=np.float64))
        a_s = affinity_oracle(np.asarray(s, dtype=np.float64))
        terms.append(w * float(np.mean(np.abs(at - a_s))))
    return math.fsum(terms) / len(terms)


def metrics_oracle(pred, gt, valid, cap=None, d_min=None):
    """Naive per-pixel reference for the eight statistics."""
    ps, gs = [], []
    for p, g, m in zip(np.ravel(pred), np.ravel(gt), np.ravel(valid)):
        if m:
            p = float(p)
            g = float(g)
            if cap is not None:
                p = min(max(p, d_min), cap)
                g = min(max(g, d_min), cap)
            ps.append(p)
            gs.append(g)
    n = len(ps)
    rel = math.fsum(abs(g - p) / g for p, g in zip(ps, gs)) / n
    sq_rel = math.fsum((g - p) ** 2 / g for p, g in zip(ps, gs)) / n
    rmse = math.sqrt(math.fsum((g - p) ** 2 for p, g in zip(ps, gs)) / n)
    rmse_log = math.sqrt(math.fsum((math.log(g) - math.log(p)) ** 2 for p, g in zip(ps, gs)) / n)
    log10 = math.fsum(abs(math.log10(g) - math.log10(p)) for p, g in zip(ps, gs)) / n
    deltas = []
    for thr_pow in (1, 2, 3):
        thr = 1.25**thr_pow
        deltas.append(sum(1 for p, g in zip(ps, gs) if max(g / p, p / g) < thr) / n)
    return {
        "rel": rel, "sq_rel": sq_rel, "rmse": rmse, "rmse_log": rmse_log,
        "log10": log10, "delta1": deltas[0], "delta2": deltas[1], "delta3": deltas[2],
        "n_pixels": n,
    }


def finite_diff_grad(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (f(xp) - f(xm)) / (2 * step)
        it.iternext()
    return g


def grad_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-based relative error between gradient vectors."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def rotate_depth_oracle(values, valid, angle_deg):
    """Explicit inverse-rotation nearest-neighbor mapping for depth grids."""
    h, w = values.shape
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    out_v = np.zeros((h, w), dtype=np.float64)
    out_m = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            dx, dy = j - cx, i - cy
            sx = c * dx + s * dy + cx
            sy = -s * dx + c * dy + cy
            ry, rx = int(np.rint(sy)), int(np.rint(sx))
            if 0 <= ry < h and 0 <= rx < w and valid[ry, rx]:
                out_v[i, j] = values[ry, rx]
                out_m[i, j] = True
    return out_v, out_m

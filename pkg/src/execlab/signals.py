"""Single-venue and cross-venue microstructure features plus their
predictive-power evaluation by linear regression.

All rolling statistics use trailing windows that include the current grid
point, so no feature value at time t can see past t.  Missing values are
NaN throughout; cross-venue sums skip missing venues and are NaN only when
every venue is missing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .capture.resample import GRID_NS, FrameSet
from .errors import DegenerateXError, TooFewPointsError

DEFAULT_WINDOW_MS = 30_000
DEFAULT_HORIZONS_MS = (100, 200, 500, 1000, 5000, 10000)


@dataclass(frozen=True)
class FeatureSeries:
    name: str
    venue: str | None  # None for cross-venue features
    grid_ts: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def window_steps(window_ms: int, grid_ns: int = GRID_NS) -> int:
    steps = window_ms * 1_000_000 // grid_ns
    if steps < 1:
        raise ValueError("window shorter than one grid step")
    return steps


def horizon_steps(horizon_ms: int, grid_ns: int = GRID_NS) -> int:
    ns = horizon_ms * 1_000_000
    if ns <= 0 or ns % grid_ns:
        raise ValueError("horizon must be a positive multiple of the grid")
    return ns // grid_ns


def trailing_min_max(x: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Trailing-window (inclusive of t, expanding during warmup) min and max.

    NaNs are skipped inside the window; output is NaN where x itself is NaN.
    """
    bad = ~np.isfinite(x)
    lo_in = np.where(bad, np.inf, x)
    hi_in = np.where(bad, -np.inf, x)
    # Positive origin shifts the filter window left, making it trailing:
    # [t - window + 1, t]; 'nearest' edge padding turns the warmup into an
    # expanding window because padded entries replicate x[0].
    origin = (window - 1) // 2
    lo = minimum_filter1d(lo_in, size=window, mode="nearest", origin=origin)
    hi = maximum_filter1d(hi_in, size=window, mode="nearest", origin=origin)
    lo = np.where(bad, np.nan, lo)
    hi = np.where(bad, np.nan, hi)
    return lo, hi


def trailing_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing-window (inclusive, expanding warmup) NaN-skipping mean."""
    valid = np.isfinite(x)
    vals = np.where(valid, x, 0.0)
    csum = np.concatenate(([0.0], np.cumsum(vals)))
    ccnt = np.concatenate(([0], np.cumsum(valid)))
    idx = np.arange(len(x))
    start = np.maximum(idx - window + 1, 0)
    wsum = csum[idx + 1] - csum[start]
    wcnt = ccnt[idx + 1] - ccnt[start]
    out = np.full(len(x), np.nan)
    nz = wcnt > 0
    out[nz] = wsum[nz] / wcnt[nz]
    out[~valid] = np.nan
    return out


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def flow_imbalance(frames: FrameSet, venue: str) -> FeatureSeries:
    """Taker buy volume minus taker sell volume per grid window."""
    vf = frames.venues[venue]
    values = np.where(vf.present, vf.buy_volume - vf.sell_volume, np.nan)
    return FeatureSeries("flow_imbalance", venue, frames.grid_ts, values)


def flow_imbalance_norm(series: FeatureSeries, window: int) -> FeatureSeries:
    """Sign-preserving min/max normalization over a trailing window.

    sign(x) * (|x| - min|x|) / (max|x| - min|x|), extrema over the trailing
    `window` points including the current one; a degenerate window
    (max == min) yields 0.  Result lies in [-1, 1].
    """
    x = series.values
    mag = np.abs(x)
    lo, hi = trailing_min_max(mag, window)
    scale = hi - lo
    out = np.full(len(x), np.nan)
    ok = np.isfinite(x) & np.isfinite(scale) & (scale > 0)
    out[ok] = np.sign(x[ok]) * (mag[ok] - lo[ok]) / scale[ok]
    degenerate = np.isfinite(x) & np.isfinite(scale) & (scale == 0)
    out[degenerate] = 0.0
    return FeatureSeries(series.name + "_norm", series.venue, series.grid_ts, out)


def depth_imbalance(frames: FrameSet, venue: str) -> FeatureSeries:
    """(B - A) / (B + A) over the cumulative top-5 depth of each side."""
    vf = frames.venues[venue]
    b = vf.bid_qty.sum(axis=1)
    a = vf.ask_qty.sum(axis=1)
    total = b + a
    values = np.full(frames.n_frames, np.nan)
    ok = vf.present & (total > 0)
    values[ok] = (b[ok] - a[ok]) / total[ok]
    return FeatureSeries("depth_imbalance", venue, frames.grid_ts, values)


def cross_sum(series: list[FeatureSeries], name: str) -> FeatureSeries:
    """Sum across venues, skipping missing; NaN only when all are missing."""
    stack = np.vstack([s.values for s in series])
    finite = np.isfinite(stack)
    summed = np.where(finite, stack, 0.0).sum(axis=0)
    values = np.where(finite.any(axis=0), summed, np.nan)
    return FeatureSeries(name, None, series[0].grid_ts, values)


def peer_spread(frames: FrameSet, target: str) -> FeatureSeries:
    """Sum over peer venues of (peer mid - target mid), in price units."""
    tgt = frames.venues[target]
    total = np.zeros(frames.n_frames)
    n_peers = np.zeros(frames.n_frames, dtype=int)
    for name, vf in frames.venues.items():
        if name == target:
            continue
        ok = vf.present & tgt.present
        total = np.where(ok, total + vf.mid - tgt.mid, total)
        n_peers += ok.astype(int)
    values = np.where(n_peers > 0, total, np.nan)
    return FeatureSeries("peer_spread", target, frames.grid_ts, values)


def peer_spread_centered(series: FeatureSeries, window: int) -> FeatureSeries:
    """Spread minus its trailing-window mean (basis removal)."""
    centered = series.values - trailing_mean(series.values, window)
    return FeatureSeries(series.name + "_centered", series.venue, series.grid_ts, centered)


def future_return_bps(frames: FrameSet, venue: str, h_steps: int) -> np.ndarray:
    """1e4 * (mid[t+h] - mid[t]) / mid[t]; the final h points are missing."""
    mid = np.where(frames.venues[venue].present, frames.venues[venue].mid, np.nan)
    out = np.full(len(mid), np.nan)
    out[:-h_steps] = 1e4 * (mid[h_steps:] - mid[:-h_steps]) / mid[:-h_steps]
    return out


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------


def r_squared(y: np.ndarray, yhat: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class LinearFit:
    alpha: float
    beta: float
    r2: float
    n: int


def fit_line(x: np.ndarray, y: np.ndarray) -> LinearFit:
    """In-sample least-squares line of y on x over paired finite points."""
    mask = np.isfinite(x) & np.isfinite(y)
    xs, ys = x[mask], y[mask]
    if len(xs) < 3:
        raise TooFewPointsError(f"{len(xs)} paired points")
    xm = xs.mean()
    var = float(np.sum((xs - xm) ** 2))
    if var == 0.0:
        raise DegenerateXError("regressor has zero variance")
    beta = float(np.sum((xs - xm) * (ys - ys.mean())) / var)
    alpha = float(ys.mean() - beta * xm)
    return LinearFit(alpha, beta, r_squared(ys, alpha + beta * xs), len(xs))


@dataclass(frozen=True)
class RegressionReport:
    feature: str
    target_venue: str
    horizons_ms: tuple[int, ...]
    fits: tuple[LinearFit, ...]
    bin_horizon_ms: int
    bin_centers: np.ndarray
    bin_mean_bps: np.ndarray  # NaN where a bin is empty
    bin_counts: np.ndarray

    def r2_by_horizon(self) -> dict[int, float]:
        return {h: f.r2 for h, f in zip(self.horizons_ms, self.fits)}

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature,
            "target_venue": self.target_venue,
            "horizons": [
                {"horizon_ms": h, "alpha": f.alpha, "beta": f.beta, "r2": f.r2, "n": f.n}
                for h, f in zip(self.horizons_ms, self.fits)
            ],
            "bin_curve": {
                "horizon_ms": self.bin_horizon_ms,
                "centers": [float(c) for c in self.bin_centers],
                "mean_return_bps": [
                    None if not np.isfinite(v) else float(v) for v in self.bin_mean_bps
                ],
                "counts": [int(c) for c in self.bin_counts],
            },
        }


def bin_curve(
    x: np.ndarray, y: np.ndarray, n_bins: int = 20
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean of y in equal-width bins over the observed range of x.

    The support is the 0.5-99.5 percentile range so a handful of outliers
    cannot stretch the bins and starve them; samples beyond it count toward
    the edge bins.  For factors normalized into [-1, 1] this is the nominal
    range.
    """
    mask = np.isfinite(x) & np.isfinite(y)
    xs, ys = x[mask], y[mask]
    lo, hi = (float(q) for q in np.percentile(xs, [0.5, 99.5]))
    if lo == hi:
        lo, hi = float(xs.min()), float(xs.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.digitize(xs, edges) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=ys, minlength=n_bins)
    means = np.full(n_bins, np.nan)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz]
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, means, counts


def horizon_report(
    feature: FeatureSeries,
    frames: FrameSet,
    target_venue: str,
    horizons_ms: tuple[int, ...] = DEFAULT_HORIZONS_MS,
    bin_horizon_ms: int = 5000,
    n_bins: int = 20,
) -> RegressionReport:
    """One regression per horizon plus the bin curve at the designated horizon."""
    fits = []
    for h_ms in horizons_ms:
        y = future_return_bps(frames, target_venue, horizon_steps(h_ms, frames.grid_ns))
        fits.append(fit_line(feature.values, y))
    y_bin = future_return_bps(frames, target_venue, horizon_steps(bin_horizon_ms, frames.grid_ns))
    centers, means, counts = bin_curve(feature.values, y_bin, n_bins)
    return RegressionReport(
        feature=feature.name,
        target_venue=target_venue,
        horizons_ms=tuple(horizons_ms),
        fits=tuple(fits),
        bin_horizon_ms=bin_horizon_ms,
        bin_centers=centers,
        bin_mean_bps=means,
        bin_counts=counts,
    )


# ---------------------------------------------------------------------------
# Bundles consumed by the execution environment
# ---------------------------------------------------------------------------

SINGLE_FEATURES = ("flow_imbalance_norm", "depth_imbalance")
CROSS_FEATURES = (
    "flow_imbalance_norm",
    "depth_imbalance",
    "cross_flow_imbalance_norm",
    "cross_depth_imbalance",
    "peer_spread_centered_bps",
)


def feature_bundle(
    frames: FrameSet,
    target_venue: str,
    scope: str,
    window_ms: int = DEFAULT_WINDOW_MS,
) -> dict[str, np.ndarray]:
    """Feature arrays over the full grid for one experiment arm.

    scope "single": the target venue's own normalized flow and depth
    imbalances.  scope "cross": those plus the cross-venue sums and the
    centered peer spread (scaled to bps of the target mid so every entry
    is O(1)).
    """
    if scope not in ("single", "cross"):
        raise ValueError(f"scope must be 'single' or 'cross', got {scope!r}")
    w = window_steps(window_ms, frames.grid_ns)
    oimn = {
        v: flow_imbalance_norm(flow_imbalance(frames, v), w) for v in frames.venue_names
    }
    imb = {v: depth_imbalance(frames, v) for v in frames.venue_names}
    out: dict[str, np.ndarray] = {
        "flow_imbalance_norm": oimn[target_venue].values,
        "depth_imbalance": imb[target_venue].values,
    }
    if scope == "cross":
        out["cross_flow_imbalance_norm"] = cross_sum(
            list(oimn.values()), "cross_flow_imbalance_norm"
        ).values
        out["cross_depth_imbalance"] = cross_sum(
            list(imb.values()), "cross_depth_imbalance"
        ).values
        spread = peer_spread_centered(peer_spread(frames, target_venue), w).values
        mid = frames.venues[target_venue].mid
        with np.errstate(invalid="ignore", divide="ignore"):
            out["peer_spread_centered_bps"] = 1e4 * spread / mid
    return out

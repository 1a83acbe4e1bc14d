import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from execlab.capture.resample import GRID_NS, FrameSet, VenueFrames
from execlab.errors import DegenerateXError, TooFewPointsError
from execlab.signals import (
    FeatureSeries,
    bin_curve,
    cross_sum,
    depth_imbalance,
    feature_bundle,
    fit_line,
    flow_imbalance,
    flow_imbalance_norm,
    future_return_bps,
    horizon_report,
    peer_spread,
    peer_spread_centered,
    r_squared,
    trailing_mean,
    trailing_min_max,
)
from execlab.synth import SynthConfig, generate_frames


def frames_from(mid=None, buy=None, sell=None, bid_qty=None, ask_qty=None, venue="v0", present=None):
    n = len(mid if mid is not None else buy)
    mid = np.asarray(mid, dtype=float) if mid is not None else np.full(n, 100.0)
    buy = np.asarray(buy, dtype=float) if buy is not None else np.zeros(n)
    sell = np.asarray(sell, dtype=float) if sell is not None else np.zeros(n)
    bq = np.asarray(bid_qty, dtype=float) if bid_qty is not None else np.ones((n, 5))
    aq = np.asarray(ask_qty, dtype=float) if ask_qty is not None else np.ones((n, 5))
    pres = np.asarray(present, dtype=bool) if present is not None else np.ones(n, dtype=bool)
    vf = VenueFrames(
        present=pres,
        best_bid=mid - 0.05,
        best_ask=mid + 0.05,
        mid=mid,
        buy_volume=buy,
        sell_volume=sell,
        bid_price=np.tile(mid[:, None], (1, 5)),
        bid_qty=bq,
        ask_price=np.tile(mid[:, None], (1, 5)),
        ask_qty=aq,
    )
    return vf


def build_frameset(**venues):
    n = len(next(iter(venues.values())).mid)
    return FrameSet(grid_ts=np.arange(1, n + 1) * GRID_NS, venues=venues)


# -- rolling helpers against brute-force oracles ----------------------------


def brute_trailing_min_max(x, window):
    lo = np.full(len(x), np.nan)
    hi = np.full(len(x), np.nan)
    for t in range(len(x)):
        if not np.isfinite(x[t]):
            continue
        seg = x[max(0, t - window + 1) : t + 1]
        seg = seg[np.isfinite(seg)]
        lo[t] = seg.min()
        hi[t] = seg.max()
    return lo, hi


def brute_trailing_mean(x, window):
    out = np.full(len(x), np.nan)
    for t in range(len(x)):
        if not np.isfinite(x[t]):
            continue
        seg = x[max(0, t - window + 1) : t + 1]
        seg = seg[np.isfinite(seg)]
        out[t] = seg.mean()
    return out


@settings(max_examples=80, deadline=None)
@given(
    st.lists(
        st.one_of(st.floats(-50, 50), st.just(float("nan"))), min_size=1, max_size=120
    ),
    st.integers(1, 15),
)
def test_trailing_extrema_match_bruteforce(vals, window):
    x = np.asarray(vals)
    lo, hi = trailing_min_max(x, window)
    blo, bhi = brute_trailing_min_max(x, window)
    assert np.allclose(lo, blo, equal_nan=True)
    assert np.allclose(hi, bhi, equal_nan=True)


@settings(max_examples=80, deadline=None)
@given(
    st.lists(
        st.one_of(st.floats(-50, 50), st.just(float("nan"))), min_size=1, max_size=120
    ),
    st.integers(1, 15),
)
def test_trailing_mean_matches_bruteforce(vals, window):
    x = np.asarray(vals)
    assert np.allclose(trailing_mean(x, window), brute_trailing_mean(x, window), equal_nan=True)


# -- feature examples --------------------------------------------------------


def test_flow_imbalance_examples():
    vf = frames_from(mid=[100, 100, 100], buy=[10, 10, 0], sell=[10, 4, 0])
    frames = build_frameset(v0=vf)
    oim = flow_imbalance(frames, "v0")
    assert oim.values.tolist() == [0.0, 6.0, 0.0]


def test_flow_imbalance_missing_when_absent():
    vf = frames_from(mid=[100, 100], buy=[1, 1], sell=[0, 0], present=[False, True])
    frames = build_frameset(v0=vf)
    oim = flow_imbalance(frames, "v0")
    assert np.isnan(oim.values[0]) and oim.values[1] == 1.0


def test_flow_imbalance_norm_hand_example():
    # trailing window {2, 6, 4} with current value -4 -> -(4-2)/(6-2) = -0.5
    series = FeatureSeries("flow_imbalance", "v0", np.arange(3), np.array([2.0, -6.0, -4.0]))
    out = flow_imbalance_norm(series, window=3)
    assert out.values[2] == pytest.approx(-0.5)
    # boundaries: window max -> sign, first point degenerate -> 0
    assert out.values[0] == 0.0
    assert out.values[1] == pytest.approx(-1.0)


def test_flow_imbalance_norm_range_and_degenerate():
    rng = np.random.default_rng(0)
    series = FeatureSeries("f", "v0", np.arange(500), rng.normal(size=500))
    out = flow_imbalance_norm(series, window=30).values
    assert np.nanmax(np.abs(out)) <= 1.0 + 1e-12
    const = FeatureSeries("f", "v0", np.arange(5), np.full(5, 3.0))
    assert flow_imbalance_norm(const, window=4).values.tolist() == [0.0] * 5


def test_depth_imbalance_examples():
    even = frames_from(mid=[100.0], bid_qty=np.full((1, 5), 2.0), ask_qty=np.full((1, 5), 2.0))
    assert depth_imbalance(build_frameset(v0=even), "v0").values[0] == 0.0
    one_sided = frames_from(mid=[100.0], bid_qty=np.full((1, 5), 2.0), ask_qty=np.zeros((1, 5)))
    assert depth_imbalance(build_frameset(v0=one_sided), "v0").values[0] == 1.0
    skew = frames_from(mid=[100.0], bid_qty=np.full((1, 5), 6.0), ask_qty=np.full((1, 5), 2.0))
    assert depth_imbalance(build_frameset(v0=skew), "v0").values[0] == pytest.approx(0.5)


def test_cross_sum_examples():
    ts = np.arange(1)
    mk = lambda v: FeatureSeries("f", "x", ts, np.array([v]))
    assert cross_sum([mk(0.5), mk(-0.2), mk(0.1)], "c").values[0] == pytest.approx(0.4)
    assert cross_sum([mk(0.5)], "c").values[0] == pytest.approx(0.5)
    assert cross_sum([mk(0.5), mk(0.5), mk(-1.0)], "c").values[0] == pytest.approx(0.0)
    allnan = cross_sum([mk(float("nan")), mk(float("nan"))], "c")
    assert np.isnan(allnan.values[0])
    skipped = cross_sum([mk(0.3), mk(float("nan"))], "c")
    assert skipped.values[0] == pytest.approx(0.3)


def test_cross_decomposition_exact():
    cfg = SynthConfig(seed=3)
    frames = generate_frames(cfg, 30.0)
    per_venue = [flow_imbalance(frames, v) for v in frames.venue_names]
    total = cross_sum(per_venue, "cross")
    manual = sum(s.values for s in per_venue)
    assert np.array_equal(total.values, manual)


def test_peer_spread_examples():
    v0 = frames_from(mid=[100.0, 100.0])
    v1 = frames_from(mid=[100.2, 100.0])
    v2 = frames_from(mid=[100.3, 100.0])
    frames = build_frameset(v0=v0, v1=v1, v2=v2)
    spread = peer_spread(frames, "v0")
    assert spread.values[0] == pytest.approx(0.5)
    assert spread.values[1] == pytest.approx(0.0)
    solo = build_frameset(v0=frames_from(mid=[100.0]))
    assert np.isnan(peer_spread(solo, "v0").values[0])


def test_peer_spread_centered_examples():
    ts = np.arange(3)
    series = FeatureSeries("peer_spread", "v0", ts, np.array([1.0, 1.0, 4.0]))
    out = peer_spread_centered(series, window=3)
    assert out.values[2] == pytest.approx(2.0)
    const = FeatureSeries("peer_spread", "v0", ts, np.full(3, 2.5))
    assert np.allclose(peer_spread_centered(const, window=3).values, 0.0)
    w1 = peer_spread_centered(series, window=1)
    assert np.allclose(w1.values, 0.0)


def test_future_return_examples():
    flat = build_frameset(v0=frames_from(mid=[100.0] * 5))
    assert np.allclose(future_return_bps(flat, "v0", 2)[:3], 0.0)
    step = build_frameset(v0=frames_from(mid=[100.0, 100.01]))
    out = future_return_bps(step, "v0", 1)
    assert out[0] == pytest.approx(1.0)
    assert np.isnan(out[1])


# -- regression ---------------------------------------------------------------


def test_r_squared_hand_example():
    assert r_squared(np.array([1.0, 2, 3]), np.array([1.0, 2, 4])) == pytest.approx(0.5)


def test_r_squared_boundaries():
    y = np.array([1.0, 2.0, 3.0])
    assert r_squared(y, y) == 1.0
    assert r_squared(y, np.full(3, y.mean())) == 0.0


def test_fit_line_perfect_and_mean_prediction():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    fit = fit_line(x, 2 * x + 1)
    assert fit.beta == pytest.approx(2.0)
    assert fit.alpha == pytest.approx(1.0)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_line_r2_matches_independent_two_pass():
    rng = np.random.default_rng(4)
    x = rng.normal(size=400)
    y = 0.3 * x + rng.normal(size=400)
    fit = fit_line(x, y)
    yhat = fit.alpha + fit.beta * x
    ss_res = np.sum((y - yhat) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    oracle = 1.0 - ss_res / ss_tot
    assert abs(fit.r2 - oracle) <= 1e-12 * max(1.0, abs(oracle))


def test_fit_line_errors():
    with pytest.raises(TooFewPointsError):
        fit_line(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    with pytest.raises(DegenerateXError):
        fit_line(np.full(10, 2.0), np.arange(10.0))


def test_bin_curve_self_prediction_slope_one():
    rng = np.random.default_rng(5)
    y = rng.normal(size=5000)
    centers, means, counts = bin_curve(y, y, n_bins=20)
    ok = counts > 0
    # mean of y within a bin of y is the bin center up to in-bin spread
    assert np.all(np.diff(means[ok]) > 0)
    slope = np.polyfit(centers[ok], means[ok], 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_horizon_report_shapes_and_bins():
    cfg = SynthConfig(seed=8)
    frames = generate_frames(cfg, 120.0)
    feat = depth_imbalance(frames, "v0")
    report = horizon_report(feat, frames, "v0", horizons_ms=(100, 500, 1000), bin_horizon_ms=500)
    assert len(report.fits) == 3
    assert len(report.bin_centers) == 20
    assert report.bin_counts.sum() > 0
    d = report.to_json_dict()
    assert {h["horizon_ms"] for h in d["horizons"]} == {100, 500, 1000}


def test_feature_bundle_scopes():
    cfg = SynthConfig(seed=2)
    frames = generate_frames(cfg, 20.0)
    single = feature_bundle(frames, "v1", "single")
    assert list(single) == ["flow_imbalance_norm", "depth_imbalance"]
    cross = feature_bundle(frames, "v1", "cross")
    assert list(cross) == [
        "flow_imbalance_norm",
        "depth_imbalance",
        "cross_flow_imbalance_norm",
        "cross_depth_imbalance",
        "peer_spread_centered_bps",
    ]
    with pytest.raises(ValueError):
        feature_bundle(frames, "v1", "both")


def test_anti_lookahead_under_future_permutation():
    # Mutating data after grid point t must not change any feature at or
    # before t.
    cfg = SynthConfig(seed=31)
    frames_a = generate_frames(cfg, 60.0)
    frames_b = generate_frames(cfg, 60.0)
    cut = 3000
    rng = np.random.default_rng(0)
    for vf in frames_b.venues.values():
        perm = rng.permutation(np.arange(cut + 1, frames_b.n_frames))
        for field in ("mid", "buy_volume", "sell_volume"):
            arr = getattr(vf, field)
            arr[cut + 1 :] = arr[perm]
        vf.bid_qty[cut + 1 :] = vf.bid_qty[perm]
        vf.ask_qty[cut + 1 :] = vf.ask_qty[perm]
    for scope in ("single", "cross"):
        fa = feature_bundle(frames_a, "v1", scope)
        fb = feature_bundle(frames_b, "v1", scope)
        for name in fa:
            assert np.array_equal(fa[name][: cut + 1], fb[name][: cut + 1], equal_nan=True), (
                scope,
                name,
            )

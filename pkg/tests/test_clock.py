import numpy as np
import pytest
from hypothesis import given, strategies as st

from execlab.capture import MarketRecord, TradePayload, align_clock
from execlab.capture.clock import ClockMap
from execlab.errors import FewerThanTwoKnots


def _rec(local_ts, exch_ts=None, venue="v0"):
    return MarketRecord(venue, "trade", local_ts, TradePayload(1.0, 1.0, "buy"), exch_ts=exch_ts)


def _map(knots):
    return ClockMap(
        venue="v0",
        local_knots=np.asarray([k[0] for k in knots], dtype=np.int64),
        exch_knots=np.asarray([k[1] for k in knots], dtype=np.int64),
    )


def test_exact_at_knot():
    cmap = _map([(100, 90), (200, 190)])
    assert cmap.to_exchange(100) == 90
    assert cmap.to_exchange(200) == 190


def test_linear_interpolation_between_knots():
    cmap = _map([(100, 90), (200, 190)])
    assert cmap.to_exchange(150) == 140


def test_constant_offset_extrapolation():
    cmap = _map([(100, 90), (200, 150)])
    assert cmap.to_exchange(40) == 30  # first knot offset -10
    assert cmap.to_exchange(260) == 210  # last knot offset -50


def test_single_knot_rejected():
    with pytest.raises(FewerThanTwoKnots):
        align_clock([_rec(100, 90), _rec(150), _rec(200)])


def test_nonmonotone_exch_knot_dropped_not_fatal():
    cmap = align_clock([_rec(100, 90), _rec(200, 50), _rec(300, 290)])
    assert cmap.rejected_knots == 1
    assert list(cmap.local_knots) == [100, 300]
    assert cmap.to_exchange(100) == 90
    assert cmap.to_exchange(300) == 290


def test_epoch_scale_exactness():
    # Epoch nanoseconds exceed float64 integer precision; knots must still
    # map exactly.
    base = 1_700_000_000_000_000_000
    cmap = _map([(base, base - 123_456), (base + 60_000_000_000, base + 60_000_000_000 - 123_000)])
    assert cmap.to_exchange(base) == base - 123_456
    assert cmap.to_exchange(base + 60_000_000_000) == base + 60_000_000_000 - 123_000


@given(
    st.lists(
        st.tuples(st.integers(0, 10**6), st.integers(-1000, 1000)),
        min_size=2,
        max_size=30,
    ),
    st.lists(st.integers(-10**5, 2 * 10**6), min_size=1, max_size=50),
)
def test_mapped_time_nondecreasing(raw_knots, queries):
    # Build valid knots: strictly increasing local, nondecreasing exch.
    raw_knots.sort()
    locals_, exchs = [], []
    for loc, off in raw_knots:
        if locals_ and loc <= locals_[-1]:
            continue
        exch = (exchs[-1] if exchs else 0) + abs(off)
        locals_.append(loc)
        exchs.append(exch)
    if len(locals_) < 2:
        return
    cmap = _map(list(zip(locals_, exchs)))
    queries = sorted(queries)
    mapped = [cmap.to_exchange(q) for q in queries]
    assert all(a <= b for a, b in zip(mapped, mapped[1:]))

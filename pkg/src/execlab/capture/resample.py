"""Fixed 10ms-grid resampling of a merged multi-venue record stream.

Each grid point g owns the half-open window (g - 10ms, g].  A frame carries
the last book state with local_ts <= g and the taker volumes aggregated over
the window, so no record after g can influence it.  Venues with no two-sided
book yet are marked absent; downstream features treat absent as missing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from ..errors import CrossedTicker, UnsortedInput
from .book import LocalBook, apply_delta, apply_snapshot, merge_ticker
from .records import (
    KIND_BOOK_DELTA,
    KIND_BOOK_SNAPSHOT,
    KIND_TICKER,
    KIND_TRADE,
    SIDE_BUY,
    MarketRecord,
)

GRID_NS = 10_000_000  # 10ms
BOOK_DEPTH = 5

CSV_COLUMNS = (
    ["grid_ts", "venue", "present", "best_bid", "best_ask", "mid", "buy_volume", "sell_volume"]
    + [f"bid_price_{i}" for i in range(1, BOOK_DEPTH + 1)]
    + [f"bid_qty_{i}" for i in range(1, BOOK_DEPTH + 1)]
    + [f"ask_price_{i}" for i in range(1, BOOK_DEPTH + 1)]
    + [f"ask_qty_{i}" for i in range(1, BOOK_DEPTH + 1)]
)


@dataclass
class VenueFrames:
    """Column arrays for one venue, one row per grid point."""

    present: np.ndarray  # bool
    best_bid: np.ndarray
    best_ask: np.ndarray
    mid: np.ndarray
    buy_volume: np.ndarray
    sell_volume: np.ndarray
    bid_price: np.ndarray  # (n, BOOK_DEPTH), NaN-padded
    bid_qty: np.ndarray  # (n, BOOK_DEPTH), 0-padded
    ask_price: np.ndarray
    ask_qty: np.ndarray


@dataclass
class FrameSet:
    grid_ts: np.ndarray  # int64
    venues: dict[str, VenueFrames]
    grid_ns: int = GRID_NS

    @property
    def n_frames(self) -> int:
        return len(self.grid_ts)

    @property
    def venue_names(self) -> list[str]:
        return sorted(self.venues)


class _VenueAccumulator:
    def __init__(self):
        self.book = LocalBook()
        self.buy = 0.0
        self.sell = 0.0
        self.rejected_tickers = 0
        self.rows: list[tuple] = []

    def on_record(self, rec: MarketRecord) -> None:
        if rec.kind == KIND_TRADE:
            if rec.payload.side == SIDE_BUY:
                self.buy += rec.payload.qty
            else:
                self.sell += rec.payload.qty
        elif rec.kind == KIND_BOOK_SNAPSHOT:
            apply_snapshot(self.book, rec.payload, rec.local_ts)
        elif rec.kind == KIND_BOOK_DELTA:
            apply_delta(self.book, rec.payload, rec.local_ts)
        elif rec.kind == KIND_TICKER:
            try:
                merge_ticker(self.book, rec.payload, rec.local_ts)
            except CrossedTicker:
                self.rejected_tickers += 1

    def emit(self) -> None:
        book = self.book
        present = book.two_sided()
        bids = book.top_levels("bid", BOOK_DEPTH)
        asks = book.top_levels("ask", BOOK_DEPTH)
        bb = book.best_bid()
        ba = book.best_ask()
        self.rows.append(
            (
                present,
                bb if bb is not None else math.nan,
                ba if ba is not None else math.nan,
                (bb + ba) / 2.0 if present else math.nan,
                self.buy,
                self.sell,
                bids,
                asks,
            )
        )
        self.buy = 0.0
        self.sell = 0.0


def _rows_to_frames(rows: list[tuple]) -> VenueFrames:
    n = len(rows)
    present = np.zeros(n, dtype=bool)
    best_bid = np.full(n, np.nan)
    best_ask = np.full(n, np.nan)
    mid = np.full(n, np.nan)
    buy = np.zeros(n)
    sell = np.zeros(n)
    bid_px = np.full((n, BOOK_DEPTH), np.nan)
    bid_qty = np.zeros((n, BOOK_DEPTH))
    ask_px = np.full((n, BOOK_DEPTH), np.nan)
    ask_qty = np.zeros((n, BOOK_DEPTH))
    for i, (p, bb, ba, m, bv, sv, bids, asks) in enumerate(rows):
        present[i] = p
        best_bid[i] = bb
        best_ask[i] = ba
        mid[i] = m
        buy[i] = bv
        sell[i] = sv
        for j, (px, q) in enumerate(bids):
            bid_px[i, j] = px
            bid_qty[i, j] = q
        for j, (px, q) in enumerate(asks):
            ask_px[i, j] = px
            ask_qty[i, j] = q
    return VenueFrames(present, best_bid, best_ask, mid, buy, sell, bid_px, bid_qty, ask_px, ask_qty)


def resample(
    records: Iterable[MarketRecord],
    grid_ns: int = GRID_NS,
    venues: Sequence[str] | None = None,
) -> FrameSet:
    """Resample a local_ts-sorted record stream onto the fixed grid.

    Raises UnsortedInput with the 0-based position of the first violation.
    The venue universe is taken from `venues` or discovered from the stream
    (which forces materializing it first).
    """
    if venues is None:
        records = list(records)
        venues = sorted({r.venue for r in records})
    accs = {v: _VenueAccumulator() for v in venues}

    grid: int | None = None
    grid_points: list[int] = []
    last_ts: int | None = None
    for pos, rec in enumerate(records):
        if last_ts is not None and rec.local_ts < last_ts:
            raise UnsortedInput(pos)
        last_ts = rec.local_ts
        if grid is None:
            grid = -(-rec.local_ts // grid_ns) * grid_ns  # ceil to grid
        while rec.local_ts > grid:
            grid_points.append(grid)
            for acc in accs.values():
                acc.emit()
            grid += grid_ns
        if rec.venue in accs:
            accs[rec.venue].on_record(rec)
    if grid is not None:
        grid_points.append(grid)
        for acc in accs.values():
            acc.emit()

    return FrameSet(
        grid_ts=np.asarray(grid_points, dtype=np.int64),
        venues={v: _rows_to_frames(accs[v].rows) for v in venues},
        grid_ns=grid_ns,
    )


def _fmt(x: float) -> str:
    if math.isnan(x):
        return ""
    return format(x, ".9g")


def write_frames_csv(frames: FrameSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_frames(frames, fh)


def _write_frames(frames: FrameSet, fh: IO[str]) -> None:
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for venue in frames.venue_names:
        vf = frames.venues[venue]
        for i, ts in enumerate(frames.grid_ts):
            cells = [
                str(int(ts)),
                venue,
                "1" if vf.present[i] else "0",
                _fmt(vf.best_bid[i]),
                _fmt(vf.best_ask[i]),
                _fmt(vf.mid[i]),
                _fmt(vf.buy_volume[i]),
                _fmt(vf.sell_volume[i]),
            ]
            for block in (vf.bid_price, vf.bid_qty, vf.ask_price, vf.ask_qty):
                cells.extend(_fmt(block[i, j]) for j in range(BOOK_DEPTH))
            fh.write(",".join(cells) + "\n")

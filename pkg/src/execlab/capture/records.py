"""Canonical capture format: one timestamped venue event per NDJSON line.

Wire format (one record per line, keys in this order):

    {"venue": str, "kind": str, "local_ts": int, "exch_ts": int?, "payload": {...}}

Timestamps are integer nanoseconds on the collector clock (``local_ts``) and,
when the venue reported one, on the venue clock (``exch_ts``).  Payload bodies
by kind:

    trade          {"price": float, "qty": float, "side": "buy"|"sell"}
    book_snapshot  {"bids": [[price, qty], ...], "asks": [[price, qty], ...]}
    book_delta     same shape as book_snapshot; qty 0 deletes a level
    ticker         {"bid_price": float, "bid_qty": float,
                    "ask_price": float, "ask_qty": float}

Writing the records read from a valid file reproduces it byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from ..errors import MalformedLine, UnknownKind

KIND_TRADE = "trade"
KIND_BOOK_SNAPSHOT = "book_snapshot"
KIND_BOOK_DELTA = "book_delta"
KIND_TICKER = "ticker"

KINDS = (KIND_TRADE, KIND_BOOK_SNAPSHOT, KIND_BOOK_DELTA, KIND_TICKER)

SIDE_BUY = "buy"
SIDE_SELL = "sell"


@dataclass(frozen=True)
class TradePayload:
    price: float
    qty: float
    side: str  # taker side

    def to_wire(self) -> dict:
        return {"price": self.price, "qty": self.qty, "side": self.side}


@dataclass(frozen=True)
class BookPayload:
    """Price levels for a snapshot or delta; qty 0 only meaningful in deltas."""

    bids: tuple[tuple[float, float], ...] = field(default=())
    asks: tuple[tuple[float, float], ...] = field(default=())

    def to_wire(self) -> dict:
        return {
            "bids": [[p, q] for p, q in self.bids],
            "asks": [[p, q] for p, q in self.asks],
        }


@dataclass(frozen=True)
class TickerPayload:
    bid_price: float
    bid_qty: float
    ask_price: float
    ask_qty: float

    def to_wire(self) -> dict:
        return {
            "bid_price": self.bid_price,
            "bid_qty": self.bid_qty,
            "ask_price": self.ask_price,
            "ask_qty": self.ask_qty,
        }


Payload = Union[TradePayload, BookPayload, TickerPayload]


@dataclass(frozen=True)
class MarketRecord:
    venue: str
    kind: str
    local_ts: int
    payload: Payload
    exch_ts: int | None = None

    def to_wire(self) -> dict:
        line: dict = {"venue": self.venue, "kind": self.kind, "local_ts": self.local_ts}
        if self.exch_ts is not None:
            line["exch_ts"] = self.exch_ts
        line["payload"] = self.payload.to_wire()
        return line


def _require(cond: bool, line_no: int, reason: str) -> None:
    if not cond:
        raise MalformedLine(line_no, reason)


def _parse_levels(raw, line_no: int, what: str) -> tuple[tuple[float, float], ...]:
    _require(isinstance(raw, list), line_no, f"{what} must be a list")
    out = []
    for lvl in raw:
        _require(
            isinstance(lvl, list) and len(lvl) == 2, line_no, f"{what} level must be [price, qty]"
        )
        price, qty = lvl
        _require(isinstance(price, (int, float)) and price > 0, line_no, f"{what} price must be > 0")
        _require(isinstance(qty, (int, float)) and qty >= 0, line_no, f"{what} qty must be >= 0")
        out.append((float(price), float(qty)))
    return tuple(out)


def parse_record(obj: dict, line_no: int = 0) -> MarketRecord:
    _require(isinstance(obj, dict), line_no, "record must be a JSON object")
    for key in ("venue", "kind", "local_ts", "payload"):
        _require(key in obj, line_no, f"missing field {key!r}")
    venue = obj["venue"]
    kind = obj["kind"]
    local_ts = obj["local_ts"]
    _require(isinstance(venue, str) and venue != "", line_no, "venue must be a nonempty string")
    _require(isinstance(local_ts, int), line_no, "local_ts must be an integer")
    exch_ts = obj.get("exch_ts")
    _require(exch_ts is None or isinstance(exch_ts, int), line_no, "exch_ts must be an integer")
    body = obj["payload"]
    _require(isinstance(body, dict), line_no, "payload must be an object")

    if kind == KIND_TRADE:
        price, qty, side = body.get("price"), body.get("qty"), body.get("side")
        _require(isinstance(price, (int, float)) and price > 0, line_no, "trade price must be > 0")
        _require(isinstance(qty, (int, float)) and qty > 0, line_no, "trade qty must be > 0")
        _require(side in (SIDE_BUY, SIDE_SELL), line_no, "trade side must be 'buy' or 'sell'")
        payload: Payload = TradePayload(float(price), float(qty), side)
    elif kind in (KIND_BOOK_SNAPSHOT, KIND_BOOK_DELTA):
        payload = BookPayload(
            bids=_parse_levels(body.get("bids", []), line_no, "bids"),
            asks=_parse_levels(body.get("asks", []), line_no, "asks"),
        )
    elif kind == KIND_TICKER:
        vals = []
        for key in ("bid_price", "bid_qty", "ask_price", "ask_qty"):
            v = body.get(key)
            _require(isinstance(v, (int, float)) and v > 0, line_no, f"ticker {key} must be > 0")
            vals.append(float(v))
        payload = TickerPayload(*vals)
    else:
        raise UnknownKind(str(kind), line_no)
    return MarketRecord(venue=venue, kind=kind, local_ts=local_ts, payload=payload, exch_ts=exch_ts)


def record_to_line(record: MarketRecord) -> str:
    return json.dumps(record.to_wire(), separators=(",", ":"), ensure_ascii=False)


def read_capture(path: str | Path) -> Iterator[MarketRecord]:
    """Stream records from an NDJSON capture file.

    Raises MalformedLine with the 1-based offending line number; an empty file
    yields an empty stream.
    """
    with open(path, "r", encoding="utf-8") as fh:
        yield from read_capture_lines(fh)


def read_capture_lines(lines: Iterable[str]) -> Iterator[MarketRecord]:
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            # A blank trailing line is tolerated; a blank interior line is not
            # distinguishable here, so blanks are simply skipped.
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON: {exc.msg}") from exc
        yield parse_record(obj, line_no)


def write_capture(records: Iterable[MarketRecord], path: str | Path) -> int:
    """Write records as NDJSON; returns the number of records written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        count = write_capture_lines(records, fh)
    return count


def write_capture_lines(records: Iterable[MarketRecord], fh: IO[str]) -> int:
    count = 0
    for record in records:
        fh.write(record_to_line(record))
        fh.write("\n")
        count += 1
    return count

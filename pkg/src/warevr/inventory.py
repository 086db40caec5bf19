"""Append-only inventory database with last-known-location queries.

Records land in a single newline-delimited JSON log; an in-memory index
serves queries. One writer, any number of readers over snapshots.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .warehouse import SlotAddress

REPORT_COLUMNS = (
    "barcode_id", "rack", "side", "section", "tier",
    "box_type", "w", "h", "d", "snapshot_ref", "tick",
)


class DuplicateRecordError(ValueError):
    pass


class UnknownMissionError(KeyError):
    pass


@dataclass(frozen=True)
class InventoryRecord:
    barcode_id: str
    address: SlotAddress
    box_type: str
    measured_dims: tuple[float, float, float]
    snapshot_ref: str
    mission_id: int
    tick: int

    def __post_init__(self):
        if not self.barcode_id:
            raise ValueError("barcode_id must be non-empty")
        if not self.snapshot_ref:
            raise ValueError("snapshot_ref must be present")
        if len(self.measured_dims) != 3:
            raise ValueError("measured_dims must have 3 axes")

    def to_dict(self) -> dict:
        a = self.address
        return {
            "barcode_id": self.barcode_id,
            "address": {"rack": a.rack, "side": a.side, "section": a.section, "tier": a.tier},
            "box_type": self.box_type,
            "measured_dims": list(self.measured_dims),
            "snapshot_ref": self.snapshot_ref,
            "mission_id": self.mission_id,
            "tick": self.tick,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InventoryRecord":
        a = d["address"]
        return cls(
            barcode_id=d["barcode_id"],
            address=SlotAddress(a["rack"], a["side"], a["section"], a["tier"]),
            box_type=d["box_type"],
            measured_dims=tuple(d["measured_dims"]),
            snapshot_ref=d["snapshot_ref"],
            mission_id=d["mission_id"],
            tick=d["tick"],
        )


@dataclass(frozen=True)
class StockReport:
    mission_id: int
    counts: dict
    records: tuple[InventoryRecord, ...]
    unresolved_candidates: int = 0


class InventoryStore:
    """Log-backed store; pass path=None for a purely in-memory instance."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: list[InventoryRecord] = []
        self._by_key: dict[tuple[str, int], InventoryRecord] = {}
        self._missions: set[int] = set()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                if entry.get("kind") == "mission":
                    self._missions.add(entry["mission_id"])
                    continue
                rec = InventoryRecord.from_dict(entry)
                self._records.append(rec)
                self._by_key[(rec.barcode_id, rec.mission_id)] = rec
                self._missions.add(rec.mission_id)

    def __len__(self) -> int:
        return len(self._records)

    def register_mission(self, mission_id: int) -> None:
        """Make a mission exportable even before its first record."""
        if mission_id in self._missions:
            return
        self._missions.add(mission_id)
        self._append_line({"kind": "mission", "mission_id": mission_id})

    def records(self) -> tuple[InventoryRecord, ...]:
        return tuple(self._records)

    def records_for_mission(self, mission_id: int) -> tuple[InventoryRecord, ...]:
        return tuple(r for r in self._records if r.mission_id == mission_id)

    def _append_line(self, obj: dict) -> None:
        if self.path is None:
            return
        with self.path.open("a") as fh:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
            fh.flush()


def insert_record(store: InventoryStore, record: InventoryRecord) -> InventoryStore:
    key = (record.barcode_id, record.mission_id)
    if key in store._by_key:
        raise DuplicateRecordError(f"{key} already recorded")
    store._records.append(record)
    store._by_key[key] = record
    store._missions.add(record.mission_id)
    store._append_line(record.to_dict())
    return store


def query_by_tag(store: InventoryStore, barcode_id: str) -> InventoryRecord | None:
    """Latest sighting of a tag: highest (mission_id, tick) wins. None when
    the tag was never recorded."""
    best = None
    for rec in store._records:
        if rec.barcode_id != barcode_id:
            continue
        if best is None or (rec.mission_id, rec.tick) > (best.mission_id, best.tick):
            best = rec
    return best


def build_report(store: InventoryStore, mission_id: int, unresolved_candidates: int = 0) -> StockReport:
    if mission_id not in store._missions:
        raise UnknownMissionError(mission_id)
    records = store.records_for_mission(mission_id)
    counts: dict = {}
    for rec in records:
        counts[rec.box_type] = counts.get(rec.box_type, 0) + 1
    return StockReport(mission_id, counts, records, unresolved_candidates)


def export_report(store: InventoryStore, mission_id: int, format: str = "csv") -> str:
    """Stable column order; identical stores export byte-identical text."""
    if mission_id not in store._missions:
        raise UnknownMissionError(mission_id)
    records = store.records_for_mission(mission_id)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for rec in records:
            writer.writerow(_report_row(rec))
        return buf.getvalue()
    if format == "json":
        rows = [dict(zip(REPORT_COLUMNS, _report_row(rec))) for rec in records]
        return json.dumps(rows, indent=2) + "\n"
    raise ValueError(f"unknown format {format!r}")


def _report_row(rec: InventoryRecord):
    a = rec.address
    w, h, d = rec.measured_dims
    return [rec.barcode_id, a.rack, a.side, a.section, a.tier,
            rec.box_type, w, h, d, rec.snapshot_ref, rec.tick]

"""Keeps the repo documentation honest: the committed golden wire captures
and the golden inventory log must be byte-identical to what the current
code produces, and everything the live service emits must validate against
the committed frame schema.

Run `python3 tests/test_docs.py` to regenerate both golden files after an
intentional format change.
"""

from __future__ import annotations

import asyncio
import itertools
import json
from pathlib import Path

import pytest

from warevr.inventory import InventoryRecord, InventoryStore, insert_record, query_by_tag
from warevr.runtime import Simulation
from warevr.scan import NOISELESS
from warevr.telemetry import (
    KIND_COMMAND,
    KIND_ERROR,
    KIND_EVENT,
    KIND_HEARTBEAT,
    KIND_HELLO,
    KIND_STATE,
    KIND_VIEW,
    PROTOCOL_VERSION,
    Frame,
    ProtocolError,
    ServeConfig,
    TelemetryServer,
    decode_frame,
    encode_frame,
    map_payload,
)
from warevr.warehouse import SlotAddress, load_spec_file

DOCS = Path(__file__).resolve().parent.parent / "docs"
GOLDEN_FRAMES = DOCS / "golden-frames.ndjson"
GOLDEN_LOG = DOCS / "golden-inventory.log"
SCHEMA = DOCS / "protocol.schema.json"
SPEC = Path(__file__).resolve().parent.parent / "src" / "warevr" / "data" / "warehouse.json"


# --- builders (also used by the __main__ regenerator) -------------------------------

def build_golden_frames() -> list[Frame]:
    spec, extras = load_spec_file(SPEC)
    sim = Simulation(spec, extras, seed=7, fill_count=40, noise=NOISELESS)
    seq = itertools.count(1)
    frames = [
        Frame(KIND_HELLO, next(seq), {
            "protocol_version": PROTOCOL_VERSION,
            "twin_revision": sim.twin_revision(),
            "spec_name": sim.spec_name,
            "map": map_payload(spec),
        }),
        Frame(KIND_STATE, next(seq), sim.snapshot()),
    ]
    sim.enqueue_command({"action": "start_mission", "mode": "full"})
    for ev in sim.tick()[:3]:
        frames.append(Frame(KIND_EVENT, next(seq), ev))
    frames.append(Frame(KIND_STATE, next(seq), sim.snapshot()))
    frames.append(Frame(KIND_VIEW, next(seq), sim.view().to_payload()))
    try:
        decode_frame('{"kind": "nope", "seq": 1, "payload": {}}')
    except ProtocolError as exc:
        frames.append(Frame(KIND_ERROR, next(seq), {"message": str(exc)}))

    # client-direction examples; the client keeps its own seq counter
    frames.append(Frame(KIND_COMMAND, 1, {
        "action": "start_mission", "mode": "visual_inspection",
        "target": {"rack": 0, "side": "front", "section": 2, "tier": 1},
    }))
    frames.append(Frame(KIND_COMMAND, 2, {
        "action": "teleop",
        "input": {"x_c": 0.3, "y_c": 0.0, "z_c": -0.1, "yaw_input": 0.0,
                  "trigger_held": False, "timestamp": 124},
    }))
    frames.append(Frame(KIND_COMMAND, 3, {"action": "panel", "kind": "set_standoff", "fraction": 0.5}))
    frames.append(Frame(KIND_HEARTBEAT, 4, {}))
    return frames


def golden_frame_bytes() -> bytes:
    return ("".join(encode_frame(f) + "\n" for f in build_golden_frames())).encode()


def golden_inventory_records() -> list[InventoryRecord]:
    return [
        InventoryRecord("PLT-0001", SlotAddress(0, "front", 0, 0), "small",
                        (0.312, 0.295, 0.301), "snap-2b1f4f9c55aa01d3", 1, 412),
        InventoryRecord("PLT-0002", SlotAddress(0, "front", 3, 1), "medium",
                        (0.588, 0.462, 0.611), "snap-77e0a6b2c4d91f08", 1, 913),
        InventoryRecord("PLT-0002", SlotAddress(1, "back", 2, 0), "medium",
                        (0.603, 0.447, 0.592), "snap-0c8d33e51ab27f64", 2, 77),
    ]


def write_golden_inventory(path: Path) -> None:
    if path.exists():
        path.unlink()
    store = InventoryStore(path)
    store.register_mission(1)
    for rec in golden_inventory_records():
        insert_record(store, rec)


# --- golden files stay in sync with the code -----------------------------------------

def test_golden_frames_match_current_encoder():
    assert GOLDEN_FRAMES.read_bytes() == golden_frame_bytes()


def test_golden_frames_round_trip_byte_identically():
    for line in GOLDEN_FRAMES.read_text().splitlines():
        assert encode_frame(decode_frame(line)) == line


def test_golden_frames_validate_against_schema():
    jsonschema = pytest.importorskip("jsonschema")
    validator = jsonschema.Draft202012Validator(json.loads(SCHEMA.read_text()))
    kinds = set()
    for line in GOLDEN_FRAMES.read_text().splitlines():
        doc = json.loads(line)
        validator.validate(doc)
        kinds.add(doc["kind"])
    # captures exercise every frame kind in both directions
    assert kinds == {KIND_HELLO, KIND_STATE, KIND_VIEW, KIND_EVENT,
                     KIND_COMMAND, KIND_HEARTBEAT, KIND_ERROR}


def test_golden_inventory_log_matches_current_writer(tmp_path):
    fresh = tmp_path / "inventory.log"
    write_golden_inventory(fresh)
    assert GOLDEN_LOG.read_bytes() == fresh.read_bytes()


def test_golden_inventory_log_replays(tmp_path):
    import shutil

    copy = tmp_path / "inventory.log"
    shutil.copy(GOLDEN_LOG, copy)
    store = InventoryStore(copy)
    assert store.records() == tuple(golden_inventory_records())
    # the re-scan in mission 2 wins recency for its tag
    latest = query_by_tag(store, "PLT-0002")
    assert latest.mission_id == 2 and latest.address == SlotAddress(1, "back", 2, 0)


# --- the live service speaks schema-valid frames --------------------------------------

def test_live_frames_validate_against_schema(golden_spec):
    websockets = pytest.importorskip("websockets")
    jsonschema = pytest.importorskip("jsonschema")
    validator = jsonschema.Draft202012Validator(json.loads(SCHEMA.read_text()))
    from test_telemetry import recv_frame, with_server

    sim = Simulation(golden_spec, seed=3, fill_count=40, noise=NOISELESS)
    server = TelemetryServer(sim, ServeConfig(host="127.0.0.1", port=0, time_scale=4.0))

    async def session(url):
        collected = []
        async with websockets.connect(url) as ws:
            collected.append(await ws.recv())
            await ws.send("this is not a frame")  # provoke an error frame
            await ws.send(encode_frame(Frame(KIND_COMMAND, 1, {
                "action": "start_mission", "mode": "full",
            })))
            for _ in range(80):
                collected.append(await asyncio.wait_for(ws.recv(), 5.0))
        return collected

    collected = asyncio.run(with_server(server, session))
    kinds = set()
    for raw in collected:
        doc = json.loads(raw)
        validator.validate(doc)
        kinds.add(doc["kind"])
    assert {KIND_HELLO, KIND_STATE, KIND_VIEW, KIND_ERROR, KIND_EVENT} <= kinds


if __name__ == "__main__":
    GOLDEN_FRAMES.parent.mkdir(exist_ok=True)
    GOLDEN_FRAMES.write_bytes(golden_frame_bytes())
    write_golden_inventory(GOLDEN_LOG)
    print(f"wrote {GOLDEN_FRAMES} and {GOLDEN_LOG}")

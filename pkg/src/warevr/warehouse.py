"""Warehouse model: declarative spec, validation, digital twin, slot geometry.

The twin starts with every pallet slot empty and fills only through
verification-gated mutations; all functions here are pure and
deterministic in their inputs.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterator, Mapping

from .geometry import (
    Point2,
    Pose3D,
    dist2,
    normalize_polygon,
    point_in_polygon,
    polygon_self_intersects,
    rotate2,
)

if TYPE_CHECKING:
    from .scan import VerificationRecord

FRONT = "front"
BACK = "back"
SIDES = (FRONT, BACK)

# Catalog entries must differ by more than this in at least one dimension so
# that measurement noise (<= 0.03 m/axis) can never flip a classification.
MIN_CATALOG_SEPARATION = 0.09


class InvalidSpecError(ValueError):
    """Raised when an operation requires a spec that fails validation."""


class UnknownAddressError(KeyError):
    """Raised for a slot address outside the twin's grid."""


class RejectedUnverifiedError(ValueError):
    """Raised when a non-verified record is applied to the twin."""


@dataclass(frozen=True)
class BoxType:
    name: str
    dims: tuple[float, float, float]  # (w, h, d) meters


@dataclass(frozen=True)
class RackSpec:
    origin: Point2
    orientation: float  # radians, rack length axis relative to world +X
    tiers: int
    sections: int
    cell_width: float
    cell_height: float
    cell_depth: float
    unreachable_sides: tuple[str, ...] = ()

    @property
    def length(self) -> float:
        return self.sections * self.cell_width

    @property
    def height(self) -> float:
        return self.tiers * self.cell_height


@dataclass(frozen=True)
class WarehouseSpec:
    wall_polyline: tuple[Point2, ...]
    ceiling_height: float
    racks: tuple[RackSpec, ...]
    aisle_width: float
    box_catalog: tuple[BoxType, ...]
    seed: int

    def box_by_name(self, name: str) -> BoxType | None:
        for box in self.box_catalog:
            if box.name == name:
                return box
        return None


@dataclass(frozen=True)
class SlotAddress:
    rack: int
    side: str  # "front" | "back"
    section: int
    tier: int

    def __post_init__(self) -> None:
        if self.side not in SIDES:
            raise ValueError(f"bad side {self.side!r}")

    def key(self) -> tuple:
        return (self.rack, self.side, self.section, self.tier)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


EMPTY_STATUS = "empty"
CANDIDATE_STATUS = "candidate"
VERIFIED_STATUS = "verified"


@dataclass(frozen=True)
class SlotState:
    status: str = EMPTY_STATUS
    barcode_id: str | None = None
    box_type: str | None = None
    snapshot_ref: str | None = None


EMPTY_SLOT = SlotState()
CANDIDATE_SLOT = SlotState(status=CANDIDATE_STATUS)


@dataclass(frozen=True)
class DigitalTwin:
    spec: WarehouseSpec
    slots: Mapping[SlotAddress, SlotState]
    revision: int = 0

    def slot(self, addr: SlotAddress) -> SlotState:
        try:
            return self.slots[addr]
        except KeyError:
            raise UnknownAddressError(addr) from None

    def verified_count(self) -> int:
        return sum(1 for s in self.slots.values() if s.status == VERIFIED_STATUS)


@dataclass(frozen=True)
class OccupiedSlot:
    barcode_id: str
    box_type: BoxType


@dataclass(frozen=True)
class GroundTruth:
    """Simulation stand-in for the physical warehouse.

    Only sensor-side code may read this; mission logic and operator paths
    must go through the scan pipeline.
    """

    occupancy: Mapping[SlotAddress, OccupiedSlot]
    clutter: frozenset[SlotAddress] = frozenset()


# ---------------------------------------------------------------------------
# Validation


def validate_spec(spec: WarehouseSpec) -> ValidationReport:
    """Check every spec invariant; violations are data, not exceptions."""
    out: list[Violation] = []
    walls = normalize_polygon(list(spec.wall_polyline))
    if len(walls) < 3:
        out.append(Violation("WALLS_NOT_CLOSED", "wall polyline needs at least 3 distinct vertices"))
    elif polygon_self_intersects(walls):
        out.append(Violation("WALLS_SELF_INTERSECTING", "wall polyline crosses itself"))

    if spec.aisle_width <= 0:
        out.append(Violation("AISLE_WIDTH_INVALID", f"aisle_width must be > 0, got {spec.aisle_width}"))
    if spec.seed < 0:
        out.append(Violation("SEED_INVALID", "seed must be a non-negative integer"))

    if not spec.racks:
        out.append(Violation("RACKS_EMPTY", "spec declares no racks"))
    for i, rack in enumerate(spec.racks):
        if rack.tiers < 1 or rack.sections < 1:
            out.append(Violation("RACK_BAD_GRID", f"rack {i}: tiers and sections must be >= 1"))
            continue
        if min(rack.cell_width, rack.cell_height, rack.cell_depth) <= 0:
            out.append(Violation("RACK_BAD_CELL", f"rack {i}: cell dimensions must be > 0"))
            continue
        if rack.height >= spec.ceiling_height:
            out.append(
                Violation(
                    "CEILING_TOO_LOW",
                    f"rack {i}: height {rack.height:.2f} m must stay below ceiling {spec.ceiling_height:.2f} m",
                )
            )
        for bad in rack.unreachable_sides:
            if bad not in SIDES:
                out.append(Violation("RACK_BAD_SIDE", f"rack {i}: unknown side {bad!r}"))
        if len(walls) >= 3:
            for corner in rack_footprint(rack):
                if not point_in_polygon(corner, walls):
                    out.append(
                        Violation("RACK_OUTSIDE_WALLS", f"rack {i}: footprint corner {corner} outside walls")
                    )
                    break

    if not spec.box_catalog:
        out.append(Violation("CATALOG_EMPTY", "box catalog must not be empty"))
    names = [b.name for b in spec.box_catalog]
    if len(set(names)) != len(names):
        out.append(Violation("CATALOG_DUPLICATE_NAME", "box catalog names must be unique"))
    for box in spec.box_catalog:
        if min(box.dims) <= 0:
            out.append(Violation("BOX_BAD_DIMS", f"box {box.name!r}: dimensions must be > 0"))
    for i, a in enumerate(spec.box_catalog):
        for b in spec.box_catalog[i + 1 :]:
            if all(abs(da - db) <= MIN_CATALOG_SEPARATION for da, db in zip(a.dims, b.dims)):
                out.append(
                    Violation(
                        "CATALOG_AMBIGUOUS",
                        f"boxes {a.name!r} and {b.name!r} differ by <= {MIN_CATALOG_SEPARATION} m "
                        "in every dimension",
                    )
                )
    return ValidationReport(tuple(out))


def rack_footprint(rack: RackSpec) -> list[Point2]:
    """World-frame corners of the rack body (counterclockwise)."""
    half_d = rack.cell_depth / 2.0
    local = [(0.0, -half_d), (rack.length, -half_d), (rack.length, half_d), (0.0, half_d)]
    ox, oy = rack.origin
    out = []
    for p in local:
        rx, ry = rotate2(p, rack.orientation)
        out.append((ox + rx, oy + ry))
    return out


# ---------------------------------------------------------------------------
# Twin construction and slot geometry


def generate_twin(spec: WarehouseSpec) -> DigitalTwin:
    """Build the all-empty twin; requires a clean validation report."""
    report = validate_spec(spec)
    if not report.ok:
        raise InvalidSpecError("; ".join(report.codes()))
    slots = {addr: EMPTY_SLOT for addr in iter_addresses(spec)}
    return DigitalTwin(spec=spec, slots=slots, revision=0)


def iter_addresses(spec: WarehouseSpec) -> Iterator[SlotAddress]:
    for r in range(len(spec.racks)):
        for side in SIDES:
            yield from iter_face_addresses(spec, r, side)


def iter_face_addresses(spec: WarehouseSpec, rack: int, side: str) -> Iterator[SlotAddress]:
    rs = spec.racks[rack]
    for tier in range(rs.tiers):
        for section in range(rs.sections):
            yield SlotAddress(rack=rack, side=side, section=section, tier=tier)


def face_normal(spec: WarehouseSpec, rack: int, side: str) -> Point2:
    """Outward unit normal of a rack face, pointing into its aisle."""
    local = (0.0, -1.0) if side == FRONT else (0.0, 1.0)
    return rotate2(local, spec.racks[rack].orientation)


def slot_pose(twin: DigitalTwin, addr: SlotAddress) -> Pose3D:
    """World-frame center of the slot's front face; yaw is the outward normal."""
    spec = twin.spec
    if addr.rack < 0 or addr.rack >= len(spec.racks):
        raise UnknownAddressError(addr)
    rack = spec.racks[addr.rack]
    if not (0 <= addr.section < rack.sections and 0 <= addr.tier < rack.tiers):
        raise UnknownAddressError(addr)
    half_d = rack.cell_depth / 2.0
    lx = (addr.section + 0.5) * rack.cell_width
    ly = -half_d if addr.side == FRONT else half_d
    wx, wy = rotate2((lx, ly), rack.orientation)
    nx, ny = face_normal(spec, addr.rack, addr.side)
    return Pose3D(
        x=rack.origin[0] + wx,
        y=rack.origin[1] + wy,
        z=(addr.tier + 0.5) * rack.cell_height,
        yaw=math.atan2(ny, nx),
    )


# ---------------------------------------------------------------------------
# Verification-gated mutation


def apply_verification(twin: DigitalTwin, record: "VerificationRecord") -> DigitalTwin:
    """Fill one slot from a verified record; the only path to Verified."""
    if record.status != VERIFIED_STATUS:
        raise RejectedUnverifiedError(f"record for {record.address} has status {record.status!r}")
    twin.slot(record.address)  # existence check
    slots = dict(twin.slots)
    slots[record.address] = SlotState(
        status=VERIFIED_STATUS,
        barcode_id=record.barcode_id,
        box_type=record.classified_type,
        snapshot_ref=record.snapshot_ref,
    )
    return replace(twin, slots=slots, revision=twin.revision + 1)


def mark_candidates(twin: DigitalTwin, addresses: list[SlotAddress]) -> DigitalTwin:
    """Flag preliminary-map hits on the twin; verified slots keep their state."""
    slots = dict(twin.slots)
    changed = False
    for addr in addresses:
        if slots.get(addr, None) is None:
            raise UnknownAddressError(addr)
        if slots[addr].status == EMPTY_STATUS:
            slots[addr] = CANDIDATE_SLOT
            changed = True
    if not changed:
        return twin
    return replace(twin, slots=slots, revision=twin.revision + 1)


def clear_candidate(twin: DigitalTwin, addr: SlotAddress) -> DigitalTwin:
    """Drop a candidate mark after its verification failed."""
    if twin.slot(addr).status != CANDIDATE_STATUS:
        return twin
    slots = dict(twin.slots)
    slots[addr] = EMPTY_SLOT
    return replace(twin, slots=slots, revision=twin.revision + 1)


# ---------------------------------------------------------------------------
# Ground truth (simulation substitute for the physical warehouse)


def generate_ground_truth(
    spec: WarehouseSpec,
    rng: random.Random,
    fill_count: int | None = None,
    fill_ratio: float = 0.5,
    clutter_ratio: float = 0.0,
) -> GroundTruth:
    """Seeded random occupancy over reachable faces.

    fill_count pins the exact number of occupied slots; otherwise each
    reachable slot is filled independently with fill_ratio.
    """
    reachable = [
        addr
        for addr in iter_addresses(spec)
        if addr.side not in spec.racks[addr.rack].unreachable_sides
    ]
    if fill_count is not None:
        if fill_count > len(reachable):
            raise ValueError(f"fill_count {fill_count} exceeds {len(reachable)} reachable slots")
        chosen = rng.sample(reachable, fill_count)
    else:
        chosen = [addr for addr in reachable if rng.random() < fill_ratio]
    occupancy = {}
    for i, addr in enumerate(sorted(chosen, key=SlotAddress.key)):
        box = spec.box_catalog[rng.randrange(len(spec.box_catalog))]
        occupancy[addr] = OccupiedSlot(barcode_id=f"BC{i:06d}", box_type=box)
    clutter = set()
    for addr in reachable:
        if addr not in occupancy and rng.random() < clutter_ratio:
            clutter.add(addr)
    return GroundTruth(occupancy=occupancy, clutter=frozenset(clutter))


# ---------------------------------------------------------------------------
# Aisle (alley) geometry derived from the spec


@dataclass(frozen=True)
class Face:
    rack: int
    side: str


@dataclass(frozen=True)
class Alley:
    """One aisle corridor: the faces that border it and its UGV centerline."""

    index: int
    faces: tuple[Face, ...]
    line_a: Point2
    line_b: Point2

    def contains_face(self, face: Face) -> bool:
        return face in self.faces

    def closest_point(self, p: Point2) -> Point2:
        ax, ay = self.line_a
        bx, by = self.line_b
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        if denom == 0:
            return self.line_a
        t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / denom
        t = max(0.0, min(1.0, t))
        return (ax + t * dx, ay + t * dy)


def _face_center_and_axes(spec: WarehouseSpec, face: Face) -> tuple[Point2, Point2, Point2]:
    rack = spec.racks[face.rack]
    n = face_normal(spec, face.rack, face.side)
    u = rotate2((1.0, 0.0), rack.orientation)
    half_d = rack.cell_depth / 2.0
    lx, ly = rack.length / 2.0, (-half_d if face.side == FRONT else half_d)
    wx, wy = rotate2((lx, ly), rack.orientation)
    center = (rack.origin[0] + wx, rack.origin[1] + wy)
    return center, n, u


def compute_alleys(spec: WarehouseSpec) -> list[Alley]:
    """Pair opposing rack faces into shared aisles; lone faces get their own.

    Centerlines run half an aisle width out from each face and extend half
    an aisle width beyond the rack ends so the UGV can turn between rows.
    """
    faces = [
        Face(r, side)
        for r in range(len(spec.racks))
        for side in SIDES
        if side not in spec.racks[r].unreachable_sides
    ]
    margin = spec.aisle_width / 2.0
    paired: dict[Face, Face] = {}
    for i, f in enumerate(faces):
        if f in paired:
            continue
        cf, nf, uf = _face_center_and_axes(spec, f)
        best: tuple[float, Face] | None = None
        for g in faces[i + 1 :]:
            if g in paired or g.rack == f.rack:
                continue
            cg, ng, _ = _face_center_and_axes(spec, g)
            if nf[0] * ng[0] + nf[1] * ng[1] > -0.999:
                continue
            gap = (cg[0] - cf[0]) * nf[0] + (cg[1] - cf[1]) * nf[1]
            if gap <= 0 or gap > spec.aisle_width * 1.5:
                continue
            lateral = abs((cg[0] - cf[0]) * uf[0] + (cg[1] - cf[1]) * uf[1])
            if lateral > (spec.racks[f.rack].length + spec.racks[g.rack].length) / 2.0:
                continue
            if best is None or gap < best[0]:
                best = (gap, g)
        if best is not None:
            paired[f] = best[1]
            paired[best[1]] = f

    alleys: list[Alley] = []
    done: set[Face] = set()
    for f in faces:
        if f in done:
            continue
        cf, nf, uf = _face_center_and_axes(spec, f)
        rack = spec.racks[f.rack]
        partner = paired.get(f)
        if partner is not None:
            cg, _, _ = _face_center_and_axes(spec, partner)
            gap = (cg[0] - cf[0]) * nf[0] + (cg[1] - cf[1]) * nf[1]
            offset = gap / 2.0
            members = (f, partner)
            done.add(partner)
        else:
            offset = margin
            members = (f,)
        mid = (cf[0] + nf[0] * offset, cf[1] + nf[1] * offset)
        half_len = rack.length / 2.0 + margin
        a = (mid[0] - uf[0] * half_len, mid[1] - uf[1] * half_len)
        b = (mid[0] + uf[0] * half_len, mid[1] + uf[1] * half_len)
        alleys.append(Alley(index=len(alleys), faces=members, line_a=a, line_b=b))
        done.add(f)
    return alleys


def alley_for_face(alleys: list[Alley], face: Face) -> Alley:
    for alley in alleys:
        if alley.contains_face(face):
            return alley
    raise KeyError(f"no alley borders {face}")


def alley_for_address(alleys: list[Alley], addr: SlotAddress) -> Alley:
    return alley_for_face(alleys, Face(addr.rack, addr.side))


def nearest_alley(alleys: list[Alley], p: Point2) -> Alley:
    return min(alleys, key=lambda a: dist2(a.closest_point(p), p))


# ---------------------------------------------------------------------------
# Spec file I/O (JSON syntax, lengths in meters, angles in radians)


def spec_from_dict(doc: dict) -> WarehouseSpec:
    racks = tuple(
        RackSpec(
            origin=(float(r["origin"][0]), float(r["origin"][1])),
            orientation=float(r.get("orientation", 0.0)),
            tiers=int(r["tiers"]),
            sections=int(r["sections"]),
            cell_width=float(r["cell_width"]),
            cell_height=float(r["cell_height"]),
            cell_depth=float(r["cell_depth"]),
            unreachable_sides=tuple(r.get("unreachable_sides", ())),
        )
        for r in doc["racks"]
    )
    catalog = tuple(
        BoxType(name=str(b["name"]), dims=(float(b["dims"][0]), float(b["dims"][1]), float(b["dims"][2])))
        for b in doc["box_catalog"]
    )
    return WarehouseSpec(
        wall_polyline=tuple((float(p[0]), float(p[1])) for p in doc["walls"]),
        ceiling_height=float(doc["ceiling_height"]),
        racks=racks,
        aisle_width=float(doc["aisle_width"]),
        box_catalog=catalog,
        seed=int(doc["seed"]),
    )


def spec_to_dict(spec: WarehouseSpec) -> dict:
    return {
        "walls": [list(p) for p in spec.wall_polyline],
        "ceiling_height": spec.ceiling_height,
        "racks": [
            {
                "origin": list(r.origin),
                "orientation": r.orientation,
                "tiers": r.tiers,
                "sections": r.sections,
                "cell_width": r.cell_width,
                "cell_height": r.cell_height,
                "cell_depth": r.cell_depth,
                **({"unreachable_sides": list(r.unreachable_sides)} if r.unreachable_sides else {}),
            }
            for r in spec.racks
        ],
        "aisle_width": spec.aisle_width,
        "box_catalog": [{"name": b.name, "dims": list(b.dims)} for b in spec.box_catalog],
        "seed": spec.seed,
    }


def load_spec_file(path: str) -> tuple[WarehouseSpec, dict]:
    """Parse a warehouse file; returns (spec, extra sections like sensor_noise)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    spec = spec_from_dict(doc)
    core = {"walls", "ceiling_height", "racks", "aisle_width", "box_catalog", "seed"}
    extras = {k: v for k, v in doc.items() if k not in core}
    return spec, extras

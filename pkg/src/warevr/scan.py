"""Barcode scan pipeline: stochastic detection, flight-path planning over the
preliminary map, laser verification with dead-waypoint removal, and box
measurement/classification.

Every operation is deterministic given (ground truth, noise model, seed);
the neural detector of the real system is replaced by a parametric
stochastic model.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, replace
from typing import Callable

from .geometry import Pose3D
from .warehouse import (
    BoxType,
    DigitalTwin,
    Face,
    GroundTruth,
    SlotAddress,
    VERIFIED_STATUS,
    face_normal,
    iter_face_addresses,
    slot_pose,
)

FAILED_STATUS = "failed"
UNCLASSIFIED = "Unclassified"

DEFAULT_STANDOFF = 1.2
# Classification accepts a match within 1.5x the stated measurement accuracy,
# which is still below half the catalog separation bound.
CLASSIFY_THRESHOLD = 0.045


class EmptyMapError(ValueError):
    """Nothing to scan; callers treat this as immediate completion."""


@dataclass(frozen=True)
class SensorNoiseModel:
    p_detect: float = 0.95
    p_false_positive: float = 0.02
    p_laser_read: float = 0.98
    max_read_attempts: int = 2
    dim_noise_bound: float = 0.03

    def __post_init__(self) -> None:
        for name in ("p_detect", "p_false_positive", "p_laser_read"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.max_read_attempts < 1:
            raise ValueError("max_read_attempts must be >= 1")
        if self.dim_noise_bound < 0:
            raise ValueError("dim_noise_bound must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict | None) -> "SensorNoiseModel":
        if not doc:
            return cls()
        return cls(
            p_detect=float(doc.get("p_detect", 0.95)),
            p_false_positive=float(doc.get("p_false_positive", 0.02)),
            p_laser_read=float(doc.get("p_laser_read", 0.98)),
            max_read_attempts=int(doc.get("max_read_attempts", 2)),
            dim_noise_bound=float(doc.get("dim_noise_bound", 0.03)),
        )


NOISELESS = SensorNoiseModel(p_detect=1.0, p_false_positive=0.0, p_laser_read=1.0)


@dataclass(frozen=True)
class DetectionCandidate:
    address: SlotAddress
    image_position: tuple[float, float]  # normalized frame coords, (0,0) top-left
    confidence: float
    # Sensor-side truth only; never read downstream of the pipeline.
    is_spurious: bool


@dataclass(frozen=True)
class PreliminaryMap:
    candidates: tuple[DetectionCandidate, ...]

    def by_face(self) -> dict[Face, list[DetectionCandidate]]:
        grouped: dict[Face, list[DetectionCandidate]] = {}
        for c in self.candidates:
            grouped.setdefault(Face(c.address.rack, c.address.side), []).append(c)
        return grouped

    def merged_with(self, other: "PreliminaryMap") -> "PreliminaryMap":
        return PreliminaryMap(self.candidates + other.candidates)


@dataclass(frozen=True)
class Waypoint:
    address: SlotAddress
    pose: Pose3D


@dataclass(frozen=True)
class ScanPath:
    waypoints: tuple[Waypoint, ...]
    cursor: int = 0

    def current(self) -> Waypoint | None:
        if self.cursor < len(self.waypoints):
            return self.waypoints[self.cursor]
        return None

    def advanced(self) -> "ScanPath":
        return replace(self, cursor=min(self.cursor + 1, len(self.waypoints)))

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.waypoints)


@dataclass(frozen=True)
class VerificationRecord:
    address: SlotAddress
    status: str  # "verified" | "failed"
    attempts: int
    barcode_id: str | None = None
    measured_dims: tuple[float, float, float] | None = None
    classified_type: str | None = None
    snapshot_ref: str | None = None


def detect_candidates(
    truth: GroundTruth,
    spec,
    face: Face,
    noise: SensorNoiseModel,
    rng: random.Random,
) -> PreliminaryMap:
    """One detector pass over a rack face.

    Occupied slots are seen with p_detect; slots without a real hit can
    spawn a spurious candidate with p_false_positive, and clutter slots
    always do while false positives are enabled at all.
    """
    rack = spec.racks[face.rack]
    out: list[DetectionCandidate] = []
    for addr in iter_face_addresses(spec, face.rack, face.side):
        image_pos = (
            (addr.section + 0.5) / rack.sections,
            1.0 - (addr.tier + 0.5) / rack.tiers,
        )
        if addr in truth.occupancy and rng.random() < noise.p_detect:
            out.append(
                DetectionCandidate(
                    address=addr,
                    image_position=image_pos,
                    confidence=0.6 + 0.4 * rng.random(),
                    is_spurious=False,
                )
            )
            continue
        if noise.p_false_positive > 0 and (addr in truth.clutter or rng.random() < noise.p_false_positive):
            out.append(
                DetectionCandidate(
                    address=addr,
                    image_position=image_pos,
                    confidence=0.2 + 0.5 * rng.random(),
                    is_spurious=True,
                )
            )
    return PreliminaryMap(tuple(out))


def boustrophedon_key(addr: SlotAddress, sections: int) -> tuple[int, int]:
    """Tier-major serpentine: left-to-right on even tiers, reversed on odd."""
    col = addr.section if addr.tier % 2 == 0 else sections - 1 - addr.section
    return (addr.tier, col)


def plan_scan_path(
    pmap: PreliminaryMap,
    twin: DigitalTwin,
    standoff: float = DEFAULT_STANDOFF,
    min_z: float | None = None,
    max_z: float | None = None,
) -> ScanPath:
    """One standoff waypoint per candidate, faces in (rack, side) order,
    boustrophedon within each face.

    Waypoint heights can be clamped into the flyable band; the standoff
    distance from the face plane is exact regardless.
    """
    if standoff <= 0:
        raise ValueError("standoff must be > 0")
    if not pmap.candidates:
        raise EmptyMapError("preliminary map has no candidates")
    spec = twin.spec
    waypoints: list[Waypoint] = []
    grouped = pmap.by_face()
    for face in sorted(grouped, key=lambda f: (f.rack, f.side)):
        nx, ny = face_normal(spec, face.rack, face.side)
        sections = spec.racks[face.rack].sections
        ordered = sorted(grouped[face], key=lambda c: boustrophedon_key(c.address, sections))
        for cand in ordered:
            pose = slot_pose(twin, cand.address)
            z = pose.z
            if min_z is not None:
                z = max(z, min_z)
            if max_z is not None:
                z = min(z, max_z)
            wp_pose = Pose3D(
                x=pose.x + nx * standoff,
                y=pose.y + ny * standoff,
                z=z,
                yaw=_opposite(pose.yaw),
            )
            waypoints.append(Waypoint(address=cand.address, pose=wp_pose))
    return ScanPath(tuple(waypoints))


def _opposite(yaw: float) -> float:
    out = yaw + math.pi
    while out > math.pi:
        out -= 2 * math.pi
    return out


def default_snapshot_ref(addr: SlotAddress, barcode_id: str) -> str:
    digest = hashlib.sha256(f"{addr.key()}:{barcode_id}".encode()).hexdigest()
    return f"snap-{digest[:16]}"


def verify_waypoint(
    truth: GroundTruth,
    candidate: DetectionCandidate,
    noise: SensorNoiseModel,
    rng: random.Random,
    catalog: tuple[BoxType, ...] = (),
    make_snapshot: Callable[[SlotAddress, str], str] = default_snapshot_ref,
) -> VerificationRecord:
    """Laser pass over one candidate.

    A real barcode reads with p_laser_read per attempt; spurious candidates
    burn every attempt and fail, which is what gets their waypoint dropped.
    """
    occupant = truth.occupancy.get(candidate.address)
    readable = occupant is not None and not candidate.is_spurious
    for attempt in range(1, noise.max_read_attempts + 1):
        if readable and rng.random() < noise.p_laser_read:
            dims = measure_box(occupant.box_type.dims, noise, rng)
            return VerificationRecord(
                address=candidate.address,
                status=VERIFIED_STATUS,
                attempts=attempt,
                barcode_id=occupant.barcode_id,
                measured_dims=dims,
                classified_type=classify_box(dims, catalog) if catalog else UNCLASSIFIED,
                snapshot_ref=make_snapshot(candidate.address, occupant.barcode_id),
            )
    return VerificationRecord(
        address=candidate.address,
        status=FAILED_STATUS,
        attempts=noise.max_read_attempts,
    )


def probe_slot(
    truth: GroundTruth,
    addr: SlotAddress,
    spec,
    noise: SensorNoiseModel,
    rng: random.Random,
    make_snapshot: Callable[[SlotAddress, str], str] = default_snapshot_ref,
) -> VerificationRecord:
    """Direct laser read of a slot without a prior detection (tag search,
    visual inspection). An empty slot can never verify."""
    rack = spec.racks[addr.rack]
    synthetic = DetectionCandidate(
        address=addr,
        image_position=((addr.section + 0.5) / rack.sections, 1.0 - (addr.tier + 0.5) / rack.tiers),
        confidence=1.0,
        is_spurious=addr not in truth.occupancy,
    )
    return verify_waypoint(truth, synthetic, noise, rng, catalog=spec.box_catalog, make_snapshot=make_snapshot)


def measure_box(
    dims: tuple[float, float, float],
    noise: SensorNoiseModel,
    rng: random.Random,
) -> tuple[float, float, float]:
    """True dimensions plus bounded uniform noise per axis."""
    b = noise.dim_noise_bound
    return tuple(d + rng.uniform(-b, b) for d in dims)  # type: ignore[return-value]


def classify_box(
    measured: tuple[float, float, float],
    catalog: tuple[BoxType, ...],
) -> str:
    """Nearest catalog entry by max-axis distance, or Unclassified beyond
    the acceptance threshold. Ties keep catalog order."""
    if not catalog:
        raise ValueError("catalog must not be empty")
    best_name = UNCLASSIFIED
    best_dist = float("inf")
    for box in catalog:
        dist = max(abs(m - d) for m, d in zip(measured, box.dims))
        if dist < best_dist:
            best_dist = dist
            best_name = box.name
    return best_name if best_dist <= CLASSIFY_THRESHOLD else UNCLASSIFIED

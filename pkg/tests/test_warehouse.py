"""Spec validation, twin generation, slot geometry, and the verification gate."""

import math
import random

import pytest

from conftest import CATALOG, make_spec
from warevr.geometry import point_in_polygon, rotate2
from warevr.scan import VerificationRecord
from warevr.warehouse import (
    BoxType,
    InvalidSpecError,
    RackSpec,
    RejectedUnverifiedError,
    SlotAddress,
    UnknownAddressError,
    WarehouseSpec,
    alley_for_address,
    apply_verification,
    clear_candidate,
    compute_alleys,
    face_normal,
    generate_ground_truth,
    generate_twin,
    iter_addresses,
    iter_face_addresses,
    mark_candidates,
    nearest_alley,
    rack_footprint,
    slot_pose,
    validate_spec,
)


def verified_record(addr, barcode="BC1", box="small"):
    return VerificationRecord(
        address=addr,
        status="verified",
        attempts=1,
        barcode_id=barcode,
        measured_dims=(0.3, 0.3, 0.3),
        classified_type=box,
        snapshot_ref="snap-test",
    )


# --- validation -------------------------------------------------------------


def test_golden_spec_is_valid(golden_spec):
    assert validate_spec(golden_spec).ok


def test_tall_rack_under_high_ceiling_is_valid():
    # 10 tiers of 1 m under a 12 m ceiling.
    spec = make_spec(tiers=10, cell=(1.0, 1.0, 2.0), ceiling=12.0)
    assert validate_spec(spec).ok


def test_no_racks_is_a_violation():
    spec = make_spec()
    spec = WarehouseSpec(
        wall_polyline=spec.wall_polyline,
        ceiling_height=spec.ceiling_height,
        racks=(),
        aisle_width=spec.aisle_width,
        box_catalog=spec.box_catalog,
        seed=spec.seed,
    )
    assert "RACKS_EMPTY" in validate_spec(spec).codes()


def test_rack_outside_walls_detected():
    spec = make_spec()
    # Push the rack footprint well past the east wall; point-in-polygon
    # over the footprint corners is the oracle here.
    far = RackSpec(
        origin=(1000.0, 0.0),
        orientation=0.0,
        tiers=2,
        sections=2,
        cell_width=1.0,
        cell_height=1.0,
        cell_depth=1.0,
    )
    bad = WarehouseSpec(
        wall_polyline=spec.wall_polyline,
        ceiling_height=spec.ceiling_height,
        racks=(far,),
        aisle_width=spec.aisle_width,
        box_catalog=spec.box_catalog,
        seed=spec.seed,
    )
    for corner in rack_footprint(far):
        assert not point_in_polygon(corner, spec.wall_polyline)
    assert "RACK_OUTSIDE_WALLS" in validate_spec(bad).codes()


def test_ceiling_too_low_detected():
    spec = make_spec(tiers=4, cell=(1.0, 1.0, 2.0), ceiling=3.0)
    assert "CEILING_TOO_LOW" in validate_spec(spec).codes()


def test_ambiguous_catalog_detected():
    # Two entries 0.05 m apart on every axis: inside the 0.09 m floor.
    close = (BoxType("a", (0.3, 0.3, 0.3)), BoxType("b", (0.35, 0.35, 0.35)))
    spec = make_spec(catalog=close)
    assert "CATALOG_AMBIGUOUS" in validate_spec(spec).codes()


def test_self_intersecting_walls_detected():
    spec = make_spec()
    bowtie = ((0.0, 0.0), (20.0, 20.0), (20.0, 0.0), (0.0, 20.0))
    bad = WarehouseSpec(
        wall_polyline=bowtie,
        ceiling_height=spec.ceiling_height,
        racks=spec.racks,
        aisle_width=spec.aisle_width,
        box_catalog=spec.box_catalog,
        seed=spec.seed,
    )
    assert "WALLS_SELF_INTERSECTING" in validate_spec(bad).codes()


def test_violations_are_data_not_exceptions():
    spec = make_spec(aisle_width=-1.0)
    report = validate_spec(spec)  # must not raise
    assert not report.ok
    assert "AISLE_WIDTH_INVALID" in report.codes()


# --- twin generation --------------------------------------------------------


def test_twin_slot_count_small():
    # 1 rack, 2 sections, 3 tiers -> 2 sides * 2 * 3 = 12
    twin = generate_twin(make_spec(racks=1, tiers=3, sections=2))
    assert len(twin.slots) == 12
    assert all(s.status == "empty" for s in twin.slots.values())
    assert twin.revision == 0


def test_twin_slot_count_large_matches_enumeration_oracle():
    spec = make_spec(racks=5, tiers=10, sections=10, cell=(0.8, 0.5, 1.0))
    assert validate_spec(spec).ok
    twin = generate_twin(spec)
    # Oracle: enumerate every legal address by hand and count.
    expected = {
        SlotAddress(r, side, s, t)
        for r in range(5)
        for side in ("front", "back")
        for s in range(10)
        for t in range(10)
    }
    assert set(twin.slots) == expected
    assert len(twin.slots) == 1000


def test_generate_twin_rejects_invalid_spec():
    with pytest.raises(InvalidSpecError):
        generate_twin(make_spec(aisle_width=0.0))


def test_iter_addresses_covers_twin():
    spec = make_spec(racks=2, tiers=2, sections=3)
    twin = generate_twin(spec)
    assert set(iter_addresses(spec)) == set(twin.slots)


# --- slot geometry ----------------------------------------------------------


def test_slot_pose_tier_height_closed_form():
    spec = make_spec(tiers=5, sections=3, cell=(1.0, 0.8, 1.2), ceiling=8.0)
    twin = generate_twin(spec)
    for tier in range(5):
        p = slot_pose(twin, SlotAddress(0, "front", 1, tier))
        assert math.isclose(p.z, (tier + 0.5) * 0.8, abs_tol=1e-12)


def test_slot_pose_first_cell():
    spec = make_spec(tiers=2, sections=2, cell=(1.0, 1.0, 2.0))
    twin = generate_twin(spec)
    p = slot_pose(twin, SlotAddress(0, "front", 0, 0))
    assert math.isclose(p.z, 0.5, abs_tol=1e-12)


def test_slot_pose_rotated_rack_matches_rotation_oracle():
    base = make_spec(tiers=2, sections=3)
    angle = math.pi / 2
    rot_rack = RackSpec(
        origin=base.racks[0].origin,
        orientation=angle,
        tiers=2,
        sections=3,
        cell_width=1.0,
        cell_height=1.0,
        cell_depth=2.0,
    )
    walls = ((-10.0, -10.0), (10.0, -10.0), (10.0, 10.0), (-10.0, 10.0))
    plain = WarehouseSpec(walls, 6.0, (base.racks[0],), 2.4, CATALOG, 1)
    rotated = WarehouseSpec(walls, 6.0, (rot_rack,), 2.4, CATALOG, 1)
    t0, t1 = generate_twin(plain), generate_twin(rotated)
    ox, oy = base.racks[0].origin
    for addr in t0.slots:
        p0 = slot_pose(t0, addr)
        p1 = slot_pose(t1, addr)
        # Oracle: rotate the unrotated pose about the rack origin.
        ex, ey = rotate2((p0.x - ox, p0.y - oy), angle)
        assert math.isclose(p1.x, ox + ex, abs_tol=1e-9)
        assert math.isclose(p1.y, oy + ey, abs_tol=1e-9)
        assert math.isclose(p1.z, p0.z, abs_tol=1e-12)
        assert math.isclose(
            math.cos(p1.yaw - (p0.yaw + angle)), 1.0, abs_tol=1e-9
        )


def test_slot_pose_unknown_address():
    twin = generate_twin(make_spec())
    with pytest.raises(UnknownAddressError):
        slot_pose(twin, SlotAddress(9, "front", 0, 0))


def test_all_slot_poses_inside_walls_below_ceiling(golden_spec):
    twin = generate_twin(golden_spec)
    for addr in twin.slots:
        p = slot_pose(twin, addr)
        assert point_in_polygon((p.x, p.y), golden_spec.wall_polyline), addr
        assert 0.0 < p.z < golden_spec.ceiling_height


def test_face_normals_are_opposed(golden_spec):
    nf = face_normal(golden_spec, 0, "front")
    nb = face_normal(golden_spec, 0, "back")
    assert math.isclose(nf[0] + nb[0], 0.0, abs_tol=1e-12)
    assert math.isclose(nf[1] + nb[1], 0.0, abs_tol=1e-12)
    assert math.isclose(math.hypot(*nf), 1.0, abs_tol=1e-12)


# --- verification gate ------------------------------------------------------


def test_apply_verification_fills_slot_and_bumps_revision():
    twin = generate_twin(make_spec())
    addr = SlotAddress(0, "front", 0, 0)
    rev0 = twin.revision
    out = apply_verification(twin, verified_record(addr))
    assert out.revision == rev0 + 1
    slot = out.slot(addr)
    assert slot.status == "verified"
    assert slot.barcode_id == "BC1"
    assert slot.snapshot_ref == "snap-test"
    # all other slots untouched
    for other, state in out.slots.items():
        if other != addr:
            assert state.status == twin.slot(other).status


def test_apply_verification_rejects_failed_record():
    twin = generate_twin(make_spec())
    addr = SlotAddress(0, "front", 0, 0)
    failed = VerificationRecord(address=addr, status="failed", attempts=2)
    with pytest.raises(RejectedUnverifiedError):
        apply_verification(twin, failed)
    assert twin.slot(addr).status == "empty"
    assert twin.revision == 0


def test_apply_verification_unknown_address():
    twin = generate_twin(make_spec())
    with pytest.raises(UnknownAddressError):
        apply_verification(twin, verified_record(SlotAddress(5, "front", 0, 0)))


def test_sequential_verifications_match_replay_oracle():
    spec = make_spec(tiers=2, sections=2)
    addrs = [SlotAddress(0, "front", s, t) for s in range(2) for t in range(2)]
    records = [verified_record(a, barcode=f"BC{i}") for i, a in enumerate(addrs)]

    twin = generate_twin(spec)
    for rec in records:
        twin = apply_verification(twin, rec)

    # Replay oracle: apply one by one on a fresh twin and diff every state.
    replay = generate_twin(spec)
    for rec in records:
        replay = apply_verification(replay, rec)
    assert twin.slots == replay.slots
    assert twin.revision == replay.revision == len(records)


def test_mark_and_clear_candidates_mutate_revision():
    twin = generate_twin(make_spec())
    addr = SlotAddress(0, "front", 1, 1)
    t1 = mark_candidates(twin, [addr])
    assert t1.slot(addr).status == "candidate"
    assert t1.revision == twin.revision + 1
    t2 = clear_candidate(t1, addr)
    assert t2.slot(addr).status == "empty"
    assert t2.revision == t1.revision + 1


def test_revision_strictly_increases_over_mixed_mutations():
    twin = generate_twin(make_spec(tiers=3, sections=3))
    revs = [twin.revision]
    addrs = [SlotAddress(0, "front", s, t) for s in range(3) for t in range(3)]
    twin = mark_candidates(twin, addrs[:4])
    revs.append(twin.revision)
    twin = apply_verification(twin, verified_record(addrs[0], "B0"))
    revs.append(twin.revision)
    twin = clear_candidate(twin, addrs[1])
    revs.append(twin.revision)
    twin = apply_verification(twin, verified_record(addrs[5], "B5"))
    revs.append(twin.revision)
    assert revs == sorted(revs)
    assert len(set(revs)) == len(revs)


def test_slot_count_conserved_by_mutations():
    twin = generate_twin(make_spec())
    n = len(twin.slots)
    addr = SlotAddress(0, "back", 0, 0)
    twin = mark_candidates(twin, [addr])
    twin = apply_verification(twin, verified_record(addr))
    assert len(twin.slots) == n


# --- ground truth -----------------------------------------------------------


def test_ground_truth_exact_fill_count(golden_spec):
    truth = generate_ground_truth(golden_spec, random.Random(5), fill_count=17)
    assert len(truth.occupancy) == 17
    barcodes = [o.barcode_id for o in truth.occupancy.values()]
    assert len(set(barcodes)) == 17


def test_ground_truth_deterministic(golden_spec):
    a = generate_ground_truth(golden_spec, random.Random(9), fill_ratio=0.5)
    b = generate_ground_truth(golden_spec, random.Random(9), fill_ratio=0.5)
    assert a.occupancy == b.occupancy
    assert a.clutter == b.clutter


def test_ground_truth_clutter_disjoint_from_occupancy(golden_spec):
    truth = generate_ground_truth(
        golden_spec, random.Random(3), fill_ratio=0.4, clutter_ratio=0.3
    )
    assert truth.clutter
    assert not (truth.clutter & set(truth.occupancy))


def test_ground_truth_box_types_come_from_catalog(golden_spec):
    truth = generate_ground_truth(golden_spec, random.Random(11), fill_ratio=0.6)
    names = {b.name for b in golden_spec.box_catalog}
    assert {o.box_type.name for o in truth.occupancy.values()} <= names


# --- alleys -----------------------------------------------------------------


def test_alleys_pair_antiparallel_faces(golden_spec):
    alleys = compute_alleys(golden_spec)
    assert [[(f.rack, f.side) for f in a.faces] for a in alleys] == [
        [(0, "front")],
        [(0, "back"), (1, "front")],
        [(1, "back")],
    ]


def test_alley_centerline_offset_oracle(golden_spec):
    # Centerline sits aisle_width/2 off the rack face along its normal.
    alleys = compute_alleys(golden_spec)
    half = golden_spec.aisle_width / 2.0
    rack = golden_spec.racks[0]
    front_y = rack.origin[1] - rack.cell_depth / 2.0
    assert math.isclose(alleys[0].line_a[1], front_y - half, abs_tol=1e-9)
    # Endpoints extend half an aisle past the rack ends.
    assert math.isclose(alleys[0].line_a[0], -half, abs_tol=1e-9)
    assert math.isclose(
        alleys[0].line_b[0], rack.sections * rack.cell_width + half, abs_tol=1e-9
    )


def test_alley_lookup_helpers(golden_spec):
    alleys = compute_alleys(golden_spec)
    a = alley_for_address(alleys, SlotAddress(0, "back", 2, 1))
    assert a.index == 1
    assert nearest_alley(alleys, (3.0, -2.0)).index == 0
    assert nearest_alley(alleys, (3.0, 6.4)).index == 2


def test_face_addresses_complete(golden_spec):
    addrs = list(iter_face_addresses(golden_spec, 0, "front"))
    rack = golden_spec.racks[0]
    assert len(addrs) == rack.tiers * rack.sections
    assert len(set(addrs)) == len(addrs)
    assert all(a.rack == 0 and a.side == "front" for a in addrs)

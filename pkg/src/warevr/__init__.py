"""Deterministic warehouse-stocktaking simulator: a tethered UAV/UGV pair
builds a digital twin by detecting and laser-verifying pallet barcodes,
with mission modes, teleoperation, and a live telemetry service."""

from .warehouse import (
    BoxType,
    DigitalTwin,
    Face,
    GroundTruth,
    InvalidSpecError,
    RackSpec,
    SlotAddress,
    ValidationReport,
    WarehouseSpec,
    apply_verification,
    generate_ground_truth,
    generate_twin,
    load_spec_file,
    slot_pose,
    validate_spec,
)
from .scan import (
    PreliminaryMap,
    ScanPath,
    SensorNoiseModel,
    VerificationRecord,
    classify_box,
    detect_candidates,
    measure_box,
    plan_scan_path,
    verify_waypoint,
)
from .robot import (
    FlyZoneMap,
    RobotState,
    VelocityCommand,
    clamp_to_cylinder,
    clamp_to_flyzone,
    dock_recharge,
    step,
    trigger_soft_landing,
)
from .mission import (
    MissionConfig,
    MissionMode,
    MissionState,
    expand_search_area,
    resolve_search,
    start_mission,
    tick,
)
from .teleop import ControllerInput, TeleopConfig, capture_reference, map_input, map_panel
from .inventory import InventoryRecord, InventoryStore, export_report, insert_record, query_by_tag
from .telemetry import ConnectionMonitor, Frame, decode_frame, encode_frame, render_view, serve
from .runtime import Simulation, run_headless, run_scenario

__version__ = "0.1.0"

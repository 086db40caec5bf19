"""Shared fixtures and spec builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import pytest

from warevr.warehouse import BoxType, RackSpec, WarehouseSpec, load_spec_file

GOLDEN_SPEC = Path(__file__).resolve().parents[1] / "src" / "warevr" / "data" / "warehouse.json"

# Catalog with min pairwise max-axis separation 0.3 m, far above the 0.09 m
# distinguishability floor, so classification can never be ambiguous in tests.
CATALOG = (
    BoxType("small", (0.3, 0.3, 0.3)),
    BoxType("medium", (0.6, 0.45, 0.6)),
    BoxType("tall", (0.45, 0.9, 0.45)),
)


def make_spec(
    racks: int = 1,
    tiers: int = 3,
    sections: int = 4,
    cell: tuple[float, float, float] = (1.0, 1.0, 2.0),
    aisle_width: float = 2.4,
    ceiling: float | None = None,
    catalog: tuple[BoxType, ...] = CATALOG,
    seed: int = 1,
) -> WarehouseSpec:
    """Axis-aligned rack rows stacked along +y, walls sized to fit."""
    cw, ch, cd = cell
    if ceiling is None:
        ceiling = tiers * ch + 2.0
    rack_specs = []
    for i in range(racks):
        rack_specs.append(
            RackSpec(
                origin=(0.0, i * (cd + aisle_width)),
                orientation=0.0,
                tiers=tiers,
                sections=sections,
                cell_width=cw,
                cell_height=ch,
                cell_depth=cd,
            )
        )
    margin = aisle_width + 1.8
    x_lo, x_hi = -margin, sections * cw + margin
    y_lo = -cd / 2.0 - margin
    y_hi = (racks - 1) * (cd + aisle_width) + cd / 2.0 + margin
    walls = ((x_lo, y_lo), (x_hi, y_lo), (x_hi, y_hi), (x_lo, y_hi))
    return WarehouseSpec(
        wall_polyline=walls,
        ceiling_height=ceiling,
        racks=tuple(rack_specs),
        aisle_width=aisle_width,
        box_catalog=catalog,
        seed=seed,
    )


@pytest.fixture(scope="session")
def golden():
    spec, extras = load_spec_file(GOLDEN_SPEC)
    return spec, extras


@pytest.fixture(scope="session")
def golden_spec(golden):
    return golden[0]

"""Panel geometry: stage presets, unit-cell layout, mask area budget,
optical transparency and the electrode / sub-pixel maps.

Lengths inside the panel are micrometres; overall panel size is in inches.

Unit-cell layout (one cell is ``unit_cell_pitch`` square, origin at its
lower-left corner)::

    +-----------------------------+
    |                             |
    |    [A]            [B]       |   A centred at (p/4, p/2)
    |                             |   B centred at (3p/4, p/2)
    +-----------------------------+

Each active sub-pixel is ``subpixel_pitch`` square. Its black mask sits on
the opposite face of the waveguide with the same footprint grown by
``mask_margin`` on every edge, so the projected mask area of one cell is the
union of two squares. With the defaults (90 um sub-pixels in a 300 um cell)
that is 2 * 90**2 / 300**2 = 0.18 of the aperture.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import UnsupportedStageError, ValidationError

UM_PER_INCH = 25400.0


class Stage(str, enum.Enum):
    STAGE1 = "stage1"
    STAGE2 = "stage2"
    STAGE3 = "stage3"
    CUSTOM = "custom"


class Side(str, enum.Enum):
    A = "A"  # front viewer
    B = "B"  # back viewer


@dataclass(frozen=True)
class PanelSpec:
    stage: Stage = Stage.STAGE3
    pixel_cols: int = 10
    pixel_rows: int = 10
    subpixels_per_pixel_side: int = 31
    subpixel_pitch: float = 90.0
    unit_cell_pitch: float = 300.0
    stripe_active_width: float = 25.0
    stripe_inactive_width: float = 250.0
    cell_gap: float = 3.0
    panel_width: float = 4.5
    panel_height: float = 4.5
    masked: bool = True
    mask_margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        validate_panel(self)

    @property
    def pixel_count(self) -> int:
        return self.pixel_cols * self.pixel_rows

    @property
    def subpixels_per_side(self) -> int:
        """Sub-pixels facing one side within one controllable pixel."""
        return self.subpixels_per_pixel_side ** 2

    @property
    def array_width_um(self) -> float:
        return self.pixel_cols * self.subpixels_per_pixel_side * self.unit_cell_pitch

    @property
    def array_height_um(self) -> float:
        return self.pixel_rows * self.subpixels_per_pixel_side * self.unit_cell_pitch

    def scaled(self, k: float) -> "PanelSpec":
        """Copy with every length multiplied by ``k``."""
        return replace(
            self,
            subpixel_pitch=self.subpixel_pitch * k,
            unit_cell_pitch=self.unit_cell_pitch * k,
            stripe_active_width=self.stripe_active_width * k,
            stripe_inactive_width=self.stripe_inactive_width * k,
            cell_gap=self.cell_gap * k,
            panel_width=self.panel_width * k,
            panel_height=self.panel_height * k,
            mask_margin=self.mask_margin * k,
        )


def validate_panel(spec: PanelSpec) -> None:
    for name in ("pixel_cols", "pixel_rows", "subpixels_per_pixel_side"):
        value = getattr(spec, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ValidationError(f"{name} must be a positive integer, got {value!r}")
    for name in ("subpixel_pitch", "unit_cell_pitch", "stripe_active_width",
                 "stripe_inactive_width", "cell_gap", "panel_width", "panel_height"):
        value = getattr(spec, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ValidationError(f"{name} must be a positive length, got {value!r}")
    if not (math.isfinite(spec.mask_margin) and spec.mask_margin >= 0):
        raise ValidationError(f"mask_margin must be >= 0, got {spec.mask_margin!r}")
    if spec.stage is Stage.STAGE1 and spec.pixel_count != 1:
        raise ValidationError("a stage1 panel has exactly one logical pixel")
    # A and B (with their masks) must fit side by side in one cell without overlap.
    needed = spec.subpixel_pitch + (2 * spec.mask_margin if spec.masked else 0.0)
    if needed > spec.unit_cell_pitch / 2 * (1 + 1e-12):
        raise ValidationError(
            f"sub-pixel ({spec.subpixel_pitch} um) plus mask margins does not fit in "
            f"half a unit cell ({spec.unit_cell_pitch / 2} um)")
    if (spec.array_width_um > spec.panel_width * UM_PER_INCH * (1 + 1e-12)
            or spec.array_height_um > spec.panel_height * UM_PER_INCH * (1 + 1e-12)):
        raise ValidationError("pixel array does not fit inside the panel outline")


PRESETS = {
    "stage1": PanelSpec(
        stage=Stage.STAGE1, pixel_cols=1, pixel_rows=1, subpixels_per_pixel_side=1,
        subpixel_pitch=25.0, unit_cell_pitch=275.0, cell_gap=2.0,
        panel_width=1.0, panel_height=1.0, masked=False),
    "stage2": PanelSpec(
        stage=Stage.STAGE2, pixel_cols=4, pixel_rows=4, cell_gap=3.0,
        panel_width=2.0, panel_height=2.0),
    "stage3": PanelSpec(
        stage=Stage.STAGE3, pixel_cols=10, pixel_rows=10, cell_gap=3.0,
        panel_width=4.5, panel_height=4.5),
}


def preset(name: str) -> PanelSpec:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValidationError(
            f"unknown panel preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


# -- area budget -------------------------------------------------------------

@dataclass(frozen=True)
class UnitCellSpec:
    frac_subpixel_A: float
    frac_subpixel_B: float
    frac_transparent: float
    frac_mask: float


def _cell_masks(spec: PanelSpec) -> list[tuple[float, float, float, float]]:
    """Mask rectangles (x0, y0, x1, y1) of one cell in cell-local coordinates."""
    if not spec.masked:
        return []
    p = spec.unit_cell_pitch
    half = spec.subpixel_pitch / 2 + spec.mask_margin
    rects = []
    for cx in (p / 4, 3 * p / 4):
        cy = p / 2
        rects.append((max(cx - half, 0.0), max(cy - half, 0.0),
                      min(cx + half, p), min(cy + half, p)))
    return rects


def union_area(rects) -> float:
    """Exact area of a union of axis-aligned rectangles (coordinate compression)."""
    rects = [r for r in rects if r[2] > r[0] and r[3] > r[1]]
    if not rects:
        return 0.0
    xs = sorted({x for r in rects for x in (r[0], r[2])})
    ys = sorted({y for r in rects for y in (r[1], r[3])})
    covered = np.zeros((len(xs) - 1, len(ys) - 1), dtype=bool)
    for x0, y0, x1, y1 in rects:
        covered[xs.index(x0):xs.index(x1), ys.index(y0):ys.index(y1)] = True
    widths = np.diff(xs)
    heights = np.diff(ys)
    return math.fsum(float(widths[i] * heights[j]) for i, j in zip(*np.nonzero(covered)))


def unit_cell(spec: PanelSpec) -> UnitCellSpec:
    cell = spec.unit_cell_pitch ** 2
    sub = spec.subpixel_pitch ** 2 / cell
    return UnitCellSpec(
        frac_subpixel_A=sub,
        frac_subpixel_B=sub,
        frac_transparent=1.0 - 2 * sub,
        frac_mask=union_area(_cell_masks(spec)) / cell,
    )


def mask_loss_fraction(spec: PanelSpec) -> float:
    """Masked area over the aperture of the pixel array, summed cell by cell.

    Every cell shares one layout, so its mask union is computed once and then
    accumulated over all ``pixel_count * subpixels_per_side`` cells.
    """
    validate_panel(spec)
    per_cell = union_area(_cell_masks(spec))
    n_cells = spec.pixel_count * spec.subpixels_per_side
    masked = math.fsum(per_cell for _ in range(n_cells))
    return masked / (spec.array_width_um * spec.array_height_um)


@dataclass(frozen=True)
class OpticalStack:
    """Flat-band transmittance factors. The interface/ITO split is a
    calibration choice whose product with the mask loss gives 0.65."""
    t_interfaces: float = 0.92
    t_ito: float = 0.862
    mask_loss: float | None = None  # None: take it from the panel geometry

    def __post_init__(self):
        for name in ("t_interfaces", "t_ito"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValidationError(f"{name} must lie in (0, 1], got {v!r}")
        if self.mask_loss is not None and not (0.0 <= self.mask_loss < 1.0):
            raise ValidationError(f"mask_loss must lie in [0, 1), got {self.mask_loss!r}")


def panel_transparency(spec: PanelSpec, stack: OpticalStack = OpticalStack()) -> float:
    mask = stack.mask_loss if stack.mask_loss is not None else mask_loss_fraction(spec)
    return stack.t_interfaces * stack.t_ito * (1.0 - mask)


# -- electrodes and sub-pixels -----------------------------------------------

@dataclass(frozen=True)
class ElectrodeMap:
    """Addressing electrode ids per pixel (row, col). Ground electrodes use
    negative ids, one common strip per pixel row, so they never collide with
    the addressing ids."""
    rows: int
    cols: int
    side_A: dict
    side_B: dict
    ground: frozenset

    @property
    def addressing_ids(self) -> list[int]:
        return sorted(list(self.side_A.values()) + list(self.side_B.values()))

    def side_ids(self, side: Side | str) -> dict:
        return self.side_A if Side(side) is Side.A else self.side_B

    def side_of(self, electrode: int) -> Side | None:
        n = self.rows * self.cols
        if 0 <= electrode < n:
            return Side.A
        if n <= electrode < 2 * n:
            return Side.B
        return None

    def dumps(self) -> bytes:
        doc = {
            "rows": self.rows,
            "cols": self.cols,
            "A": [[r, c, e] for (r, c), e in sorted(self.side_A.items())],
            "B": [[r, c, e] for (r, c), e in sorted(self.side_B.items())],
            "ground": sorted(self.ground),
        }
        return json.dumps(doc, separators=(",", ":")).encode()


def electrode_map(spec: PanelSpec) -> ElectrodeMap:
    if spec.stage is Stage.STAGE1:
        raise UnsupportedStageError(
            "stage1 cells have one unpatterned and one striped electrode; "
            "there is no per-pixel A/B addressing to map")
    n = spec.pixel_count
    side_a, side_b = {}, {}
    for r in range(spec.pixel_rows):
        for c in range(spec.pixel_cols):
            k = r * spec.pixel_cols + c
            side_a[(r, c)] = k
            side_b[(r, c)] = n + k
    ground = frozenset(-1 - r for r in range(spec.pixel_rows))
    return ElectrodeMap(spec.pixel_rows, spec.pixel_cols, side_a, side_b, ground)


class SubPixel(NamedTuple):
    row: int
    col: int
    side: Side
    x_um: float
    y_um: float
    facing: int  # +1 emits toward the front (A) viewer, -1 toward the back (B)


def array_origin(spec: PanelSpec) -> tuple[float, float]:
    """Lower-left corner of the pixel array; the array is centred in the panel."""
    return ((spec.panel_width * UM_PER_INCH - spec.array_width_um) / 2,
            (spec.panel_height * UM_PER_INCH - spec.array_height_um) / 2)


def subpixel_table(spec: PanelSpec) -> list[SubPixel]:
    n = spec.subpixels_per_pixel_side
    p = spec.unit_cell_pitch
    ox, oy = array_origin(spec)
    table = []
    for r in range(spec.pixel_rows):
        for c in range(spec.pixel_cols):
            for v in range(n):
                cy = oy + ((r * n + v) + 0.5) * p
                for u in range(n):
                    x0 = ox + (c * n + u) * p
                    table.append(SubPixel(r, c, Side.A, x0 + p / 4, cy, +1))
                    table.append(SubPixel(r, c, Side.B, x0 + 3 * p / 4, cy, -1))
    return table


def pixel_centers_um(spec: PanelSpec) -> tuple[np.ndarray, np.ndarray]:
    """x and y centres of each pixel, arrays of shape (rows, cols)."""
    ox, oy = array_origin(spec)
    size = spec.subpixels_per_pixel_side * spec.unit_cell_pitch
    cols = ox + (np.arange(spec.pixel_cols) + 0.5) * size
    rows = oy + (np.arange(spec.pixel_rows) + 0.5) * size
    return np.meshgrid(cols, rows)


def panel_to_dict(spec: PanelSpec) -> dict:
    d = asdict(spec)
    d["stage"] = spec.stage.value
    return d

"""Field-sequential drive schedules.

One video frame is split into six equal slots, R_A R_B G_A G_B B_A B_B: the
LED strip shows one colour per pair of slots and the electrodes of one side
are driven per slot. Inside a slot the square-wave drive runs for the largest
whole number of AC cycles and the remainder is an idle 0 V tail, so every
electrode sees zero mean voltage.

Schedule file format (UTF-8, one record per line, single spaces)::

    DUOGLASS-SCHEDULE v1
    panel <name> <cols> <rows>
    timing <frame_rate> <subframes_per_frame> <drive_frequency> <settle_margin> <side_order>
    subframes <count>
    subframe <color> <side> <duration_ms> <active_ms> <polarity_cycles> <n_amplitudes>
    amp <electrode_id> <volts>            (n_amplitudes lines)
    ...
    end

Floats are written with ``repr`` so parse/serialize is bit exact.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .electro import MaterialResponse, grayscale_voltage
from .errors import (DimensionError, QuantizationError, ScheduleFormatError,
                     ScheduleVersionError, ValidationError)
from .panel import PanelSpec, Side, electrode_map

FORMAT_VERSION = 1
MAGIC = "DUOGLASS-SCHEDULE"


class Color(str, enum.Enum):
    R = "R"
    G = "G"
    B = "B"


COLORS = (Color.R, Color.G, Color.B)


@dataclass(frozen=True)
class TimingConfig:
    frame_rate: float = 60.0        # Hz
    subframes_per_frame: int = 6
    drive_frequency: float = 1000.0  # Hz, square-wave fundamental
    settle_margin: float = 1.0
    side_order: str = "AB"          # which side leads each colour pair

    def __post_init__(self):
        if not (math.isfinite(self.frame_rate) and self.frame_rate > 0):
            raise ValidationError("frame_rate must be > 0")
        if isinstance(self.subframes_per_frame, bool) or int(self.subframes_per_frame) != self.subframes_per_frame \
                or self.subframes_per_frame < 1:
            raise ValidationError("subframes_per_frame must be a positive integer")
        if not math.isfinite(self.drive_frequency) or \
                self.drive_frequency < 2 * self.frame_rate * self.subframes_per_frame:
            raise ValidationError(
                "drive_frequency must be at least 2 x frame_rate x subframes_per_frame "
                f"({2 * self.frame_rate * self.subframes_per_frame:g} Hz)")
        if not (math.isfinite(self.settle_margin) and self.settle_margin >= 0):
            raise ValidationError("settle_margin must be >= 0")
        if self.side_order not in ("AB", "BA"):
            raise ValidationError("side_order must be 'AB' or 'BA'")

    @property
    def frame_ms(self) -> float:
        return 1000.0 / self.frame_rate

    @property
    def subframe_ms(self) -> float:
        return 1000.0 / (self.frame_rate * self.subframes_per_frame)

    def active_cycles(self) -> int:
        """Whole AC cycles that fit in one slot."""
        per_slot = Fraction(self.drive_frequency) / (Fraction(self.frame_rate) * self.subframes_per_frame)
        return math.floor(per_slot)

    def slot_order(self) -> list[tuple[Color, Side]]:
        sides = [Side(s) for s in self.side_order]
        return [(c, s) for c in COLORS for s in sides]


@dataclass(frozen=True)
class FramePair:
    """Front (side A) and back (side B) RGB targets, arrays (rows, cols, 3) in [0, 1]."""
    front: np.ndarray
    back: np.ndarray

    def __post_init__(self):
        front = np.asarray(self.front, dtype=float)
        back = np.asarray(self.back, dtype=float)
        for name, img in (("front", front), ("back", back)):
            if img.ndim != 3 or img.shape[2] != 3:
                raise DimensionError(f"{name} image must have shape (rows, cols, 3), got {img.shape}")
            if not np.all((img >= 0) & (img <= 1)):
                raise ValidationError(f"{name} image channels must lie in [0, 1]")
        if front.shape != back.shape:
            raise DimensionError(f"front image is {front.shape[1]}x{front.shape[0]} "
                                 f"but back image is {back.shape[1]}x{back.shape[0]}")
        object.__setattr__(self, "front", front)
        object.__setattr__(self, "back", back)

    @property
    def shape(self):
        return self.front.shape[:2]

    def swapped(self) -> "FramePair":
        return FramePair(self.back, self.front)


@dataclass(frozen=True)
class SubFrame:
    color: Color
    side: Side
    duration_ms: float
    active_ms: float
    polarity_cycles: float
    amplitudes: dict = field(default_factory=dict)  # electrode id -> RMS volts


@dataclass(frozen=True)
class PanelRef:
    name: str
    cols: int
    rows: int

    @classmethod
    def of(cls, spec: PanelSpec) -> "PanelRef":
        return cls(spec.stage.value, spec.pixel_cols, spec.pixel_rows)


@dataclass(frozen=True)
class DriveSchedule:
    panel: PanelRef
    timing: TimingConfig
    subframes: tuple
    format_version: int = FORMAT_VERSION


def compile_schedule(frames: FramePair, spec: PanelSpec, m: MaterialResponse,
                     timing: TimingConfig = TimingConfig()) -> DriveSchedule:
    if timing.subframes_per_frame != 6:
        raise ValidationError(
            "only 6 sub-frames per frame (3 colours x 2 alternating sides) are implemented")
    if frames.shape != (spec.pixel_rows, spec.pixel_cols):
        rows, cols = frames.shape
        raise DimensionError(
            f"images are {cols}x{rows} pixels but the panel has "
            f"{spec.pixel_cols}x{spec.pixel_rows} pixels")
    cycles = timing.active_cycles()
    if cycles < 1:
        raise QuantizationError(
            f"a {timing.subframe_ms:.6g} ms sub-frame holds no whole "
            f"{timing.drive_frequency:g} Hz cycle")
    active_ms = cycles * 1000.0 / timing.drive_frequency
    emap = electrode_map(spec)
    channel = {c: k for k, c in enumerate(COLORS)}
    # one voltage lookup per distinct channel value keeps large panels cheap
    cache: dict[float, float] = {}

    def volts(level: float) -> float:
        if level not in cache:
            cache[level] = grayscale_voltage(m, level)
        return cache[level]

    subframes = []
    for color, side in timing.slot_order():
        image = frames.front if side is Side.A else frames.back
        ids = emap.side_ids(side)
        amps = {}
        for (r, c), e in sorted(ids.items(), key=lambda kv: kv[1]):
            amps[e] = volts(float(image[r, c, channel[color]]))
        subframes.append(SubFrame(color, side, timing.subframe_ms, active_ms,
                                  float(cycles), amps))
    return DriveSchedule(PanelRef.of(spec), timing, tuple(subframes))


@dataclass(frozen=True)
class FeasibilityReport:
    subframe_ms: float
    bound_ms: float
    margin_ratio: float
    feasible: bool


def check_feasibility(timing: TimingConfig, m: MaterialResponse) -> FeasibilityReport:
    """A slot must outlast ``settle_margin`` x (rise + decay) time constants."""
    d = timing.subframe_ms
    bound = timing.settle_margin * (m.tau_on + m.tau_off)
    ratio = d / bound if bound > 0 else math.inf
    return FeasibilityReport(d, bound, ratio, d >= bound)


@dataclass(frozen=True)
class Violation:
    code: str
    subframe: int | None
    message: str

    def __str__(self):
        where = f"sub-frame {self.subframe}: " if self.subframe is not None else ""
        return f"[{self.code}] {where}{self.message}"


def validate_schedule(s: DriveSchedule) -> list[Violation]:
    out = []
    t = s.timing
    n_pix = s.panel.cols * s.panel.rows
    if len(s.subframes) != t.subframes_per_frame:
        out.append(Violation("count", None, f"{len(s.subframes)} sub-frames, timing declares "
                                            f"{t.subframes_per_frame}"))
    total = math.fsum(sf.duration_ms for sf in s.subframes)
    if abs(total - t.frame_ms) > 1e-6:  # 1e-9 s
        out.append(Violation("frame-period", None,
                             f"durations sum to {total!r} ms, frame period is {t.frame_ms!r} ms"))
    for k, sf in enumerate(s.subframes):
        if not sf.duration_ms > 0:
            out.append(Violation("duration", k, "duration must be > 0"))
        if sf.active_ms > sf.duration_ms * (1 + 1e-12):
            out.append(Violation("duration", k, "active drive longer than the sub-frame"))
        cycles = sf.polarity_cycles
        if not (cycles >= 1 and float(cycles).is_integer()):
            out.append(Violation("dc-balance", k,
                                 f"{cycles!r} AC cycles is not a positive whole number; "
                                 "mean voltage is not zero"))
        elif abs(sf.active_ms * t.drive_frequency / 1000.0 - cycles) > 1e-9 * max(cycles, 1):
            out.append(Violation("dc-balance", k,
                                 f"active time {sf.active_ms!r} ms is not {cycles:g} cycles at "
                                 f"{t.drive_frequency:g} Hz"))
        lo, hi = (0, n_pix) if sf.side is Side.A else (n_pix, 2 * n_pix)
        foreign = sorted(e for e in sf.amplitudes if not lo <= e < hi)
        if foreign:
            out.append(Violation("side-mixing", k,
                                 f"side {sf.side.value} sub-frame drives electrodes "
                                 f"{foreign[:5]} of the other side"))
        bad = sorted(e for e, v in sf.amplitudes.items() if not (math.isfinite(v) and v >= 0))
        if bad:
            out.append(Violation("amplitude", k, f"negative or non-finite amplitude on {bad[:5]}"))
    return out


# -- text format ---------------------------------------------------------------

def serialize_schedule(s: DriveSchedule) -> bytes:
    t = s.timing
    lines = [
        f"{MAGIC} v{s.format_version}",
        f"panel {s.panel.name} {s.panel.cols} {s.panel.rows}",
        f"timing {t.frame_rate!r} {t.subframes_per_frame} {t.drive_frequency!r} "
        f"{t.settle_margin!r} {t.side_order}",
        f"subframes {len(s.subframes)}",
    ]
    for sf in s.subframes:
        lines.append(f"subframe {sf.color.value} {sf.side.value} {sf.duration_ms!r} "
                     f"{sf.active_ms!r} {sf.polarity_cycles!r} {len(sf.amplitudes)}")
        lines.extend(f"amp {e} {v!r}" for e, v in sf.amplitudes.items())
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8")


class _Lines:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def next(self, keyword: str, n_fields: int):
        if self.pos >= len(self.lines):
            raise ScheduleFormatError(f"unexpected end of file, expected '{keyword}'",
                                      line=self.pos + 1)
        lineno = self.pos + 1
        raw = self.lines[self.pos]
        self.pos += 1
        tokens, col = [], 1
        for piece in raw.split(" "):
            tokens.append((piece, col))
            col += len(piece) + 1
        if tokens[0][0] != keyword:
            raise ScheduleFormatError(f"expected '{keyword}', found {tokens[0][0]!r}",
                                      line=lineno, column=1)
        if len(tokens) != n_fields + 1 or any(tok == "" for tok, _ in tokens):
            raise ScheduleFormatError(
                f"'{keyword}' takes {n_fields} single-space separated fields", line=lineno,
                column=1)
        return lineno, tokens[1:]


def _conv(kind, token, lineno):
    text, col = token
    try:
        if kind is int:
            if not re.fullmatch(r"-?[0-9]+", text):
                raise ValueError
            return int(text)
        value = float(text)
        if not math.isfinite(value) and kind is not None:
            raise ValueError
        return value
    except ValueError:
        raise ScheduleFormatError(f"malformed {'integer' if kind is int else 'number'} "
                                  f"{text!r}", line=lineno, column=col) from None


def parse_schedule(data: bytes) -> DriveSchedule:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ScheduleFormatError(f"not UTF-8 text: {exc}") from None
    if not text.strip():
        raise ScheduleFormatError("empty stream: missing header", line=1, column=1)
    lines = _Lines(text)
    header = lines.lines[0]
    m = re.fullmatch(re.escape(MAGIC) + r" v([0-9]+)", header)
    if not m:
        raise ScheduleFormatError(f"malformed header {header[:40]!r}, expected "
                                  f"'{MAGIC} v{FORMAT_VERSION}'", line=1, column=1)
    version = int(m.group(1))
    if version != FORMAT_VERSION:
        raise ScheduleVersionError(
            f"schedule format v{version} is not supported by this reader (v{FORMAT_VERSION})",
            line=1, column=len(MAGIC) + 2)
    lines.pos = 1

    ln, f = lines.next("panel", 3)
    panel = PanelRef(f[0][0], _conv(int, f[1], ln), _conv(int, f[2], ln))
    ln, f = lines.next("timing", 5)
    try:
        timing = TimingConfig(_conv(float, f[0], ln), _conv(int, f[1], ln),
                              _conv(float, f[2], ln), _conv(float, f[3], ln), f[4][0])
    except ValidationError as exc:
        raise ScheduleFormatError(str(exc), line=ln) from None
    ln, f = lines.next("subframes", 1)
    count = _conv(int, f[0], ln)
    subframes = []
    for _ in range(count):
        ln, f = lines.next("subframe", 6)
        try:
            color, side = Color(f[0][0]), Side(f[1][0])
        except ValueError:
            raise ScheduleFormatError("unknown colour or side", line=ln, column=f[0][1]) from None
        duration, active = _conv(float, f[2], ln), _conv(float, f[3], ln)
        cycles = _conv(float, f[4], ln)
        n_amp = _conv(int, f[5], ln)
        amps = {}
        for _ in range(n_amp):
            ln, a = lines.next("amp", 2)
            e = _conv(int, a[0], ln)
            if e in amps:
                raise ScheduleFormatError(f"electrode {e} listed twice", line=ln, column=a[0][1])
            amps[e] = _conv(None, a[1], ln)
        subframes.append(SubFrame(color, side, duration, active, cycles, amps))
    lines.next("end", 0)
    if lines.pos != len(lines.lines):
        raise ScheduleFormatError("trailing content after 'end'", line=lines.pos + 1)
    return DriveSchedule(panel, timing, tuple(subframes), version)

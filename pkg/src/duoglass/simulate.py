"""Time-domain simulation of a drive schedule on the dual-sided panel.

Each electrode drives every sub-pixel of one pixel on one side, so all those
sub-pixels share one scattering trajectory; only the guided flux reaching
them may differ (optional depletion profile). The simulator therefore
integrates one level per electrode and weights it by the mean flux of the
pixel's sub-pixels.

Time discretisation: every active drive span and idle tail of a sub-frame is
cut into equal steps no longer than ``dt``, so segment boundaries fall on
grid points. The level update across a step is the exact exponential
relaxation; emitted light is integrated with the trapezoid rule on those grid
points. Inside a segment the target is constant, so the stepped sums have a
closed form, which is what ``_segment`` evaluates.
"""
from __future__ import annotations

import functools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import panel as pg
from .electro import MaterialResponse, normalized_response
from .errors import CalibrationError, DimensionError, DuoglassError, StabilityError, ValidationError
from .panel import OpticalStack, PanelSpec, Side
from .schedule import COLORS, Color, DriveSchedule, FramePair, TimingConfig, compile_schedule

TARGET_BRIGHTNESS = 16.0  # cd/m^2, sustained full white on the stage-2 reference
PERIODIC_TOL = 1e-9
MAX_FRAMES = 200


@dataclass(frozen=True)
class LedConfig:
    flux_r: float = 1.0
    flux_g: float = 1.0
    flux_b: float = 1.0
    coupling_efficiency: float = 0.5
    edges: str = "both"       # left | right | both
    depletion: float = 0.0    # fractional flux loss from the lit edge to the farthest point

    def __post_init__(self):
        if min(self.flux_r, self.flux_g, self.flux_b) < 0:
            raise ValidationError("LED fluxes must be >= 0")
        if not (0 < self.coupling_efficiency <= 1):
            raise ValidationError("coupling_efficiency must lie in (0, 1]")
        if self.edges not in ("left", "right", "both"):
            raise ValidationError("edges must be left, right or both")
        if not (0 <= self.depletion < 1):
            raise ValidationError("depletion must lie in [0, 1)")

    @property
    def flux_per_color(self) -> dict:
        return {Color.R: self.flux_r, Color.G: self.flux_g, Color.B: self.flux_b}

    def scaled(self, k: float) -> "LedConfig":
        return replace(self, flux_r=self.flux_r * k, flux_g=self.flux_g * k, flux_b=self.flux_b * k)


@dataclass(frozen=True)
class MaskModel:
    blocking_efficiency: float = 1.0
    off_state_background: float | None = None  # 0 V scattering level, a.u.; None: material i_min

    def __post_init__(self):
        if not (0 <= self.blocking_efficiency <= 1):
            raise ValidationError("blocking_efficiency must lie in [0, 1]")
        if self.off_state_background is not None and not (
                math.isfinite(self.off_state_background) and self.off_state_background >= 0):
            raise ValidationError("off_state_background must be >= 0")

    def floor(self, m: MaterialResponse) -> float:
        f = m.i_min if self.off_state_background is None else self.off_state_background
        if f >= m.i_max:
            raise ValidationError(
                f"off-state level {f} must stay below the material i_max {m.i_max}")
        return f


@dataclass(frozen=True)
class Metrics:
    brightness_white: float   # mean summed-RGB luminance over both sides, cd/m^2
    panel_cr: float           # brightest / darkest pixel over both sides
    crosstalk: float          # leaked / intended light, worst side
    transparency: float


@dataclass
class SimulationReport:
    luminance_front: np.ndarray  # (rows, cols, 3), cd/m^2
    luminance_back: np.ndarray
    metrics: Metrics
    timing: TimingConfig
    calibration: float
    dt: float
    frames_simulated: int
    peak_luminance: tuple      # per colour, the ceiling used by render_side
    intended_front: np.ndarray = field(repr=False, default=None)
    intended_back: np.ndarray = field(repr=False, default=None)

    def side(self, side) -> np.ndarray:
        return self.luminance_front if Side(side) is Side.A else self.luminance_back

    def to_json(self) -> str:
        doc = {
            "format": "duoglass-report/1",
            "luminance_front": self.luminance_front.tolist(),
            "luminance_back": self.luminance_back.tolist(),
            "intended_front": self.intended_front.tolist(),
            "intended_back": self.intended_back.tolist(),
            "metrics": asdict(self.metrics),
            "timing": asdict(self.timing),
            "calibration": self.calibration,
            "dt": self.dt,
            "frames_simulated": self.frames_simulated,
            "peak_luminance": list(self.peak_luminance),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SimulationReport":
        try:
            doc = json.loads(text)
            if doc.get("format") != "duoglass-report/1":
                raise ValidationError(f"not a duoglass report (format {doc.get('format')!r})")
            return cls(
                luminance_front=np.array(doc["luminance_front"], dtype=float),
                luminance_back=np.array(doc["luminance_back"], dtype=float),
                intended_front=np.array(doc["intended_front"], dtype=float),
                intended_back=np.array(doc["intended_back"], dtype=float),
                metrics=Metrics(**doc["metrics"]),
                timing=TimingConfig(**doc["timing"]),
                calibration=doc["calibration"],
                dt=doc["dt"],
                frames_simulated=doc["frames_simulated"],
                peak_luminance=tuple(doc["peak_luminance"]),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed report: {exc}") from None


def worker_count(requested: int | None = None) -> int:
    """Thread count: explicit request, else DUOGLASS_THREADS, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("DUOGLASS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"DUOGLASS_THREADS must be an integer, got {env!r}") from None
    return 1


# -- core integrator -----------------------------------------------------------

def _segments(timing: TimingConfig, active_ms: list[float], dt: float):
    """(slot index, driven?, step length, step count) for one frame."""
    segs = []
    for k, active in enumerate(active_ms):
        for driven, length in ((True, active), (False, timing.subframe_ms - active)):
            if length <= 1e-12:
                continue
            n = max(1, math.ceil(length / dt - 1e-9))
            segs.append((k, driven, length / n, n))
    return segs


def _segment(level, target, h, n, q_on, q_off):
    """Advance ``n`` exact exponential steps of length ``h`` toward ``target``.

    Returns the end level and the trapezoid integral over the segment.
    """
    rising = target > level
    q = np.where(rising, q_on, q_off)
    dev = level - target
    qn = q ** n
    # trapezoid over n steps of a geometric sequence dev*q**j
    geo = np.where(q < 1.0, (1.0 + q) / 2.0 * (1.0 - qn) / np.where(q < 1.0, 1.0 - q, 1.0), n)
    integral = h * (n * target + dev * geo)
    return target + dev * qn, integral


def _run_chunk(targets, floor, slot_color, segs, h_q, frame_ms):
    """Simulate electrodes (columns of ``targets``) until each is periodic.

    ``targets`` has shape (n_slots, n_e): the steady level an electrode is
    driven toward during the active span of each slot. Electrodes never
    interact, so the result for one column does not depend on any other.
    """
    n_e = targets.shape[1]
    level = np.full(n_e, floor)
    idle = np.full(n_e, floor)
    energy = None
    done = np.zeros(n_e, dtype=bool)
    result = np.zeros((n_e, 3))
    frames = 0
    while not done.all():
        frames += 1
        if frames > MAX_FRAMES:
            raise DuoglassError(f"no periodic steady state after {MAX_FRAMES} frames")
        start = level
        acc = np.zeros((n_e, 3))
        for k, driven, h, n in segs:
            q_on, q_off = h_q[h]
            target = targets[k] if driven else idle
            level, integral = _segment(level, target, h, n, q_on, q_off)
            acc[:, slot_color[k]] += integral
        acc /= frame_ms
        if energy is not None:
            diff = np.maximum(np.abs(acc - energy).max(axis=1), np.abs(level - start))
            newly = (~done) & (diff < PERIODIC_TOL)
            result[newly] = acc[newly]
            done |= newly
        energy = acc
    return result, frames


def _flux_weights(spec: PanelSpec, led: LedConfig) -> np.ndarray:
    """Mean relative guided flux per (side, row, col)."""
    w = np.ones((2, spec.pixel_rows, spec.pixel_cols))
    if led.depletion == 0:
        return w
    width = spec.panel_width * pg.UM_PER_INCH
    ox, _ = pg.array_origin(spec)
    n, p = spec.subpixels_per_pixel_side, spec.unit_cell_pitch
    for s, offset in enumerate((p / 4, 3 * p / 4)):
        for c in range(spec.pixel_cols):
            x = ox + (c * n + np.arange(n)) * p + offset
            if led.edges == "left":
                dist = x / width
            elif led.edges == "right":
                dist = (width - x) / width
            else:
                dist = np.minimum(x, width - x) / (width / 2)
            w[s, :, c] = np.mean(1.0 - led.depletion * dist)
    return w


def _check_inputs(s: DriveSchedule, spec: PanelSpec, m: MaterialResponse, dt: float):
    if (s.panel.cols, s.panel.rows) != (spec.pixel_cols, spec.pixel_rows):
        raise DimensionError(
            f"schedule is for a {s.panel.cols}x{s.panel.rows} panel, spec is "
            f"{spec.pixel_cols}x{spec.pixel_rows}")
    if m.tau_on is None or m.tau_off is None:
        raise ValidationError(f"material {m.name} has no switching time constants")
    if not (dt > 0 and dt <= min(m.tau_on, m.tau_off) / 4):
        raise StabilityError(
            f"dt={dt} ms must be positive and at most min(tau_on, tau_off)/4 = "
            f"{min(m.tau_on, m.tau_off) / 4} ms")


def _raw_energy(s, spec, m, mask, dt, workers):
    """Per-electrode mean level x colour-on time, shape (2, rows, cols, 3), and
    the number of frames simulated."""
    floor = mask.floor(m)
    n = spec.pixel_count
    n_slots = len(s.subframes)
    targets = np.full((n_slots, 2 * n), floor)
    for k, sf in enumerate(s.subframes):
        if sf.amplitudes:
            ids = np.fromiter(sf.amplitudes.keys(), dtype=int, count=len(sf.amplitudes))
            volts = np.fromiter(sf.amplitudes.values(), dtype=float, count=len(sf.amplitudes))
            if ids.min() < 0 or ids.max() >= 2 * n:
                raise DimensionError(f"sub-frame {k} references electrodes outside the panel")
            g = normalized_response(m, volts)
            targets[k, ids] = floor + (m.i_max - floor) * g
    slot_color = [COLORS.index(sf.color) for sf in s.subframes]
    segs = _segments(s.timing, [sf.active_ms for sf in s.subframes], dt)
    h_q = {h: (math.exp(-h / m.tau_on), math.exp(-h / m.tau_off)) for _, _, h, _ in segs}

    workers = min(worker_count(workers), 2 * n)
    bounds = np.linspace(0, 2 * n, workers + 1).astype(int)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(workers)]

    def job(span):
        a, b = span
        return _run_chunk(targets[:, a:b], floor, slot_color, segs, h_q, s.timing.frame_ms)

    if workers == 1:
        parts = [job(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    energy = np.concatenate([p[0] for p in parts], axis=0)
    frames = max(p[1] for p in parts)
    return energy.reshape(2, spec.pixel_rows, spec.pixel_cols, 3), frames


def _color_duty(s: DriveSchedule) -> np.ndarray:
    duty = np.zeros(3)
    for sf in s.subframes:
        duty[COLORS.index(sf.color)] += sf.duration_ms
    return duty / s.timing.frame_ms


def _simulate(s, spec, m, led, mask, dt, calibration, stack, workers):
    _check_inputs(s, spec, m, dt)
    energy, frames = _raw_energy(s, spec, m, mask, dt, workers)
    flux = np.array([led.flux_r, led.flux_g, led.flux_b]) * led.coupling_efficiency * calibration
    weights = _flux_weights(spec, led)[..., None]
    intended = energy * weights * flux  # (2, rows, cols, 3)
    leak = 1.0 - mask.blocking_efficiency
    front = intended[0] + leak * intended[1]
    back = intended[1] + leak * intended[0]

    sums = np.concatenate([front.sum(axis=2).ravel(), back.sum(axis=2).ravel()])
    brightness = math.fsum(sums) / sums.size
    darkest = float(sums.min())
    panel_cr = float(sums.max()) / darkest if darkest > 0 else math.inf
    crosstalk = 0.0
    for own, other in ((intended[0], intended[1]), (intended[1], intended[0])):
        leaked = leak * math.fsum(other.ravel())
        wanted = math.fsum(own.ravel())
        if leaked > 0:
            crosstalk = max(crosstalk, leaked / wanted if wanted > 0 else math.inf)
    peak = tuple(float(x) for x in m.i_max * flux * _color_duty(s) * float(weights.max()))
    metrics = Metrics(brightness, panel_cr, crosstalk, pg.panel_transparency(spec, stack))
    return SimulationReport(front, back, metrics, s.timing, calibration, dt, frames, peak,
                            intended_front=intended[0], intended_back=intended[1])


def simulate_frame(s: DriveSchedule, spec: PanelSpec, m: MaterialResponse,
                   led: LedConfig = LedConfig(), mask: MaskModel = MaskModel(),
                   dt: float = 0.05, calibration: float | None = None,
                   stack: OpticalStack = OpticalStack(),
                   workers: int | None = None) -> SimulationReport:
    """Simulate ``s`` to its periodic steady state and report the last frame.

    ``calibration`` (cd/m^2 per a.u. of scattered flux) defaults to
    ``calibrate_luminance(m, led)``; pass it explicitly to hold it fixed while
    varying the LED fluxes.
    """
    if calibration is None:
        calibration = calibrate_luminance(m, led)
    return _simulate(s, spec, m, led, mask, dt, calibration, stack, workers)


def full_white(spec: PanelSpec) -> FramePair:
    img = np.ones((spec.pixel_rows, spec.pixel_cols, 3))
    return FramePair(img, img.copy())


def all_black(spec: PanelSpec) -> FramePair:
    img = np.zeros((spec.pixel_rows, spec.pixel_cols, 3))
    return FramePair(img, img.copy())


@functools.lru_cache(maxsize=64)
def calibrate_luminance(m: MaterialResponse, led: LedConfig) -> float:
    """Scale constant giving 16 cd/m^2 for sustained full white on the stage-2
    reference (default timing, ideal masks, material off-state level)."""
    if led.flux_r + led.flux_g + led.flux_b == 0:
        raise CalibrationError("all LED fluxes are zero; luminance calibration undefined")
    spec = pg.preset("stage2")
    s = compile_schedule(full_white(spec), spec, m, TimingConfig())
    raw = _simulate(s, spec, m, led, MaskModel(), 0.05, 1.0, OpticalStack(), 1)
    return TARGET_BRIGHTNESS / raw.metrics.brightness_white


def off_state_floor(s: DriveSchedule, spec: PanelSpec, m: MaterialResponse, led: LedConfig,
                    mask: MaskModel, calibration: float) -> np.ndarray:
    """Closed-form per-colour luminance of an undriven pixel (uniform flux)."""
    flux = np.array([led.flux_r, led.flux_g, led.flux_b]) * led.coupling_efficiency * calibration
    return mask.floor(m) * flux * _color_duty(s) * (2.0 - mask.blocking_efficiency)


# -- derived quantities -----------------------------------------------------------

@dataclass(frozen=True)
class PanelContrast:
    front: float
    back: float

    @property
    def ideal(self) -> bool:
        """True when a side has no dark-state light at all (ratio is infinite)."""
        return math.isinf(self.front) or math.isinf(self.back)


def panel_contrast(on_report: SimulationReport, off_report: SimulationReport) -> PanelContrast:
    ratios = []
    for side in (Side.A, Side.B):
        white = float(np.mean(on_report.side(side).sum(axis=2)))
        black = float(np.mean(off_report.side(side).sum(axis=2)))
        ratios.append(white / black if black > 0 else math.inf)
    return PanelContrast(*ratios)


def render_side(report: SimulationReport, side) -> bytes:
    """Binary PPM of one side. Channel value = round(255 * L / L_peak) where
    L_peak is the colour's ceiling luminance recorded in the report, clipped
    to [0, 255]."""
    from .ppm import encode_p6

    lum = report.side(side)
    peak = np.array(report.peak_luminance, dtype=float)
    safe = np.where(peak > 0, peak, 1.0)
    scaled = np.where(peak > 0, lum / safe, 0.0)
    values = np.clip(np.floor(255.0 * scaled + 0.5), 0, 255).astype(np.uint8)
    return encode_p6(values)


@dataclass(frozen=True)
class ObversionReport:
    passed: bool
    trials: int
    max_deviation_back: float   # back map spread while the front image varies
    max_deviation_front: float  # front map spread while the back image varies


def _max_rel_dev(maps):
    ref = maps[0]
    worst = 0.0
    for other in maps[1:]:
        denom = np.where(ref != 0, np.abs(ref), 1.0)
        worst = max(worst, float(np.max(np.abs(other - ref) / denom)))
    return worst


def obversion_check(spec: PanelSpec, m: MaterialResponse, led: LedConfig, mask: MaskModel,
                    timing: TimingConfig = TimingConfig(), trials: int = 100, seed: int = 0,
                    tolerance: float = 1e-12) -> ObversionReport:
    """Vary one side's image at random and measure how much the other side moves."""
    rng = np.random.default_rng(seed)
    shape = (spec.pixel_rows, spec.pixel_cols, 3)
    cal = calibrate_luminance(m, led)

    def run(front, back):
        s = compile_schedule(FramePair(front, back), spec, m, timing)
        return simulate_frame(s, spec, m, led, mask, calibration=cal)

    fixed = rng.random(shape)
    backs = [run(rng.random(shape), fixed).luminance_back for _ in range(trials)]
    fronts = [run(fixed, rng.random(shape)).luminance_front for _ in range(trials)]
    dev_b, dev_f = _max_rel_dev(backs), _max_rel_dev(fronts)
    return ObversionReport(max(dev_b, dev_f) <= tolerance, trials, dev_b, dev_f)

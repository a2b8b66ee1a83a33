"""Voltage-to-scattering model of the polymer-stabilised LC layer.

The steady curve is a logistic in voltage, rescaled so that 0 V maps exactly
onto ``i_min`` and large voltages approach ``i_max``. Switching is a first
order relaxation with separate rise and decay constants.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .errors import ConvergenceError, FitError, MetricError, ValidationError

SATURATION_FRACTION = 0.9
CLAMP_WIDTHS = 20.0
CSV_HEADER = ("voltage_v", "intensity_au")


@dataclass(frozen=True)
class MaterialResponse:
    name: str
    i_min: float
    i_max: float
    v_mid: float
    v_width: float
    tau_on: float | None = 1.0   # ms
    tau_off: float | None = 2.0  # ms

    def __post_init__(self):
        if not (self.i_max > self.i_min >= 0):
            raise ValidationError(
                f"{self.name}: need i_max > i_min >= 0 (got {self.i_min}, {self.i_max})")
        if not (self.v_width > 0 and math.isfinite(self.v_width)):
            raise ValidationError(f"{self.name}: v_width must be > 0")
        if not math.isfinite(self.v_mid):
            raise ValidationError(f"{self.name}: v_mid must be finite")
        for t in ("tau_on", "tau_off"):
            v = getattr(self, t)
            if v is not None and not v > 0:
                raise ValidationError(f"{self.name}: {t} must be > 0")

    @property
    def clamp_voltage(self) -> float:
        return self.v_mid + CLAMP_WIDTHS * self.v_width

    @property
    def contrast_ratio(self) -> float:
        return self.i_max / self.i_min if self.i_min > 0 else math.inf


# v_mid solves "90 % crossing at the quoted saturation voltage" for the
# chosen width (brentq, xtol 1e-15); see tests/test_electro.py for the check.
MATERIALS = {
    "HCM-009": MaterialResponse("HCM-009", i_min=0.22, i_max=5.28,
                                v_mid=8.082265901360241, v_width=1.1),
    "RM-257": MaterialResponse("RM-257", i_min=0.26, i_max=4.1,
                               v_mid=9.142333713161735, v_width=1.3),
}


def material(name: str) -> MaterialResponse:
    for key, m in MATERIALS.items():
        if key.lower() == name.lower():
            return m
    raise ValidationError(
        f"unknown material preset {name!r}; known: {', '.join(MATERIALS)}")


def _offset(m: MaterialResponse) -> float:
    return float(expit(-m.v_mid / m.v_width))


def normalized_response(m: MaterialResponse, v):
    """Curve position in [0, 1]: 0 at 0 V, tending to 1."""
    s0 = _offset(m)
    g = (expit((np.asarray(v, dtype=float) - m.v_mid) / m.v_width) - s0) / (1.0 - s0)
    return np.clip(g, 0.0, 1.0)


def steady_intensity(m: MaterialResponse, v):
    g = normalized_response(m, v)
    out = m.i_min + (m.i_max - m.i_min) * g
    return float(out) if np.ndim(out) == 0 else out


def grayscale_voltage(m: MaterialResponse, level: float) -> float:
    """Drive voltage whose steady intensity sits ``level`` of the way from
    i_min to i_max."""
    if not (0.0 <= level <= 1.0):
        raise ValidationError(f"grayscale level must lie in [0, 1], got {level!r}")
    if level == 0.0:
        return 0.0
    if level == 1.0:
        return m.clamp_voltage
    s0 = _offset(m)
    v = m.v_mid + m.v_width * float(logit(s0 + level * (1.0 - s0)))
    return min(max(v, 0.0), m.clamp_voltage)


def step_response(m: MaterialResponse, t: float, start: float, target: float) -> float:
    if t < 0:
        raise ValidationError("t must be >= 0")
    if t == 0:
        return start
    tau = m.tau_on if target > start else m.tau_off
    y = target + (start - target) * math.exp(-t / tau)
    # rounding must not push the result past either end
    return min(max(y, min(start, target)), max(start, target))


# -- sampled curves ----------------------------------------------------------

@dataclass(frozen=True)
class CurveSamples:
    voltage: tuple
    intensity: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.voltage)
        i = tuple(float(x) for x in self.intensity)
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "intensity", i)
        if len(v) != len(i):
            raise ValidationError("voltage and intensity columns differ in length")
        if len(v) < 2:
            raise ValidationError("a curve needs at least 2 samples")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValidationError("voltages must be strictly increasing")
        if any(not math.isfinite(x) for x in v + i):
            raise ValidationError("samples must be finite")
        if any(x < 0 for x in i):
            raise ValidationError("intensities must be >= 0")

    def __len__(self):
        return len(self.voltage)


@dataclass(frozen=True)
class CurveMetrics:
    i_min: float | None
    i_max: float | None
    cr: float | None
    v_sat: float | None


def curve_metrics(samples: CurveSamples) -> CurveMetrics:
    v = samples.voltage
    y = samples.intensity
    i_min, i_max = min(y), max(y)
    if i_min == 0:
        raise MetricError("off-state intensity is 0; contrast ratio undefined")
    if i_max == i_min:
        raise MetricError("flat curve; saturation voltage undefined")
    threshold = i_min + SATURATION_FRACTION * (i_max - i_min)
    v_sat = None
    for k in range(len(y)):
        if y[k] >= threshold:
            if k == 0:
                v_sat = v[0]
            else:
                frac = (threshold - y[k - 1]) / (y[k] - y[k - 1])
                v_sat = v[k - 1] + frac * (v[k] - v[k - 1])
            break
    return CurveMetrics(i_min=i_min, i_max=i_max, cr=i_max / i_min, v_sat=v_sat)


def sample_curve(m: MaterialResponse, voltages) -> CurveSamples:
    voltages = np.asarray(voltages, dtype=float)
    return CurveSamples(tuple(voltages), tuple(np.atleast_1d(steady_intensity(m, voltages))))


def read_curve_csv(source) -> CurveSamples:
    """Parse the two-column ``voltage_v,intensity_au`` format from a path or text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise ValidationError(f"curve CSV must start with header {','.join(CSV_HEADER)}")
    volts, inten = [], []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValidationError(f"curve CSV row {n}: expected 2 columns, got {len(row)}")
        try:
            volts.append(float(row[0]))
            inten.append(float(row[1]))
        except ValueError:
            raise ValidationError(f"curve CSV row {n}: non-numeric value") from None
    return CurveSamples(tuple(volts), tuple(inten))


def write_curve_csv(samples: CurveSamples, path=None, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(",".join(CSV_HEADER))
    lines.extend(f"{v!r},{i!r}" for v, i in zip(samples.voltage, samples.intensity))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- fitting -----------------------------------------------------------------

@dataclass
class FitResult:
    material: MaterialResponse
    residual: float
    iterations: int
    history: list = field(default_factory=list)  # residual after each accepted step


def _model(theta, v):
    a, b, mu, logw = theta
    w = math.exp(logw)
    s0 = expit(-mu / w)
    s = expit((v - mu) / w)
    g = (s - s0) / (1.0 - s0)
    return a + (b - a) * g


def _jacobian(theta, v):
    a, b, mu, logw = theta
    w = math.exp(logw)
    x = (v - mu) / w
    x0 = -mu / w
    s, s0 = expit(x), expit(x0)
    ds, ds0 = s * (1 - s), s0 * (1 - s0)
    g = (s - s0) / (1.0 - s0)
    # d/dmu and d/dlogw of g through both the running and the 0 V logistic
    dg_dmu = (-ds / w + ds0 / w * (1 - g)) / (1.0 - s0)
    dg_dlogw = (-ds * x + ds0 * x0 * (1 - g)) / (1.0 - s0)
    span = b - a
    return np.column_stack([1 - g, g, span * dg_dmu, span * dg_dlogw])


def _initial_guess(v, y):
    lo, hi = float(y.min()), float(y.max())
    a, b = lo, hi
    def crossing(frac):
        target = lo + frac * (hi - lo)
        k = int(np.argmax(y >= target))
        if k == 0:
            return float(v[0])
        return float(v[k - 1] + (target - y[k - 1]) / (y[k] - y[k - 1]) * (v[k] - v[k - 1]))
    v10, v50, v90 = crossing(0.1), crossing(0.5), crossing(0.9)
    width = max((v90 - v10) / (2 * math.log(9)), (v[-1] - v[0]) * 1e-3)
    return np.array([a, b, v50, math.log(width)])


def fit_response(samples: CurveSamples, max_iter: int = 200, tol: float = 1e-12,
                 name: str = "fitted") -> FitResult:
    """Least-squares logistic fit by Levenberg-Marquardt.

    Only steps that lower the summed squared residual are accepted, so the
    residual history is non-increasing. Raises ``ConvergenceError`` (with the
    best estimate attached) if ``max_iter`` is exhausted.
    """
    v = np.asarray(samples.voltage)
    y = np.asarray(samples.intensity)
    if len(v) < 4:
        raise FitError(f"{len(v)} samples cannot determine 4 parameters")
    if y.max() == y.min():
        raise ConvergenceError("flat curve: no transition to fit", best=None, residual=0.0)

    theta = _initial_guess(v, y)
    r = _model(theta, v) - y
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = _jacobian(theta, v)
        JtJ = J.T @ J
        g = J.T @ r
        accepted = False
        while lam < 1e16:
            A = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + step
            r_new = _model(trial, v) - y
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent direction left: we are at a (local) minimum
            return _finish(theta, cost, it, history, name)
        improvement = cost - cost_new
        theta, r, cost = trial, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10, 1e-12)
        if improvement <= tol * max(cost, 1e-30) or np.max(np.abs(step)) < 1e-12:
            return _finish(theta, cost, it, history, name)
    best = _params(theta, name)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (residual {cost:.3g})",
        best=best, residual=cost)


def _params(theta, name):
    a, b, mu, logw = (float(t) for t in theta)
    if not b > a:
        raise FitError(f"fit collapsed: i_max {b:.4g} <= i_min {a:.4g}")
    return MaterialResponse(name, i_min=max(a, 0.0), i_max=b, v_mid=mu,
                            v_width=math.exp(logw), tau_on=None, tau_off=None)


def _finish(theta, cost, it, history, name):
    return FitResult(_params(theta, name), residual=cost, iterations=it, history=history)


def with_taus(m: MaterialResponse, tau_on: float, tau_off: float) -> MaterialResponse:
    return replace(m, tau_on=tau_on, tau_off=tau_off)

"""Independent reference computations used by the tests.

Nothing here calls into the integrator or the area code of the package; each
oracle recomputes its quantity from first principles.
"""
from __future__ import annotations

import math

import numpy as np


def raster_mask_fraction(cell_pitch, sub_pitch, margin, cells_x, cells_y, step=0.5):
    """Mask area fraction by point sampling every ``step`` um over the array.

    Masks are squares of side ``sub_pitch + 2*margin`` centred at a quarter
    and three quarters of each cell's width, at half its height.
    """
    xs = np.arange(step / 2, cells_x * cell_pitch, step)
    ys = np.arange(step / 2, cells_y * cell_pitch, step)
    X, Y = np.meshgrid(xs, ys)
    lx = np.mod(X, cell_pitch)
    ly = np.mod(Y, cell_pitch)
    half = sub_pitch / 2 + margin
    inside = np.zeros_like(X, dtype=bool)
    for cx in (cell_pitch / 4, 3 * cell_pitch / 4):
        inside |= (np.abs(lx - cx) < half) & (np.abs(ly - cell_pitch / 2) < half)
    return inside.mean()


def logistic_curve(params, v):
    """Clamped logistic written out longhand: 0 V sits at i_min exactly."""
    i_min, i_max, v_mid, w = params
    f = lambda x: 1.0 / (1.0 + np.exp(-(x - v_mid) / w))  # noqa: E731
    g = (f(np.asarray(v, float)) - f(0.0)) / (1.0 - f(0.0))
    return i_min + (i_max - i_min) * np.clip(g, 0, 1)


def random_curve_params(rng):
    return (rng.uniform(0.1, 0.5), rng.uniform(3.0, 6.0),
            rng.uniform(5.0, 12.0), rng.uniform(0.8, 2.5))


FIT_VOLTAGES = np.linspace(0.0, 24.0, 241)


def noisy_samples(params, rng, sigma_frac):
    y = logistic_curve(params, FIT_VOLTAGES)
    if sigma_frac:
        y = y + rng.normal(0.0, sigma_frac * (params[1] - params[0]), y.shape)
    return FIT_VOLTAGES, np.clip(y, 0.0, None)


def fit_errors(params, fitted):
    """Relative errors: intensities against the span, voltages against themselves."""
    i_min, i_max, v_mid, w = params
    span = i_max - i_min
    return (abs(fitted.i_min - i_min) / span, abs(fitted.i_max - i_max) / span,
            abs(fitted.v_mid - v_mid) / v_mid, abs(fitted.v_width - w) / w)


def exact_periodic_energy(pieces, tau_on, tau_off, floor, n_colors=3):
    """Exact periodic steady state for one electrode.

    ``pieces`` is a list of (duration_ms, target_level, colour_index) covering
    one frame. Returns per-colour integral of the level (a.u. x ms) over one
    frame once the start level no longer changes, using closed-form
    exponential integrals.
    """
    x = floor
    for _ in range(10000):
        start = x
        out = np.zeros(n_colors)
        for length, target, color in pieces:
            tau = tau_on if target > x else tau_off
            decay = math.exp(-length / tau)
            out[color] += target * length + (x - target) * tau * (1.0 - decay)
            x = target + (x - target) * decay
        if abs(x - start) < 1e-15:
            return out
    raise RuntimeError("periodic state not reached")


def schedule_pieces(schedule, electrode, level_of, floor):
    """Frame pieces for ``electrode`` from a compiled schedule: driven toward
    ``level_of(volts)`` during the active span of its own sub-frames, back
    toward ``floor`` otherwise."""
    colors = {"R": 0, "G": 1, "B": 2}
    pieces = []
    for sf in schedule.subframes:
        c = colors[sf.color.value]
        if electrode in sf.amplitudes:
            pieces.append((sf.active_ms, level_of(sf.amplitudes[electrode]), c))
            pieces.append((sf.duration_ms - sf.active_ms, floor, c))
        else:
            pieces.append((sf.duration_ms, floor, c))
    return [p for p in pieces if p[0] > 0]

"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed at the end of the run (and to stdout with ``-s``)."""
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from duoglass import config as cf
from duoglass import electro as eo
from duoglass import panel as pg
from duoglass import ppm
from duoglass import schedule as sc
from duoglass import simulate as sim
from duoglass import study
from duoglass.cli import cli_dispatch
from conftest import ACCEPTANCE
from oracles import fit_errors, noisy_samples, random_curve_params
from test_simulate import oracle_maps

HCM = eo.MATERIALS["HCM-009"]
ROUND_TRIPS = settings(max_examples=1000, deadline=None,
                       suppress_health_check=[HealthCheck.too_slow])


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def cli_kv(capsys, argv):
    code = cli_dispatch(argv)
    out = capsys.readouterr().out
    return code, {k: v for k, v in (ln.split(" = ", 1) for ln in out.strip().splitlines())}


def test_01_hcm_anchor_metrics(capsys):
    t0 = time.perf_counter()
    code, kv = cli_kv(capsys, ["metrics", str(study.anchor_curve_path("monomer_hcm009.csv"))])
    elapsed = time.perf_counter() - t0
    cr, vs = float(kv["cr"]), float(kv["v_sat_v"])
    ok = code == 0 and abs(cr - 24) <= 2.4 and abs(vs - 10.5) <= 0.5 and elapsed < 1.0
    record(1, ok, f"HCM-009 CR {cr:.3f}, V_sat {vs:.3f} V, {elapsed * 1000:.0f} ms")


def test_02_rm257_anchor_metrics(capsys):
    code, kv = cli_kv(capsys, ["metrics", str(study.anchor_curve_path("monomer_rm257.csv"))])
    i_max, i_min, cr, vs = (float(kv[k]) for k in ("i_max_au", "i_min_au", "cr", "v_sat_v"))
    ok = (code == 0 and abs(i_max - 4.1) <= 0.02 * 4.1 and abs(i_min - 0.26) <= 0.02 * 0.26
          and abs(cr - 15.9) <= 0.05 * 15.9 and abs(vs - 12) <= 0.5)
    record(2, ok, f"RM-257 I_max {i_max:.4f}, I_min {i_min:.4f}, CR {cr:.3f}, V_sat {vs:.3f} V")


def test_03_stage3_transparency(capsys):
    code, kv = cli_kv(capsys, ["transparency", "stage3"])
    loss, t = float(kv["mask_loss"]), float(kv["transparency"])
    ok = code == 0 and abs(loss - 0.18) <= 0.005 and abs(t - 0.65) <= 0.02
    record(3, ok, f"mask loss {loss:.6f}, transparency {t:.6f}")


def test_04_feasibility():
    at60 = sc.check_feasibility(sc.TimingConfig(frame_rate=60), HCM)
    at50 = sc.check_feasibility(sc.TimingConfig(frame_rate=50), HCM)
    ok = (not at60.feasible) and at50.feasible and at60.bound_ms == 3.0
    record(4, ok, f"60 Hz slot {at60.subframe_ms:.4f} ms infeasible={not at60.feasible}; "
                  f"50 Hz slot {at50.subframe_ms:.4f} ms feasible={at50.feasible}")


def test_05_obversion():
    spec = pg.preset("stage2")
    rep = sim.obversion_check(spec, HCM, sim.LedConfig(), sim.MaskModel(), trials=100, seed=5)
    rng = np.random.default_rng(9)
    fp = sc.FramePair(rng.random((4, 4, 3)), rng.random((4, 4, 3)))
    s = sc.compile_schedule(fp, spec, HCM)
    xt = sim.simulate_frame(s, spec, HCM).metrics.crosstalk
    ok = rep.passed and rep.max_deviation_back == 0.0 and rep.max_deviation_front == 0.0 \
        and xt == 0.0
    record(5, ok, f"100 trials per side, max deviation back {rep.max_deviation_back:g}, "
                  f"front {rep.max_deviation_front:g}; crosstalk {xt:g}")


def test_06_leakage_oracle():
    spec = pg.preset("stage2")
    rng = np.random.default_rng(6)
    fp = sc.FramePair(rng.random((4, 4, 3)), rng.random((4, 4, 3)))
    s = sc.compile_schedule(fp, spec, HCM)
    ideal = sim.simulate_frame(s, spec, HCM)
    leaky = sim.simulate_frame(s, spec, HCM, mask=sim.MaskModel(0.9))
    a, b = math.fsum(ideal.luminance_front.ravel()), math.fsum(ideal.luminance_back.ravel())
    want = 0.1 * max(b / a, a / b)
    rel = abs(leaky.metrics.crosstalk - want) / want
    record(6, rel <= 1e-9, f"crosstalk {leaky.metrics.crosstalk:.12f} vs closed form "
                           f"{want:.12f}, relative error {rel:.2e}")


def test_07_fit_recovery():
    rng = np.random.default_rng(2024)
    worst_clean = worst_noisy = 0.0
    monotone = True
    for _ in range(50):
        params = random_curve_params(rng)
        for sigma in (0.0, 0.02):
            v, y = noisy_samples(params, rng, sigma)
            fit = eo.fit_response(eo.CurveSamples(v, y))
            err = max(fit_errors(params, fit.material))
            monotone &= all(b <= a for a, b in zip(fit.history, fit.history[1:]))
            if sigma:
                worst_noisy = max(worst_noisy, err)
            else:
                worst_clean = max(worst_clean, err)
    ok = worst_clean < 0.01 and worst_noisy < 0.05 and monotone
    record(7, ok, f"50 curves: worst error {worst_clean:.2e} noise-free, "
                  f"{worst_noisy:.4f} at 2% noise; residuals non-increasing={monotone}")


def test_08_sweep_anchors():
    results = {}
    for name in ("concentration", "uv", "monomer"):
        ds = study.load_dataset(name)
        for c in study.check_anchors(study.run_sweep(ds), ds):
            results[f"{name}: {c.name}"] = c.passed
    needed = ["concentration: argmax CR at 6", "concentration: argmax V_sat at 7",
              "uv: argmax CR at 8", "uv: argmin V_sat at 6", "uv: V_sat minimum ~ 9.9 V",
              "monomer: V_sat BAB-6 ~ RM-82", "monomer: V_sat RM-82/BAB-6 < HCM-009 < RM-257"]
    ok = all(results.get(k) for k in needed)
    record(8, ok, f"{sum(results.values())}/{len(results)} structural checks pass")


def test_09_brightness_calibration():
    spec = pg.preset("stage2")
    s = sc.compile_schedule(sim.full_white(spec), spec, HCM)
    rep = sim.simulate_frame(s, spec, HCM)
    oracle = oracle_maps(sim.full_white(spec), spec, sim.LedConfig(), sim.MaskModel(),
                         rep.calibration).sum(axis=-1).mean()
    b = rep.metrics.brightness_white
    ok = abs(b - 16) <= 0.16 and abs(oracle - b) <= 0.02 * b
    record(9, ok, f"full white {b:.6f} cd/m2; analytic periodic oracle {oracle:.6f} cd/m2")


def test_10_asbuilt_contrast():
    cfg = cf.load_config("stage2-asbuilt")

    def contrast(mask):
        reps = [sim.simulate_frame(sc.compile_schedule(fp, cfg.panel, cfg.material, cfg.timing),
                                   cfg.panel, cfg.material, cfg.led, mask)
                for fp in (sim.full_white(cfg.panel), sim.all_black(cfg.panel))]
        return sim.panel_contrast(*reps).front

    cr = contrast(cfg.mask)
    sweep = [contrast(sim.MaskModel(off_state_background=x)) for x in (0.22, 0.4, 0.6783, 1.0)]
    bounded = all(x <= HCM.contrast_ratio for x in sweep)
    falling = all(b < a for a, b in zip(sweep, sweep[1:]))
    ok = abs(cr - 4.34) <= 0.434 and bounded and falling
    record(10, ok, f"as-built CR {cr:.4f} (calibrated); uncalibrated CRs "
                   f"{', '.join(f'{x:.2f}' for x in sweep)} bounded by material CR "
                   f"{HCM.contrast_ratio:.1f} and falling")


def test_11_thread_determinism(tmp_path):
    rng = np.random.default_rng(11)
    front, back = tmp_path / "f.ppm", tmp_path / "b.ppm"
    ppm.write_image(rng.integers(0, 256, (10, 10, 3)) / 255, front)
    ppm.write_image(rng.integers(0, 256, (10, 10, 3)) / 255, back)
    outputs = []
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}"
        env = dict(os.environ, DUOGLASS_THREADS=threads)
        r = subprocess.run([sys.executable, "-m", "duoglass", "simulate", "stage3", str(front),
                            str(back), "-o", str(out)], env=env, capture_output=True)
        assert r.returncode == 0, r.stderr
        outputs.append([(out / n).read_bytes() for n in ("report.json", "front.ppm", "back.ppm")])
    ok = outputs[0] == outputs[1]
    record(11, ok, "stage3 report and both images bit-identical at 1 and 8 threads"
           if ok else "outputs differ between thread counts")


# -- 12: round trips ------------------------------------------------------------------

COUNTS = {"schedule": 0, "config": 0, "ppm": 0}


@ROUND_TRIPS
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1),
       st.sampled_from([30.0, 50.0, 60.0]), st.sampled_from(["AB", "BA"]),
       st.sampled_from(sorted(eo.MATERIALS)))
def test_12a_schedule_round_trip(cols, rows, seed, fr, order, mat):
    spec = pg.PanelSpec(stage="custom", pixel_cols=cols, pixel_rows=rows,
                        subpixels_per_pixel_side=1, panel_width=1.0, panel_height=1.0)
    rng = np.random.default_rng(seed)
    fp = sc.FramePair(rng.random((rows, cols, 3)), rng.random((rows, cols, 3)))
    s = sc.compile_schedule(fp, spec, eo.MATERIALS[mat],
                            sc.TimingConfig(frame_rate=fr, side_order=order))
    data = sc.serialize_schedule(s)
    parsed = sc.parse_schedule(data)
    assert parsed == s and sc.serialize_schedule(parsed) == data
    COUNTS["schedule"] += 1


finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def run_configs(draw):
    cfg = cf.RunConfig()
    cfg.panel = pg.PanelSpec(
        stage=draw(st.sampled_from(["stage2", "stage3", "custom"])),
        pixel_cols=draw(st.integers(1, 10)), pixel_rows=draw(st.integers(1, 10)),
        subpixels_per_pixel_side=draw(st.integers(1, 31)),
        subpixel_pitch=draw(st.floats(10, 90, **finite)),
        mask_margin=draw(st.floats(0, 30, **finite)),
        cell_gap=draw(st.floats(0.5, 10, **finite)),
        masked=draw(st.booleans()), panel_width=5.0, panel_height=5.0)
    cfg.panel_preset = None
    i_min = draw(st.floats(0, 1, **finite))
    cfg.material = eo.MaterialResponse(
        "custom", i_min, i_min + draw(st.floats(0.5, 5, **finite)),
        draw(st.floats(1, 20, **finite)), draw(st.floats(0.2, 3, **finite)),
        draw(st.floats(0.1, 5, **finite)), draw(st.floats(0.1, 5, **finite)))
    cfg.timing = sc.TimingConfig(frame_rate=draw(st.floats(10, 120, **finite)),
                                 drive_frequency=draw(st.floats(1500, 5000, **finite)),
                                 settle_margin=draw(st.floats(0, 3, **finite)),
                                 side_order=draw(st.sampled_from(["AB", "BA"])))
    cfg.led = sim.LedConfig(*(draw(st.floats(0, 10, **finite)) for _ in range(3)),
                            coupling_efficiency=draw(st.floats(0.01, 1, **finite)),
                            edges=draw(st.sampled_from(["left", "right", "both"])),
                            depletion=draw(st.floats(0, 0.9, **finite)))
    cfg.mask = sim.MaskModel(draw(st.floats(0, 1, **finite)),
                             draw(st.one_of(st.none(), st.floats(0, i_min, **finite))))
    cfg.stack = pg.OpticalStack(draw(st.floats(0.01, 1, **finite)),
                                draw(st.floats(0.01, 1, **finite)),
                                draw(st.one_of(st.none(), st.floats(0, 0.99, **finite))))
    cfg.dt = draw(st.floats(0.001, 0.5, **finite))
    name = st.text("abcxyz_-./0123456789", min_size=1, max_size=12)
    cfg.front = draw(st.one_of(st.none(), name))
    cfg.back = draw(st.one_of(st.none(), name))
    cfg.output_dir = draw(name)
    return cfg


@ROUND_TRIPS
@given(run_configs())
def test_12b_config_round_trip(cfg):
    text = cf.serialize_config(cfg)
    parsed = cf.parse_config(text)
    assert parsed == cfg
    assert cf.serialize_config(parsed) == text
    COUNTS["config"] += 1


@ROUND_TRIPS
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_12c_ppm_round_trip(w, h, seed):
    values = np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)
    data = ppm.encode_p6(values)
    img = ppm.decode(data)
    assert np.array_equal(np.round(img * 255).astype(np.uint8), values)
    assert ppm.encode(img) == data
    assert np.array_equal(ppm.decode(ppm.encode_p3(img)), img)
    COUNTS["ppm"] += 1


def test_12_round_trip_counts():
    ok = all(n >= 1000 for n in COUNTS.values())
    record(12, ok, ", ".join(f"{k} {n} cases" for k, n in COUNTS.items()))


def test_13_timestep_convergence():
    spec = pg.preset("stage2")
    rng = np.random.default_rng(13)
    fp = sc.FramePair(rng.random((4, 4, 3)), rng.random((4, 4, 3)))
    s = sc.compile_schedule(fp, spec, HCM)
    a = sim.simulate_frame(s, spec, HCM, dt=0.05, calibration=1.0)
    b = sim.simulate_frame(s, spec, HCM, dt=0.025, calibration=1.0)
    worst = max(float(np.max(np.abs(x - y) / y)) for x, y in
                ((a.luminance_front, b.luminance_front), (a.luminance_back, b.luminance_back)))
    record(13, worst < 0.005, f"halving dt from 0.05 ms moves luminance by at most {worst:.2e}")

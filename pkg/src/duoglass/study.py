"""Parametric studies over the stage-1 test cells.

The measured curves behind the monomer / concentration / UV / cell-gap
studies were never published as data. The shipped anchor datasets are
logistic curves rebuilt from the few quoted scalars (I_min, I_max, CR,
V_sat); entries with no quoted value carry metrics only, or nothing at all.
Checks against them test ordering and argmax positions, never curve values
that were not quoted.

Dataset file grammar (same ``[section]`` / ``key = value`` syntax as run
configs, ``[entry]`` may repeat)::

    [dataset]
    name = concentration
    variable = concentration_pct
    version = 1
    selected = 6

    [entry]
    value = 6
    curve = concentration_6.csv
    provenance = ...

``selected`` (optional) is the value the study settled on. An entry gives
either ``curve`` (a two-column CSV next to the dataset file) or any of
``i_min``, ``i_max``, ``cr``, ``v_sat``, or neither when nothing was published.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .config import parse_sections, to_float
from .electro import (CurveMetrics, CurveSamples, MaterialResponse, curve_metrics,
                      normalized_response, read_curve_csv, sample_curve, write_curve_csv)
from .errors import ConfigError, DuoglassError, ValidationError

VARIABLES = ("monomer", "concentration_pct", "uv_intensity_mw_cm2", "cell_gap_um")
SWEEP_HEADER = ("variable", "value", "i_min_au", "i_max_au", "cr", "v_sat_v")
DATASET_VERSION = 1
ANCHOR_VOLTAGES = np.round(np.arange(0, 97) * 0.25, 2)  # 0 .. 24 V

RECONSTRUCTED = "reconstructed"


@dataclass(frozen=True)
class DatasetEntry:
    value: object          # str for monomers, float otherwise
    data: object           # CurveSamples, CurveMetrics or None (no data published)
    provenance: str


@dataclass(frozen=True)
class StudyDataset:
    name: str
    variable: str
    entries: tuple
    selected: object = None

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValidationError(f"unknown study variable {self.variable!r}")
        if not self.entries:
            raise ValidationError(f"dataset {self.name!r} has no entries")
        values = [e.value for e in self.entries]
        if len(set(values)) != len(values):
            raise ValidationError(f"dataset {self.name!r} repeats a variable value")
        if any(not e.provenance for e in self.entries):
            raise ValidationError(f"dataset {self.name!r}: every entry needs a provenance note")

    @property
    def numeric(self) -> bool:
        return self.variable != "monomer"


# -- anchor reconstruction ---------------------------------------------------------

@dataclass(frozen=True)
class Anchor:
    value: object
    i_min: float | None = None
    i_max: float | None = None
    v_sat: float | None = None
    v_width: float = 1.1
    note: str = ""

    @property
    def has_curve(self) -> bool:
        return self.i_min is not None and self.i_max is not None and self.v_sat is not None


# Quoted scalars are marked "quoted"; everything else is filler shaped only by
# the qualitative statements (which entry is best, where V_sat peaks).
ANCHORS = {
    "monomer": ("monomer", None, (
        Anchor("HCM-009", 0.22, 5.28, 10.5,
               note="quoted: I_min ~0.22, I_max slightly above 5, CR ~24, V_sat 10.5 V; concentration unspecified"),
        Anchor("RM-257", 0.26, 4.1, 12.0, v_width=1.3,
               note="quoted: I_max 4.1, I_min 0.26, CR 15.9, V_sat 12 V; concentration unspecified"),
        Anchor("BAB-6", v_sat=9.0, note="quoted: V_sat ~9 V only; CR not given; concentration unspecified"),
        Anchor("RM-82", v_sat=9.0, note="quoted: V_sat ~9 V only; CR not given; concentration unspecified"),
    )),
    "concentration": ("concentration_pct", 6.0, (
        Anchor(4.0, 0.30, 4.20, 8.6, note="filler; V_sat rises with concentration"),
        Anchor(5.0, 0.26, 4.94, 9.4, note="filler; V_sat rises with concentration"),
        Anchor(6.0, 0.22, 5.28, 10.5, note="quoted: best CR at 6 %"),
        Anchor(7.0, 0.24, 5.04, 11.3, note="quoted: V_sat maximum at 7 %; value filler"),
        Anchor(8.0, 0.27, 4.59, 10.9, note="filler; below the 7 % V_sat maximum"),
    )),
    "uv": ("uv_intensity_mw_cm2", 8.0, (
        Anchor(4.0, 0.15, 3.00, 10.4, note="quoted: V_sat 10.4 V at the low end"),
        Anchor(6.0, 0.19, 4.20, 9.9, note="quoted: V_sat minimum 9.9 V at 6 mW/cm2"),
        Anchor(8.0, 0.22, 5.28, 10.5, note="quoted: optimum 8 mW/cm2, CR 24; I_min/I_max peak"),
        Anchor(10.0, 0.21, 4.60, 10.8, note="filler; intensities decline, V_sat rises"),
        Anchor(12.0, 0.20, 4.00, 11.2, note="filler; intensities decline, V_sat rises"),
    )),
    "cell_gap": ("cell_gap_um", 2.0, (
        Anchor(2.0, note="quoted: 2 um chosen; no metric values published"),
        Anchor(3.0, note="quoted: tested; no metric values published"),
        Anchor(4.0, note="quoted: tested; no metric values published"),
    )),
}


def reconstruct_material(name: str, i_min: float, i_max: float, v_sat: float,
                         v_width: float) -> MaterialResponse:
    """Logistic whose 90 % crossing sits exactly at ``v_sat``."""
    def gap(v_mid):
        m = MaterialResponse(name, i_min, i_max, v_mid, v_width)
        return float(normalized_response(m, v_sat)) - 0.9
    v_mid = brentq(gap, 1e-6, v_sat, xtol=1e-15)
    return MaterialResponse(name, i_min, i_max, v_mid, v_width)


def _slug(value) -> str:
    if isinstance(value, float):
        value = f"{value:g}"
    return str(value).lower().replace(".", "p").replace("-", "")


def _fmt_value(value) -> str:
    return f"{value:g}" if isinstance(value, float) else str(value)


def write_anchor_files(directory) -> list[Path]:
    """Regenerate the shipped anchor datasets and curves into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (variable, selected, anchors) in ANCHORS.items():
        lines = [f"# {RECONSTRUCTED} anchor dataset; see the notes per entry",
                 "[dataset]", f"name = {name}", f"variable = {variable}",
                 f"version = {DATASET_VERSION}"]
        if selected is not None:
            lines.append(f"selected = {_fmt_value(selected)}")
        lines.append("")
        for a in anchors:
            lines += ["[entry]", f"value = {_fmt_value(a.value)}"]
            if a.has_curve:
                label = f"{name}-{_fmt_value(a.value)}"
                m = reconstruct_material(label, a.i_min, a.i_max, a.v_sat, a.v_width)
                csv_name = f"{name}_{_slug(a.value)}.csv"
                write_curve_csv(sample_curve(m, ANCHOR_VOLTAGES), directory / csv_name,
                                comment=f"{RECONSTRUCTED}: {label}; {a.note}")
                written.append(directory / csv_name)
                lines.append(f"curve = {csv_name}")
            elif a.v_sat is not None:
                lines.append(f"v_sat = {a.v_sat!r}")
            lines += [f"provenance = {RECONSTRUCTED}; {a.note}", ""]
        path = directory / f"{name}.dataset"
        path.write_text("\n".join(lines), encoding="utf-8")
        written.append(path)
    return written


def anchor_dir() -> Path:
    return Path(str(resources.files("duoglass") / "data" / "anchors"))


def anchor_curve_path(name: str) -> Path:
    """Path of a shipped anchor curve, e.g. ``monomer_hcm009.csv``."""
    return anchor_dir() / name


def parse_dataset(text: str, base_dir=None) -> StudyDataset:
    sections = parse_sections(text, repeatable=("entry",))
    heads = [s for s in sections if s.name == "dataset"]
    if not heads:
        raise ConfigError("missing required section [dataset]")
    for s in sections:
        if s.name not in ("dataset", "entry"):
            raise ConfigError(f"unknown section [{s.name}]", s.line)
    head = heads[0]
    for key, (_, line) in head.items.items():
        if key not in ("name", "variable", "version", "selected"):
            raise ConfigError(f"unknown key {key!r} in [dataset]", line)
    for key in ("name", "variable"):
        if key not in head.items:
            raise ConfigError(f"[dataset] needs {key!r}", head.line)
    variable = head.items["variable"][0]
    if variable not in VARIABLES:
        raise ConfigError(f"variable must be one of {', '.join(VARIABLES)}",
                          head.items["variable"][1])
    if "version" in head.items and head.items["version"][0] != str(DATASET_VERSION):
        raise ConfigError(f"dataset version {head.items['version'][0]} is not supported "
                          f"(expected {DATASET_VERSION})", head.items["version"][1])
    numeric = variable != "monomer"

    def conv_value(raw, line):
        return to_float("value", raw, line) if numeric else raw

    selected = None
    if "selected" in head.items:
        selected = conv_value(*head.items["selected"])
    entries = []
    base_dir = Path(base_dir) if base_dir is not None else None
    for sec in sections:
        if sec.name != "entry":
            continue
        allowed = {"value", "curve", "i_min", "i_max", "cr", "v_sat", "provenance"}
        for key, (_, line) in sec.items.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [entry]", line)
        if "value" not in sec.items:
            raise ConfigError("[entry] needs 'value'", sec.line)
        value = conv_value(*sec.items["value"])
        provenance = sec.items.get("provenance", ("", sec.line))[0]
        if "curve" in sec.items:
            raw, line = sec.items["curve"]
            path = Path(raw) if base_dir is None else base_dir / raw
            try:
                data = read_curve_csv(path)
            except OSError as exc:
                raise ConfigError(f"cannot read curve {raw!r}: {exc.strerror}", line) from None
        else:
            nums = {k: to_float(k, v, ln) for k, (v, ln) in sec.items.items()
                    if k in ("i_min", "i_max", "cr", "v_sat")}
            data = CurveMetrics(nums.get("i_min"), nums.get("i_max"), nums.get("cr"),
                                nums.get("v_sat")) if nums else None
        entries.append(DatasetEntry(value, data, provenance))
    try:
        return StudyDataset(head.items["name"][0], variable, tuple(entries), selected)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_dataset(name_or_path) -> StudyDataset:
    """Load a shipped anchor dataset by name (``monomer``, ``concentration``,
    ``uv``, ``cell_gap``) or a dataset file by path."""
    if str(name_or_path) in ANCHORS:
        path = anchor_dir() / f"{name_or_path}.dataset"
    else:
        path = Path(name_or_path)
    return parse_dataset(path.read_text(encoding="utf-8"), base_dir=path.parent)


# -- sweeps -------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    value: object
    i_min: float | None
    i_max: float | None
    cr: float | None
    v_sat: float | None
    flag: str = ""


@dataclass(frozen=True)
class SweepResult:
    variable: str
    rows: tuple

    def row(self, value) -> SweepRow | None:
        return next((r for r in self.rows if r.value == value), None)


def run_sweep(dataset: StudyDataset) -> SweepResult:
    rows = []
    for e in dataset.entries:
        if isinstance(e.data, CurveSamples):
            try:
                m = curve_metrics(e.data)
                rows.append(SweepRow(e.value, m.i_min, m.i_max, m.cr, m.v_sat))
            except DuoglassError as exc:
                rows.append(SweepRow(e.value, None, None, None, None, flag=f"error: {exc}"))
        elif isinstance(e.data, CurveMetrics):
            d = e.data
            cr = d.cr
            if cr is None and d.i_min and d.i_max is not None:
                cr = d.i_max / d.i_min
            rows.append(SweepRow(e.value, d.i_min, d.i_max, cr, d.v_sat))
        else:
            rows.append(SweepRow(e.value, None, None, None, None, flag="no data"))
    rows.sort(key=lambda r: r.value)
    return SweepResult(dataset.variable, tuple(rows))


def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in result.rows:
        w.writerow([result.variable, _fmt_value(r.value)] +
                   ["" if x is None else repr(x) for x in (r.i_min, r.i_max, r.cr, r.v_sat)])
    return buf.getvalue()


# -- anchor checks ----------------------------------------------------------------

@dataclass(frozen=True)
class AnchorCheck:
    name: str
    passed: bool
    detail: str
    degenerate: bool = False


def _arg_extreme(result: SweepResult, attr: str, pick):
    rows = [r for r in result.rows if getattr(r, attr) is not None]
    if len(rows) < 2:
        return None, rows
    return pick(rows, key=lambda r: getattr(r, attr)).value, rows


def _argcheck(result, attr, pick, expected, label):
    found, rows = _arg_extreme(result, attr, pick)
    name = f"{label} at {_fmt_value(expected)}"
    if found is None:
        return AnchorCheck(name, True, f"{len(rows)} usable row(s); nothing to compare",
                           degenerate=True)
    ok = found == expected
    return AnchorCheck(name, ok, f"{label} found at {_fmt_value(found)}"
                       + ("" if ok else f" (expected {_fmt_value(expected)})"))


def _value_of(result, value, attr):
    r = result.row(value)
    return None if r is None else getattr(r, attr)


def check_anchors(result: SweepResult, dataset: StudyDataset) -> list[AnchorCheck]:
    """Structural claims only: where the optimum sits and how entries order."""
    checks = []
    var = dataset.variable
    if var == "monomer":
        checks.append(_argcheck(result, "cr", max, "HCM-009", "argmax CR"))
        vals = {k: _value_of(result, k, "v_sat") for k in ("BAB-6", "RM-82", "HCM-009", "RM-257")}
        if None in vals.values():
            missing = [k for k, v in vals.items() if v is None]
            degenerate = len([v for v in vals.values() if v is not None]) < 2
            checks.append(AnchorCheck("V_sat ordering", degenerate,
                                      f"missing V_sat for {', '.join(missing)}", degenerate))
        else:
            close = abs(vals["BAB-6"] - vals["RM-82"]) <= 0.5
            low = max(vals["BAB-6"], vals["RM-82"])
            ordered = low < vals["HCM-009"] < vals["RM-257"]
            detail = ", ".join(f"{k} {v:.2f} V" for k, v in vals.items())
            checks.append(AnchorCheck("V_sat BAB-6 ~ RM-82", close, detail))
            checks.append(AnchorCheck("V_sat RM-82/BAB-6 < HCM-009 < RM-257", ordered, detail))
    elif var == "concentration_pct":
        checks.append(_argcheck(result, "cr", max, 6.0, "argmax CR"))
        checks.append(_argcheck(result, "v_sat", max, 7.0, "argmax V_sat"))
    elif var == "uv_intensity_mw_cm2":
        checks.append(_argcheck(result, "cr", max, 8.0, "argmax CR"))
        argmin = _argcheck(result, "v_sat", min, 6.0, "argmin V_sat")
        checks.append(argmin)
        rows = [r for r in result.rows if r.v_sat is not None]
        if len(rows) >= 2:
            low = min(rows, key=lambda r: r.v_sat)
            near = abs(low.v_sat - 9.9) <= 0.2
            checks.append(AnchorCheck("V_sat minimum ~ 9.9 V", near, f"minimum {low.v_sat:.3f} V"))
            after = [r.v_sat for r in rows if r.value > low.value]
            rising = all(b > a for a, b in zip([low.v_sat] + after, after))
            checks.append(AnchorCheck("V_sat rises after the minimum", rising,
                                      "values " + ", ".join(f"{v:.2f}" for v in after)))
    elif var == "cell_gap_um":
        values = sorted(e.value for e in dataset.entries)
        if len(values) < 2:
            checks.append(AnchorCheck("smallest gap chosen", True, "single gap", degenerate=True))
        else:
            ok = dataset.selected == values[0]
            checks.append(AnchorCheck(
                "smallest gap chosen", ok,
                f"tested {', '.join(_fmt_value(v) for v in values)} um; selected "
                f"{_fmt_value(dataset.selected) if dataset.selected is not None else 'none'}"))
    return checks


# -- charts ---------------------------------------------------------------------------

_LABELS = {
    "monomer": "Monomer",
    "concentration_pct": "HCM-009 concentration (%)",
    "uv_intensity_mw_cm2": "UV intensity (mW/cm$^2$)",
    "cell_gap_um": "Cell gap ($\\mu$m)",
}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "duoglass"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def emit_charts(result: SweepResult, curves=None, out_dir=".", stem: str = "sweep") -> list[Path]:
    """Write ``<stem>_bars.svg`` (CR and V_sat per entry) and, when curves are
    given as (label, CurveSamples) pairs, ``<stem>_curves.svg``."""
    if not result.rows:
        raise ValidationError("nothing to chart: empty sweep result")
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if curves:
        fig, ax = plt.subplots(figsize=(5, 3.6))
        for label, samples in curves:
            ax.plot(samples.voltage, samples.intensity, label=str(label), linewidth=1.2)
        ax.set_xlabel("Voltage (V)")
        ax.set_ylabel("Intensity (a.u.)")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        path = out_dir / f"{stem}_curves.svg"
        _save(fig, path)
        plt.close(fig)
        written.append(path)

    labels = [_fmt_value(r.value) for r in result.rows]
    x = np.arange(len(labels))
    cr = [r.cr if r.cr is not None else 0.0 for r in result.rows]
    vs = [r.v_sat if r.v_sat is not None else 0.0 for r in result.rows]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.bar(x - 0.2, cr, width=0.4, color="#3b6ea8", label="CR")
    ax.set_ylabel("Contrast ratio")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel(_LABELS[result.variable])
    ax2 = ax.twinx()
    ax2.bar(x + 0.2, vs, width=0.4, color="#d08c3a", label="V$_{sat}$")
    ax2.set_ylabel("Saturation voltage (V)")
    handles = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
    ax.legend(handles, ["CR", "V$_{sat}$"], fontsize=7, frameon=False, loc="upper left")
    fig.tight_layout()
    path = out_dir / f"{stem}_bars.svg"
    _save(fig, path)
    plt.close(fig)
    written.append(path)
    return written


def dataset_curves(dataset: StudyDataset) -> list:
    return [(e.value, e.data) for e in dataset.entries if isinstance(e.data, CurveSamples)]

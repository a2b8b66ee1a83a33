"""Run configuration files.

Grammar (UTF-8, line oriented)::

    # comment            ; comment
    [section]
    key = value

Unknown sections and keys are rejected. Every section is optional; a missing
key takes the default listed in ``describe_defaults()``. Lengths are in
micrometres except ``panel_width``/``panel_height`` (inches); times in
milliseconds; ``auto`` selects the derived value for the two optional
numbers (``mask.off_state_background``, ``stack.mask_loss``).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from . import panel as pg
from .electro import MATERIALS, MaterialResponse
from .errors import ConfigError, DuoglassError
from .panel import OpticalStack, PanelSpec, Stage
from .schedule import TimingConfig
from .simulate import LedConfig, MaskModel

_SECTION = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_.-]*)\s*\]$")
_PAIR = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


@dataclass
class Section:
    name: str
    line: int
    items: dict = field(default_factory=dict)  # key -> (raw value, line)


def parse_sections(text: str, repeatable: tuple = ()) -> list[Section]:
    sections: list[Section] = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1)
            if name in seen and name not in repeatable:
                raise ConfigError(f"section [{name}] appears twice", lineno)
            seen.add(name)
            sections.append(Section(name, lineno))
            continue
        m = _PAIR.match(line)
        if not m:
            raise ConfigError(f"syntax error: expected '[section]' or 'key = value', got {line!r}",
                              lineno)
        if not sections:
            raise ConfigError(f"key {m.group(1)!r} appears before any [section] header", lineno)
        key, value = m.group(1), m.group(2).strip()
        if value == "":
            raise ConfigError(f"key {key!r} has an empty value", lineno)
        items = sections[-1].items
        if key in items:
            raise ConfigError(f"key {key!r} repeated in [{sections[-1].name}]", lineno)
        items[key] = (value, lineno)
    return sections


# -- value conversion ------------------------------------------------------------

def to_float(key, value, line):
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}", line) from None
    if not math.isfinite(x):
        raise ConfigError(f"{key}: expected a finite number, got {value!r}", line)
    return x


def to_int(key, value, line):
    if not re.fullmatch(r"[+-]?[0-9]+", value):
        raise ConfigError(f"{key}: expected an integer, got {value!r}", line)
    return int(value)


def to_bool(key, value, line):
    low = value.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {value!r}", line)


def to_str(key, value, line):
    return value


def to_auto_float(key, value, line):
    return None if value.lower() == "auto" else to_float(key, value, line)


def _choice(*options):
    def conv(key, value, line):
        if value not in options:
            raise ConfigError(f"{key}: expected one of {', '.join(options)}, got {value!r}", line)
        return value
    return conv


SCHEMA = {
    "panel": {
        "preset": _choice(*pg.PRESETS),
        "stage": _choice(*(s.value for s in Stage)),
        "pixel_cols": to_int, "pixel_rows": to_int, "subpixels_per_pixel_side": to_int,
        "subpixel_pitch": to_float, "unit_cell_pitch": to_float,
        "stripe_active_width": to_float, "stripe_inactive_width": to_float,
        "cell_gap": to_float, "panel_width": to_float, "panel_height": to_float,
        "masked": to_bool, "mask_margin": to_float,
    },
    "material": {
        "name": to_str, "i_min": to_float, "i_max": to_float, "v_mid": to_float,
        "v_width": to_float, "tau_on": to_float, "tau_off": to_float,
    },
    "timing": {
        "frame_rate": to_float, "subframes_per_frame": to_int, "drive_frequency": to_float,
        "settle_margin": to_float, "side_order": _choice("AB", "BA"),
    },
    "led": {
        "flux_r": to_float, "flux_g": to_float, "flux_b": to_float,
        "coupling_efficiency": to_float, "edges": _choice("left", "right", "both"),
        "depletion": to_float,
    },
    "mask": {"blocking_efficiency": to_float, "off_state_background": to_auto_float},
    "stack": {"t_interfaces": to_float, "t_ito": to_float, "mask_loss": to_auto_float},
    "simulation": {"dt": to_float},
    "input": {"front": to_str, "back": to_str},
    "output": {"directory": to_str},
}

DEFAULT_PANEL = "stage3"
DEFAULT_MATERIAL = "HCM-009"
DEFAULT_DT = 0.05
DEFAULT_OUTPUT = "out"


@dataclass
class RunConfig:
    panel: PanelSpec = pg.PRESETS[DEFAULT_PANEL]
    panel_preset: str | None = DEFAULT_PANEL
    material: MaterialResponse = MATERIALS[DEFAULT_MATERIAL]
    timing: TimingConfig = TimingConfig()
    led: LedConfig = LedConfig()
    mask: MaskModel = MaskModel()
    stack: OpticalStack = OpticalStack()
    dt: float = DEFAULT_DT
    front: str | None = None
    back: str | None = None
    output_dir: str = DEFAULT_OUTPUT
    notices: list = field(default_factory=list, compare=False)


def describe_defaults() -> str:
    return serialize_config(RunConfig())


def _build(cls, base, values, line):
    try:
        return replace(base, **values) if values else base
    except DuoglassError as exc:
        raise ConfigError(str(exc), line) from None


def parse_config(text: str, require: tuple = ()) -> RunConfig:
    sections = {s.name: s for s in parse_sections(text)}
    for name, sec in sections.items():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]", sec.line)
        for key, (_, line) in sec.items.items():
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {key!r} in [{name}]", line)
    for name in require:
        if name not in sections:
            raise ConfigError(f"missing required section [{name}]")

    def values(name):
        sec = sections.get(name)
        if sec is None:
            return {}, None
        return ({k: SCHEMA[name][k](k, v, ln) for k, (v, ln) in sec.items.items()}, sec.line)

    cfg = RunConfig()
    defaulted = [n for n in SCHEMA if n not in sections and n not in ("input",)]

    vals, line = values("panel")
    preset_name = vals.pop("preset", None)
    base = pg.PRESETS[preset_name] if preset_name else pg.PRESETS[DEFAULT_PANEL]
    cfg.panel = _build(PanelSpec, base, vals, line)
    cfg.panel_preset = preset_name if preset_name else (DEFAULT_PANEL if not vals else None)
    if cfg.panel_preset and cfg.panel != pg.PRESETS[cfg.panel_preset]:
        cfg.panel_preset = None

    vals, line = values("material")
    name = vals.pop("name", DEFAULT_MATERIAL if not vals else None)
    known = next((m for k, m in MATERIALS.items() if name and k.lower() == name.lower()), None)
    if known is not None:
        cfg.material = _build(MaterialResponse, known, vals, line)
    else:
        missing = [k for k in ("i_min", "i_max", "v_mid", "v_width") if k not in vals]
        if missing:
            what = f"material {name!r} is not a preset" if name else "custom material"
            raise ConfigError(f"{what}; it needs {', '.join(missing)}", line)
        try:
            cfg.material = MaterialResponse(name or "custom", **vals)
        except DuoglassError as exc:
            raise ConfigError(str(exc), line) from None

    for sec_name, attr in (("timing", "timing"), ("led", "led"), ("mask", "mask"),
                           ("stack", "stack")):
        vals, line = values(sec_name)
        setattr(cfg, attr, _build(type(getattr(cfg, attr)), getattr(cfg, attr), vals, line))

    vals, line = values("simulation")
    cfg.dt = vals.get("dt", DEFAULT_DT)
    if not cfg.dt > 0:
        raise ConfigError("dt must be > 0", sections["simulation"].items["dt"][1])
    vals, _ = values("input")
    cfg.front, cfg.back = vals.get("front"), vals.get("back")
    vals, _ = values("output")
    cfg.output_dir = vals.get("directory", DEFAULT_OUTPUT)

    if defaulted:
        cfg.notices.append("defaults used for [" + "], [".join(defaulted) + "]")
    return cfg


def named_configs() -> list[str]:
    folder = resources.files("duoglass") / "data" / "configs"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


def load_config(source, require: tuple = ()) -> RunConfig:
    """Load a config file, a shipped named config (``stage2-asbuilt``) or a
    bare panel preset name (``stage1``..``stage3``, all else default)."""
    source = str(source)
    if source in pg.PRESETS and not Path(source).exists():
        return parse_config(f"[panel]\npreset = {source}\n", require=require)
    if source in named_configs() and not Path(source).exists():
        text = (resources.files("duoglass") / "data" / "configs" / f"{source}.cfg").read_text(
            encoding="utf-8")
        return parse_config(text, require=require)
    return parse_config(Path(source).read_text(encoding="utf-8"), require=require)


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):  # enums
        return value.value
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    out = []

    def section(name, pairs):
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in pairs)
        out.append("")

    panel_pairs = [(f.name, getattr(cfg.panel, f.name)) for f in fields(PanelSpec)]
    if cfg.panel_preset:
        panel_pairs.insert(0, ("preset", cfg.panel_preset))
    section("panel", panel_pairs)
    section("material", [(f.name, getattr(cfg.material, f.name)) for f in fields(MaterialResponse)
                         if getattr(cfg.material, f.name) is not None])
    for name, obj in (("timing", cfg.timing), ("led", cfg.led), ("mask", cfg.mask),
                      ("stack", cfg.stack)):
        section(name, [(f.name, getattr(obj, f.name)) for f in fields(obj)])
    section("simulation", [("dt", cfg.dt)])
    inputs = [(k, v) for k, v in (("front", cfg.front), ("back", cfg.back)) if v is not None]
    if inputs:
        section("input", inputs)
    section("output", [("directory", cfg.output_dir)])
    return "\n".join(out)

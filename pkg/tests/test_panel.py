import math

import pytest

from duoglass import panel as pg
from duoglass.errors import UnsupportedStageError, ValidationError
from oracles import raster_mask_fraction


def test_mask_loss_stage2_and_stage3():
    for name in ("stage2", "stage3"):
        assert pg.mask_loss_fraction(pg.preset(name)) == pytest.approx(0.18, abs=0.005)


def test_mask_loss_unmasked_is_zero():
    assert pg.mask_loss_fraction(pg.preset("stage1")) == 0.0


def test_mask_loss_matches_raster_oracle_on_two_by_two_cells():
    # p = 20, sub-pixel 4, margin 1: two 6x6 masks per 20x20 cell
    spec = pg.PanelSpec(stage="custom", pixel_cols=1, pixel_rows=1, subpixels_per_pixel_side=2,
                        subpixel_pitch=4.0, unit_cell_pitch=20.0, mask_margin=1.0,
                        panel_width=40 / pg.UM_PER_INCH, panel_height=40 / pg.UM_PER_INCH)
    oracle = raster_mask_fraction(20.0, 4.0, 1.0, 2, 2, step=0.25)
    assert oracle == pytest.approx(0.18, abs=1e-12)
    assert pg.mask_loss_fraction(spec) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("margin", [0.0, 3.0, 10.0, 30.0])
def test_mask_loss_matches_raster_oracle_with_margins(margin):
    spec = pg.PanelSpec(stage="custom", pixel_cols=2, pixel_rows=1, subpixels_per_pixel_side=1,
                        mask_margin=margin, panel_width=1.0, panel_height=1.0)
    oracle = raster_mask_fraction(300.0, 90.0, margin, 2, 1, step=0.5)
    assert pg.mask_loss_fraction(spec) == pytest.approx(oracle, abs=1e-9)


def test_union_area_overlapping_rectangles():
    assert pg.union_area([(0, 0, 2, 2), (1, 1, 3, 3)]) == 7.0
    assert pg.union_area([]) == 0.0


@pytest.mark.parametrize("k", [0.5, 1.7, 3.0])
def test_mask_loss_scale_invariant(k):
    spec = pg.PanelSpec(stage="custom", pixel_cols=3, pixel_rows=2, subpixels_per_pixel_side=4,
                        mask_margin=5.0, panel_width=1.0, panel_height=1.0)
    assert pg.mask_loss_fraction(spec.scaled(k)) == pytest.approx(pg.mask_loss_fraction(spec),
                                                                  rel=1e-12)


def test_transparency_default_product():
    t = pg.panel_transparency(pg.preset("stage3"))
    assert t == pytest.approx(0.92 * 0.862 * 0.82, rel=1e-12)
    assert t == pytest.approx(0.65, abs=0.02)


def test_transparency_lossless():
    stack = pg.OpticalStack(t_interfaces=1.0, t_ito=1.0)
    assert pg.panel_transparency(pg.preset("stage1"), stack) == 1.0


def test_transparency_monotone():
    spec = pg.preset("stage2")
    losses = [pg.panel_transparency(spec, pg.OpticalStack(mask_loss=x)) for x in (0, 0.1, 0.5)]
    assert losses == sorted(losses, reverse=True)
    ito = [pg.panel_transparency(spec, pg.OpticalStack(t_ito=x)) for x in (0.5, 0.8, 1.0)]
    assert ito == sorted(ito)


def test_stack_rejects_out_of_range():
    with pytest.raises(ValidationError):
        pg.OpticalStack(t_ito=0.0)
    with pytest.raises(ValidationError):
        pg.OpticalStack(t_interfaces=1.1)


def test_electrode_map_stage2():
    em = pg.electrode_map(pg.preset("stage2"))
    a, b = set(em.side_A.values()), set(em.side_B.values())
    assert len(a) == len(b) == 16
    assert not a & b
    assert not (a | b) & em.ground


def test_electrode_map_minimal():
    spec = pg.PanelSpec(stage="custom", pixel_cols=1, pixel_rows=1, subpixels_per_pixel_side=1,
                        panel_width=1.0, panel_height=1.0)
    assert len(pg.electrode_map(spec).addressing_ids) == 2


def test_electrode_map_stage3_unique():
    em = pg.electrode_map(pg.preset("stage3"))
    ids = em.addressing_ids
    assert len(ids) == 200
    seen = set()
    for e in ids:
        assert e not in seen
        seen.add(e)
    assert all(em.side_of(e) is pg.Side.A for e in em.side_A.values())
    assert all(em.side_of(e) is pg.Side.B for e in em.side_B.values())


def test_electrode_map_deterministic():
    spec = pg.preset("stage3")
    assert pg.electrode_map(spec).dumps() == pg.electrode_map(spec).dumps()


def test_electrode_map_rejects_stage1():
    with pytest.raises(UnsupportedStageError):
        pg.electrode_map(pg.preset("stage1"))


@pytest.mark.parametrize("name,count", [("stage2", 30752), ("stage3", 192200)])
def test_subpixel_counts(name, count):
    spec = pg.preset(name)
    table = pg.subpixel_table(spec)
    assert len(table) == count == spec.pixel_count * 2 * 31 ** 2
    w, h = spec.panel_width * pg.UM_PER_INCH, spec.panel_height * pg.UM_PER_INCH
    assert all(0 <= s.x_um <= w and 0 <= s.y_um <= h for s in table)


def test_subpixel_table_minimal():
    spec = pg.PanelSpec(stage="custom", pixel_cols=1, pixel_rows=1, subpixels_per_pixel_side=1,
                        panel_width=1.0, panel_height=1.0)
    table = pg.subpixel_table(spec)
    assert len(table) == 2
    assert {s.side for s in table} == {pg.Side.A, pg.Side.B}
    assert {s.facing for s in table} == {1, -1}


@pytest.mark.parametrize("bad", [
    dict(pixel_cols=0), dict(subpixel_pitch=-1.0), dict(subpixel_pitch=200.0),
    dict(panel_width=0.01), dict(mask_margin=-1.0), dict(cell_gap=math.nan),
])
def test_panel_validation(bad):
    with pytest.raises(ValidationError):
        pg.PanelSpec(**bad)


def test_unknown_preset():
    with pytest.raises(ValidationError):
        pg.preset("stage9")


def test_unit_cell_fractions_sum():
    uc = pg.unit_cell(pg.preset("stage3"))
    assert uc.frac_subpixel_A + uc.frac_subpixel_B + uc.frac_transparent == pytest.approx(1.0)
    assert uc.frac_mask == pytest.approx(0.18)

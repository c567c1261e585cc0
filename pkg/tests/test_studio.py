import numpy as np
import pytest

from corsynth.fem import SolverError
from corsynth.geometry import Scheme, UnitCellGeometry
from corsynth.studio import (
    BASE_DESIGNS, SweepResult, SweepRow, base_geometry, cor_vs_baw, litho_tuning_scan, pool_map,
    quadratic_argmax, sweep_electrode_thickness, synthesize_dimensions, thickness_sensitivity, tuning_range,
)

from conftest import NM, TFE2_OPT, UM


def _rows(values, kt2, f=None, spurious=()):
    f = f if f is not None else [1e9 * (1 + 0.01 * k) for k in range(len(values))]
    return [SweepRow(value=v, f_r=fi, kt2=None if k in spurious else y, mac=0.9, spurious=k in spurious)
            for k, (v, y, fi) in enumerate(zip(values, kt2, f))]


def test_quadratic_argmax_recovers_parabola_vertex():
    x = np.linspace(0, 10, 11)
    y = 2.0 - 0.03 * (x - 4.3) ** 2
    xm, ym = quadratic_argmax(_rows(x, y))
    assert xm == pytest.approx(4.3, abs=1e-9) and ym == pytest.approx(2.0, abs=1e-12)


def test_quadratic_argmax_edges_and_spurious():
    x = [1.0, 2.0, 3.0]
    assert quadratic_argmax(_rows(x, [3.0, 2.0, 1.0])) == (1.0, 3.0)
    assert quadratic_argmax(_rows(x, [3.0, 2.0, 1.0], spurious=(0, 1, 2))) == (None, None)
    # the spurious point is skipped, not treated as zero
    xm, _ = quadratic_argmax(_rows([1, 2, 3, 4], [1.0, 0.0, 1.5, 1.0], spurious=(1,)))
    assert 1 < xm < 4


def test_sweep_result_validation():
    with pytest.raises(ValueError):
        SweepResult(axis="W", values=[1.0, 2.0], rows=_rows([1.0], [1.0]))
    bad = [SweepRow(value=1.0, f_r=1e9, kt2=0.01, mac=0.3, spurious=True)]
    with pytest.raises(ValueError):
        SweepResult(axis="W", values=[1.0], rows=bad)


def test_tuning_range_rule():
    kt2 = [0.5, 0.85, 0.9, 1.0, 0.95, 0.7, 0.9]
    f = [10.0, 10.1, 10.2, 10.3, 10.4, 10.5, 10.6]
    res = SweepResult(axis="W", values=list(range(7)), rows=_rows(range(7), kt2, f))
    tr = tuning_range(res)
    # run stops at the first point below 80 %; the recovery at index 6 is not joined
    assert tr.values == [1, 2, 3, 4]
    # edges at the 0.8 crossings: 10.1 - 0.1 * (0.05 / 0.35) and 10.4 + 0.1 * (0.15 / 0.25)
    lo, hi = 10.1 - 0.1 / 7, 10.46
    assert (tr.f_min, tr.f_max) == pytest.approx((lo, hi), rel=1e-12)
    assert tr.fraction == pytest.approx((hi - lo) / (0.5 * (hi + lo)), rel=1e-12)
    assert tr.kt2_min == 0.85 and tr.kt2_max == 1.0


def test_tuning_range_no_interpolation_across_flags():
    kt2 = [0.5, 0.9, 1.0, 0.95, 0.7]
    f = [10.0, 10.1, 10.2, 10.3, 10.4]
    res = SweepResult(axis="W", values=list(range(5)), rows=_rows(range(5), kt2, f, spurious=(0,)))
    tr = tuning_range(res)
    # low side borders a flagged row and the grid edge: run endpoint kept
    assert tr.f_min == 10.1
    assert tr.f_max == pytest.approx(10.3 + 0.1 * 0.15 / 0.25)


def test_tuning_range_fixed_width_is_zero():
    res = SweepResult(axis="W", values=[1.0], rows=_rows([1.0], [0.01]))
    assert tuning_range(res).fraction == 0.0
    with pytest.raises(ValueError):
        tuning_range(SweepResult(axis="W", values=[1.0], rows=_rows([1.0], [0.01], spurious=(0,))))


def test_sweeps_need_electrodes():
    bare = UnitCellGeometry(W=UM, t_AlN=UM)
    with pytest.raises(ValueError):
        sweep_electrode_thickness(bare, [0.1 * UM])
    with pytest.raises(ValueError):
        litho_tuning_scan(bare, [UM])
    with pytest.raises(ValueError):
        litho_tuning_scan(TFE2_OPT, [])


def test_small_electrode_sweep_is_unimodal_with_pool():
    res = sweep_electrode_thickness(TFE2_OPT, [60 * NM, 110 * NM, 160 * NM], nx=16, nz=16, map_fn=pool_map(2))
    k = [r.kt2 for r in res.rows]
    assert not any(r.spurious for r in res.rows)
    assert k[1] > k[0] and k[1] > k[2]
    assert 60 * NM < res.argmax < 160 * NM


def test_synthesis_identity_at_base_frequency():
    for scheme, d in BASE_DESIGNS.items():
        rec = synthesize_dimensions(d["f_base"], scheme, verify=False)
        assert (rec.W, rec.t_AlN, rec.t_Al) == pytest.approx((d["W"], d["t_AlN"], d["t_Al"]), rel=1e-14)
        assert rec.alpha == d["alpha"]


def test_synthesis_constant_products():
    recs = [synthesize_dimensions(f, "tfe2", verify=False) for f in (12e9, 24e9, 37e9, 55e9)]
    for attr in ("W", "t_AlN", "t_Al"):
        p = [getattr(r, attr) * r.f_target for r in recs]
        assert np.ptp(p) <= 1e-12 * np.mean(p)
    assert {r.alpha for r in recs} == {0.5}


@pytest.mark.parametrize("f", [5e9, 61e9])
def test_synthesis_validity_window(f):
    with pytest.raises(ValueError):
        synthesize_dimensions(f, "lfe", verify=False)


def test_synthesis_rejects_bad_inputs():
    with pytest.raises(ValueError):
        synthesize_dimensions(24e9, "tfe2", calibration="magic", verify=False)
    with pytest.raises(ValueError):
        synthesize_dimensions(24e9, "tfe3", verify=False)
    with pytest.raises(Exception):
        base_geometry(Scheme.TFE1)


@pytest.mark.parametrize("scheme", ["lfe", "tfe2"])
def test_fem_calibration_on_target(scheme):
    rec = synthesize_dimensions(30e9, scheme, calibration="fem")
    assert abs(rec.frequency_error) <= 0.005 and rec.mac > 0.6
    assert rec.to_dict()["calibration"] == "fem"


def test_tfe2_table_calibration_on_target():
    rec = synthesize_dimensions(30e9, "tfe2")
    assert abs(rec.frequency_error) <= 0.005


def test_cor_vs_baw_ratio():
    rows = cor_vs_baw([0.5 * UM, 1.0 * UM], nx=16, nz=16)
    # both frequencies scale as 1/t for the W = t cell
    assert rows[0].ratio == pytest.approx(rows[1].ratio, rel=1e-8)
    assert rows[0].f_COR == pytest.approx(2 * rows[1].f_COR, rel=1e-8)
    assert rows[0].ratio > 1.5


def test_thickness_sensitivity_baw_slope():
    tab = thickness_sensitivity(UnitCellGeometry(W=UM, t_AlN=UM), delta_list=(-0.02, 0.02), nx=16, nz=16)
    # [DERIVED] laterally uniform thickness mode: f ~ 1/t exactly, so the
    # central difference is (1/1.02 - 1/0.98)/0.04
    assert tab.slope_BAW[0.02] == pytest.approx((1 / 1.02 - 1 / 0.98) / 0.04, rel=1e-8)
    assert -1 < tab.slope_COR[0.02] < 0
    assert [r.dt for r in tab.rows] == [-0.02, 0.0, 0.02]
    with pytest.raises(ValueError):
        thickness_sensitivity(UnitCellGeometry(W=UM, t_AlN=UM), delta_list=(0.2,))
    with pytest.raises(ValueError):
        thickness_sensitivity(TFE2_OPT)


def test_identification_failure_is_flagged(monkeypatch):
    import corsynth.studio as studio

    def boom(sys):
        raise SolverError("no partner")

    monkeypatch.setattr(studio, "extract_kt2", boom)
    row = studio.kt2_point(TFE2_OPT, nx=8, nz=8, value=1.0)
    assert row.spurious and row.kt2 is None and "partner" in row.note

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corsynth.fem import FieldSolution
from corsynth.modal import (
    MAC_SPURIOUS, QBudget, ThicknessModeShape, analytic_modeshape, coupling_from_pair, dispersion_scan,
    energy_integral_kt2, extract_kt2, find_com, find_thickness_mode, identify_com, modal_assurance, q_total,
)

from conftest import BARE_1UM, UM


def _synthetic(mesh, shape, shift=0.0):
    ux, uz = shape(mesh.nodes[:, 0], mesh.nodes[:, 1], shift=shift)
    return FieldSolution(frequency=1.0, u=np.column_stack([ux, uz]), phi=np.zeros(len(ux)), charges={},
                         state="synthetic", mesh=mesh)


def test_analytic_wavenumbers():
    s = analytic_modeshape(BARE_1UM)
    assert s.beta_x == pytest.approx(math.pi / UM)
    assert s.beta_zx == pytest.approx(3 * math.pi / UM)
    assert s.beta_zz == pytest.approx(2 * math.pi / UM)
    with pytest.raises(ValueError):
        analytic_modeshape(type("G", (), {"W": 0.0, "t_AlN": 1.0})())


def test_mac_of_shape_with_itself_is_one(bare_sys):
    shape = analytic_modeshape(BARE_1UM)
    sol = _synthetic(bare_sys.mesh, shape)
    assert modal_assurance(sol, shape) == pytest.approx(1.0, abs=1e-12)
    # bare cell: any lateral phase is equivalent
    shifted = _synthetic(bare_sys.mesh, shape, shift=0.3 * UM)
    assert modal_assurance(shifted, shape) == pytest.approx(1.0, abs=1e-12)
    assert modal_assurance(shifted, shape, phase_invariant=False) < 0.9


def test_thickness_mode_is_not_com(bare_sys):
    baw = find_thickness_mode(bare_sys)
    assert modal_assurance(baw.mode, analytic_modeshape(BARE_1UM)) < 0.3
    com, _ = find_com(bare_sys, "bare")
    assert modal_assurance(com.mode, ThicknessModeShape(UM)) < 0.3


def test_com_identified_at_one_micron(bare_sys):
    m, modes = find_com(bare_sys, "bare")
    assert not m.spurious and m.mac > 0.85
    assert m.mode.frequency == pytest.approx(9.771e9, rel=0.03)
    assert len(modes) == 20
    assert all(a.frequency <= b.frequency for a, b in zip(modes, modes[1:]))


def test_identify_flags_spurious(bare_sys):
    baw = find_thickness_mode(bare_sys)
    m = identify_com([baw.mode], analytic_modeshape(BARE_1UM))
    assert m.spurious and m.mac < MAC_SPURIOUS


def test_extract_requires_electrodes(bare_sys):
    with pytest.raises(ValueError):
        extract_kt2(bare_sys)


def test_extract_and_energy_estimates(tfe2_sys):
    rep = extract_kt2(tfe2_sys)
    assert not rep.spurious and rep.f_high > rep.f_low
    assert rep.kt2 == pytest.approx(coupling_from_pair(rep.f_low, rep.f_high))
    m, _ = find_com(tfe2_sys, "short")
    est = energy_integral_kt2(tfe2_sys, m.mode)
    assert est.Um > 0 and est.Ue > 0
    assert abs(est.kt2 / rep.kt2 - 1) < 0.15


def test_dispersion_scan_validates_axis():
    with pytest.raises(ValueError):
        dispersion_scan(UM, [1.2 * UM, 1.0 * UM])
    with pytest.raises(ValueError):
        dispersion_scan(UM, [])


def test_dispersion_point_nonnegative():
    tab = dispersion_scan(UM, [1.0 * UM], nx=16, nz=16)
    (row,) = tab.rows
    assert not row.spurious and row.K2 > 0 and row.f_o > row.f_m
    assert tab.peak is row and tab.columns()[0]["peak"]


def test_qbudget_combination():
    assert q_total(QBudget(q_material=1100, q_electrical=2357)) == pytest.approx(750, abs=1)
    assert q_total(QBudget(q_anchor=1000)) == 1000
    with pytest.raises(ValueError):
        q_total(QBudget())
    with pytest.raises(ValueError):
        q_total(QBudget(q_anchor=1000, q_interface=-5))


@given(st.lists(st.floats(10, 1e6), min_size=1, max_size=6))
def test_qbudget_below_smallest_channel(qs):
    names = ["q_anchor", "q_interface", "q_material", "q_electrical", "q_dielectric", "q_intrinsic"]
    b = QBudget(**dict(zip(names, qs)))
    q = q_total(b)
    assert q <= min(qs) * (1 + 1e-12)
    assert q >= min(qs) / len(qs) * (1 - 1e-12)


@given(st.floats(1e6, 1e11), st.floats(0.0, 0.2))
def test_coupling_pair_round_trip(f_low, rel):
    f_high = f_low * (1 + rel)
    k = coupling_from_pair(f_low, f_high)
    assert k >= 0
    assert f_low * math.sqrt(1 + 8 * k / math.pi ** 2) == pytest.approx(f_high, rel=1e-12)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corsynth.mbvd import (
    PI2_8, MbvdModel, kt2_from_resonances, loaded_q_3db, mbvd_from_physics, resonances_from_admittance,
    size_for_termination, termination_impedance, write_touchstone_1port,
)


def test_element_identities():
    m = MbvdModel(f_s=24e9, kt2=0.019, Q=750, C0=100e-15)
    w = 2 * math.pi * m.f_s
    assert w ** 2 * m.Lm * m.Cm == pytest.approx(1.0, rel=1e-12)
    assert w * m.Lm / m.Rm == pytest.approx(750, rel=1e-12)
    assert kt2_from_resonances(m.f_s, m.f_p) == pytest.approx(0.019, rel=1e-12)


def test_admittance_against_impedance_sum():
    m = MbvdModel(f_s=10e9, kt2=0.01, Q=800, C0=200e-15, Rs=1.5)
    f = np.linspace(9.5e9, 10.5e9, 31)
    w = 2 * np.pi * f
    zm = m.Rm + 1j * (w * m.Lm - 1 / (w * m.Cm))
    zc = 1 / (1j * w * m.C0)
    z = m.Rs + zm * zc / (zm + zc)
    assert np.allclose(m.admittance(f), 1 / z, rtol=1e-12)


def test_termination_sizing():
    # 320 fF at 8.8 GHz terminates close to 56.5 ohm
    assert termination_impedance(8.8e9, 320e-15) == pytest.approx(56.5, abs=1.0)
    c0 = size_for_termination(24e9, 50.0)
    assert termination_impedance(24e9, c0) == pytest.approx(50.0, rel=1e-12)
    with pytest.raises(ValueError):
        size_for_termination(-1, 50)


@pytest.mark.parametrize("kw", [
    dict(f_s=0, kt2=0.01, Q=100, C0=1e-13),
    dict(f_s=1e9, kt2=0, Q=100, C0=1e-13),
    dict(f_s=1e9, kt2=0.01, Q=-1, C0=1e-13),
    dict(f_s=1e9, kt2=0.01, Q=100, C0=0),
    dict(f_s=1e9, kt2=1.3, Q=100, C0=1e-13),
    dict(f_s=1e9, kt2=0.01, Q=100, C0=1e-13, Rs=-1),
])
def test_invalid_models(kw):
    with pytest.raises(ValueError):
        MbvdModel(**kw)


def test_admittance_rejects_nonpositive_frequency():
    with pytest.raises(ValueError):
        mbvd_from_physics(1e9, 0.01, 100, 1e-13).admittance([0.0, 1e9])


def test_resonances_recovered():
    m = MbvdModel(f_s=24e9, kt2=0.019, Q=5000, C0=100e-15)
    f = np.linspace(23.8e9, 24.6e9, 801)
    fs, fp = resonances_from_admittance(f, m.admittance(f), model_fn=lambda x: m.admittance(x))
    assert fs == pytest.approx(m.f_s, rel=1e-5)
    assert fp == pytest.approx(m.f_p, rel=1e-5)
    assert kt2_from_resonances(fs, fp) == pytest.approx(0.019, rel=5e-3)


def test_loaded_q_from_conductance():
    m = MbvdModel(f_s=10e9, kt2=0.01, Q=600, C0=100e-15)
    f = np.linspace(10e9 * (1 - 4 / 600), 10e9 * (1 + 4 / 600), 2001)
    assert loaded_q_3db(f, m.admittance(f)) == pytest.approx(600, rel=1e-3)
    with pytest.raises(ValueError):
        loaded_q_3db(f[990:1010], m.admittance(f[990:1010]))


def test_outputs(tmp_path):
    m = MbvdModel(f_s=24e9, kt2=0.019, Q=750, C0=100e-15)
    m.dump_json(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["kt2"] == 0.019 and d["f_p"] == pytest.approx(m.f_p)
    f = np.array([23e9, 24e9])
    y = m.admittance(f)
    write_touchstone_1port(tmp_path / "m.s1p", f, y)
    lines = (tmp_path / "m.s1p").read_text().splitlines()
    assert lines[1] == "# HZ Y RI R 50"
    vals = np.array([[float(x) for x in ln.split()] for ln in lines[2:]])
    assert np.allclose(vals[:, 1] + 1j * vals[:, 2], y * 50, rtol=1e-11)


def test_scaled_frequency_keeps_ratios():
    m = MbvdModel(f_s=24e9, kt2=0.019, Q=750, C0=100e-15)
    m2 = m.scaled_frequency(30e9)
    assert m2.f_p / m2.f_s == pytest.approx(m.f_p / m.f_s, rel=1e-14)
    assert m2.Cm == m.Cm


@settings(max_examples=60)
@given(st.floats(1e8, 1e11), st.floats(1e-4, 0.2), st.floats(10, 1e5), st.floats(1e-15, 1e-11))
def test_kt2_round_trip(f_s, kt2, Q, C0):
    m = MbvdModel(f_s=f_s, kt2=kt2, Q=Q, C0=C0)
    assert kt2_from_resonances(m.f_s, m.f_p) == pytest.approx(kt2, rel=1e-9)
    assert m.Cm / m.C0 == pytest.approx(kt2 / PI2_8, rel=1e-12)

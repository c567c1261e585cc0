import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corsynth.filters import (
    FilterError, FilterNetwork, bw_il_scaling_table, evaluate_sparams, il_grid, synthesize_bank,
    synthesize_ladder, write_touchstone_2port,
)
from corsynth.mbvd import MbvdModel


def _nodal_s(net: FilterNetwork, f: np.ndarray):
    """[DERIVED] independent oracle: nodal analysis of the doubly terminated ladder.

    Node 0 is the input port, node k follows the k-th series branch and
    carries the k-th shunt branch. A Norton source (Vs/Z0 into Z0) drives
    node 0 and Z0 loads the last node.
    """
    n = net.order + 1
    s11, s21 = [], []
    for fk in f:
        ys = net.series.admittance([fk])[0]
        yp = net.shunt.admittance([fk])[0]
        Y = np.zeros((n, n), dtype=complex)
        for k in range(1, n):
            Y[k - 1, k - 1] += ys
            Y[k, k] += ys + yp
            Y[k - 1, k] -= ys
            Y[k, k - 1] -= ys
        Y[0, 0] += 1 / net.Z0
        Y[-1, -1] += 1 / net.Z0
        rhs = np.zeros(n, dtype=complex)
        rhs[0] = 1.0 / net.Z0  # Vs = 1
        v = np.linalg.solve(Y, rhs)
        s11.append(2 * v[0] - 1)
        s21.append(2 * v[-1])
    return np.array(s11), np.array(s21)


@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_sparams_match_nodal_analysis(order):
    net = synthesize_ladder(24e9, 0.019, 750, order=order, shunt_c0_ratio=1.3)
    f = np.linspace(23.3e9, 24.7e9, 57)
    s11, s12, s21, s22 = net.sparams(f)
    o11, o21 = _nodal_s(net, f)
    assert np.allclose(s21, o21, rtol=1e-9, atol=1e-12)
    assert np.allclose(s11, o11, rtol=1e-9, atol=1e-12)


def test_passive_and_reciprocal():
    net = synthesize_ladder(24e9, 0.019, 750)
    f = np.linspace(22e9, 26e9, 801)
    s11, s12, s21, s22 = net.sparams(f)
    assert np.max(np.abs(s21 - s12)) <= 1e-9
    assert np.max(np.abs(s11) ** 2 + np.abs(s21) ** 2) <= 1 + 1e-9
    assert np.max(np.abs(s22) ** 2 + np.abs(s12) ** 2) <= 1 + 1e-9


def test_lossless_network_conserves_power():
    s = MbvdModel(f_s=1e9, kt2=0.01, Q=1e12, C0=1e-12)
    net = FilterNetwork(series=s, shunt=s.scaled_frequency(0.99e9), order=2)
    s11, _, s21, _ = net.sparams(np.linspace(0.95e9, 1.05e9, 101))
    assert np.allclose(np.abs(s11) ** 2 + np.abs(s21) ** 2, 1.0, atol=1e-6)


def test_shunt_antiresonance_on_series_resonance():
    net = synthesize_ladder(24e9, 0.019, 750)
    assert net.shunt.f_p == pytest.approx(net.series.f_s, rel=1e-14)
    assert 1 / (2 * np.pi * 24e9 * net.series.C0) == pytest.approx(50.0)


def test_bandwidth_proportional_to_kt2_when_lossless():
    fbw = [evaluate_sparams(synthesize_ladder(24e9, k, 1e6)).fbw / k for k in (0.005, 0.01, 0.02)]
    assert max(fbw) / min(fbw) < 1.02


def test_loss_shrinks_band_and_raises_il():
    lossy = evaluate_sparams(synthesize_ladder(24e9, 0.019, 500))
    better = evaluate_sparams(synthesize_ladder(24e9, 0.019, 750))
    assert better.il_min < lossy.il_min
    assert better.bw_3db >= lossy.bw_3db * 0.99


def test_fractional_bandwidth_constant_with_frequency():
    rows = bw_il_scaling_table(np.arange(24e9, 41e9, 4e9), 0.019, 750)
    fbw = [r["fbw"] for r in rows]
    il = [r["il"] for r in rows]
    assert np.ptp(fbw) <= 1e-9 * np.mean(fbw)
    assert np.ptp(il) <= 1e-9
    with pytest.raises(FilterError):
        bw_il_scaling_table([30e9, 24e9], 0.019, 750)


def test_il_monotone_in_kt2_and_q():
    g = il_grid([0.008, 0.012, 0.019], [500, 750, 1100])
    assert np.all(np.diff(g, axis=0) < 0)
    assert np.all(np.diff(g, axis=1) < 0)


def test_report_band_edges():
    rep = evaluate_sparams(synthesize_ladder(24e9, 0.019, 750))
    assert rep.f_lo < 24e9 < rep.f_hi
    il_edge = -20 * np.log10(abs(synthesize_ladder(24e9, 0.019, 750).sparams([rep.f_lo])[2][0]))
    assert il_edge == pytest.approx(rep.il_min + 3.0, abs=0.05)
    assert rep.rejection > rep.il_min + 10


def test_no_passband_when_too_lossy():
    # weak coupling at low Q: the ladder never gets 3 dB above its floor
    with pytest.raises(FilterError, match="bracketed"):
        evaluate_sparams(synthesize_ladder(1e9, 0.0078125, 100))


def test_grid_errors():
    net = synthesize_ladder(24e9, 0.019, 750)
    with pytest.raises(FilterError, match="bracketed"):
        evaluate_sparams(net, np.linspace(23.95e9, 24.05e9, 201))
    with pytest.raises(FilterError, match="coarse"):
        evaluate_sparams(net, np.linspace(20e9, 28e9, 101))


@pytest.mark.parametrize("kw", [dict(kt2=0), dict(kt2=2.0), dict(Q=0), dict(order=0), dict(shunt_c0_ratio=0)])
def test_invalid_synthesis(kw):
    args = dict(f_center=24e9, kt2=0.019, Q=750)
    args.update(kw)
    with pytest.raises((FilterError, ValueError)):
        synthesize_ladder(**args)


def test_bank_of_one_is_single_filter():
    bank = synthesize_bank(23.8e9, 1, 0.019, 750)
    assert bank.members[0].f_lo == pytest.approx(23.8e9, rel=1e-6)
    single = evaluate_sparams(bank.networks[0])
    assert bank.aggregated_bw == pytest.approx(single.bw_3db, rel=1e-12)
    assert bank.crossover_db == []


def test_bank_is_contiguous():
    bank = synthesize_bank(23.8e9, 4, 0.019, 750)
    for a, b in zip(bank.members, bank.members[1:]):
        assert b.f_lo == pytest.approx(a.f_hi, rel=1e-6)
    lo, hi = bank.span
    assert hi - lo == pytest.approx(bank.aggregated_bw, rel=1e-5)
    assert all(x > 0 for x in bank.crossover_db)


def test_touchstone(tmp_path):
    rep = evaluate_sparams(synthesize_ladder(24e9, 0.019, 750), np.linspace(23e9, 25e9, 401))
    write_touchstone_2port(tmp_path / "f.s2p", rep)
    lines = (tmp_path / "f.s2p").read_text().splitlines()
    assert lines[1] == "# HZ S DB R 50" and len(lines) == 403
    row = np.array(lines[202].split(), dtype=float)
    k = 200
    assert row[0] == pytest.approx(rep.s_grid["f"][k])
    assert row[3] == pytest.approx(20 * np.log10(abs(rep.s_grid["S21"][k])), abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e9, 1e11), st.floats(0.005, 0.05), st.floats(500, 5000))
def test_scale_invariance(f0, kt2, q):
    a = evaluate_sparams(synthesize_ladder(f0, kt2, q))
    b = evaluate_sparams(synthesize_ladder(2 * f0, kt2, q))
    assert b.fbw == pytest.approx(a.fbw, rel=1e-8)
    assert b.il_min == pytest.approx(a.il_min, abs=1e-8)

"""Ladder filters and contiguous filter banks built from MBVD resonators."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mbvd import PI2_8, MbvdModel, admittance, size_for_termination


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class FilterNetwork:
    """``order`` L-sections, each a series resonator followed by a shunt one."""

    series: MbvdModel
    shunt: MbvdModel
    order: int = 3
    Z0: float = 50.0
    f_center: float | None = None

    def __post_init__(self):
        if self.order < 1:
            raise FilterError("order must be >= 1")
        if self.Z0 <= 0:
            raise FilterError("Z0 must be positive")

    def abcd(self, f) -> np.ndarray:
        """Cascade ABCD matrices, shape (len(f), 2, 2)."""
        f = np.atleast_1d(np.asarray(f, dtype=float))
        zs = 1.0 / admittance(self.series, f)
        yp = admittance(self.shunt, f)
        one = np.ones_like(zs)
        sec = np.empty((len(f), 2, 2), dtype=complex)
        # [[1, Zs], [0, 1]] @ [[1, 0], [Yp, 1]]
        sec[:, 0, 0] = one + zs * yp
        sec[:, 0, 1] = zs
        sec[:, 1, 0] = yp
        sec[:, 1, 1] = one
        out = sec.copy()
        for _ in range(self.order - 1):
            out = out @ sec
        return out

    def sparams(self, f) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return abcd_to_s(self.abcd(f), self.Z0)

    @property
    def notch_span(self) -> tuple[float, float]:
        """Shunt series resonance and series parallel resonance."""
        return self.shunt.f_s, self.series.f_p


def abcd_to_s(m: np.ndarray, z0: float):
    A, B, C, D = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    den = A + B / z0 + C * z0 + D
    s11 = (A + B / z0 - C * z0 - D) / den
    s21 = 2.0 / den
    s12 = 2.0 * (A * D - B * C) / den
    s22 = (-A + B / z0 - C * z0 + D) / den
    return s11, s12, s21, s22


def synthesize_ladder(f_center: float, kt2: float, Q: float, Z0: float = 50.0, order: int = 3,
                      shunt_c0_ratio: float = 1.0) -> FilterNetwork:
    """Series resonators at f_center, shunt resonators detuned so their f_p lands there.

    Series C0 gives a reactance of Z0 at f_center; the shunt static capacitance
    is ``shunt_c0_ratio`` times that (equal resonator area by default).
    """
    if not 0 < kt2 < PI2_8:
        raise FilterError("kt2 must lie in (0, pi^2/8)")
    if Q <= 0 or f_center <= 0:
        raise FilterError("Q and f_center must be positive")
    if shunt_c0_ratio <= 0:
        raise FilterError("shunt_c0_ratio must be positive")
    c0 = size_for_termination(f_center, Z0)
    series = MbvdModel(f_s=f_center, kt2=kt2, Q=Q, C0=c0)
    ratio = series.f_p / series.f_s
    shunt = MbvdModel(f_s=f_center / ratio, kt2=kt2, Q=Q, C0=c0 * shunt_c0_ratio)
    return FilterNetwork(series=series, shunt=shunt, order=order, Z0=Z0, f_center=f_center)


@dataclass
class FilterReport:
    f_center: float
    bw_3db: float
    il_min: float
    rejection: float
    f_lo: float
    f_hi: float
    s_grid: dict = field(repr=False, default_factory=dict)

    @property
    def fbw(self) -> float:
        return self.bw_3db / self.f_center

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in ("f_center", "bw_3db", "il_min", "rejection", "f_lo", "f_hi", "fbw")}

    def dump_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def default_grid(net: FilterNetwork, n: int = 4001) -> np.ndarray:
    lo, hi = net.notch_span
    # low-Q resonators smear the skirts over roughly f/Q beyond the notches
    pad = 1.5 * (hi - lo) + 3 * hi / min(net.series.Q, net.shunt.Q)
    return np.linspace(lo - pad, hi + pad, n)


def _crossing(f, y, i, j, level):
    return f[i] + (level - y[i]) * (f[j] - f[i]) / (y[j] - y[i])


def evaluate_sparams(net: FilterNetwork, f_grid=None, guard: float = 1.0) -> FilterReport:
    """S-parameters on ``f_grid`` plus 3-dB band metrics.

    The band is the contiguous region within 3 dB of the minimum insertion
    loss; rejection is the smallest loss found more than ``guard`` bandwidths
    beyond either band edge.
    """
    f = default_grid(net) if f_grid is None else np.asarray(f_grid, dtype=float)
    s11, s12, s21, s22 = net.sparams(f)
    il = -20 * np.log10(np.maximum(np.abs(s21), 1e-300))
    i = int(np.argmin(il))
    level = il[i] + 3.0
    lo = i
    while lo > 0 and il[lo - 1] <= level:
        lo -= 1
    hi = i
    while hi < len(f) - 1 and il[hi + 1] <= level:
        hi += 1
    if lo == 0 or hi == len(f) - 1:
        raise FilterError("band edges not bracketed by the frequency grid")
    f_lo = _crossing(f, il, lo - 1, lo, level)
    f_hi = _crossing(f, il, hi, hi + 1, level)
    bw = f_hi - f_lo
    if hi - lo < 10:
        raise FilterError("grid too coarse: fewer than 10 points across the passband")
    out = (f < f_lo - guard * bw) | (f > f_hi + guard * bw)
    rejection = float(il[out].min()) if out.any() else float("nan")
    fc = 0.5 * (f_lo + f_hi)
    return FilterReport(
        f_center=fc, bw_3db=bw, il_min=float(il[i]), rejection=rejection, f_lo=f_lo, f_hi=f_hi,
        s_grid={"f": f, "S11": s11, "S21": s21, "S12": s12, "S22": s22},
    )


@dataclass
class BankReport:
    members: list[FilterReport]
    networks: list[FilterNetwork]
    crossover_db: list[float]

    @property
    def aggregated_bw(self) -> float:
        return float(sum(r.bw_3db for r in self.members))

    @property
    def span(self) -> tuple[float, float]:
        return self.members[0].f_lo, self.members[-1].f_hi


def synthesize_bank(f_start: float, n_filters: int, kt2: float, Q: float, Z0: float = 50.0,
                    order: int = 3, shunt_c0_ratio: float = 1.0) -> BankReport:
    """Contiguous filters: each member's lower 3-dB edge sits on the previous upper edge.

    ``f_start`` is the lower band edge of the first member.
    """
    if n_filters < 1:
        raise FilterError("n_filters must be >= 1")
    # fractional geometry is scale invariant, so one probe gives edge offsets
    probe = evaluate_sparams(synthesize_ladder(1.0, kt2, Q, 1.0, order, shunt_c0_ratio))
    nets, reps = [], []
    edge = f_start
    for _ in range(n_filters):
        fc = edge / probe.f_lo
        net = synthesize_ladder(fc, kt2, Q, Z0, order, shunt_c0_ratio)
        rep = evaluate_sparams(net)
        nets.append(net)
        reps.append(rep)
        edge = rep.f_hi
    cross = []
    for a, b in zip(nets[:-1], nets[1:]):
        fx = np.array([0.5 * (evaluate_sparams(a).f_hi + evaluate_sparams(b).f_lo)])
        cross.append(float(-20 * np.log10(abs(a.sparams(fx)[2][0]))))
    return BankReport(members=reps, networks=nets, crossover_db=cross)


def bw_il_scaling_table(f_list, kt2: float, Q: float, Z0: float = 50.0, order: int = 3,
                        shunt_c0_ratio: float = 1.0) -> list[dict]:
    f_list = [float(f) for f in f_list]
    if any(b <= a for a, b in zip(f_list, f_list[1:])):
        raise FilterError("f_list must be ascending")
    rows = []
    for f in f_list:
        rep = evaluate_sparams(synthesize_ladder(f, kt2, Q, Z0, order, shunt_c0_ratio))
        rows.append({"f": f, "bw": rep.bw_3db, "il": rep.il_min, "fbw": rep.bw_3db / f})
    return rows


def il_grid(kt2_list, q_list, f_center: float = 24e9, **kw) -> np.ndarray:
    """Minimum insertion loss over a (kt2, Q) grid."""
    out = np.empty((len(kt2_list), len(q_list)))
    for i, k in enumerate(kt2_list):
        for j, q in enumerate(q_list):
            out[i, j] = evaluate_sparams(synthesize_ladder(f_center, k, q, **kw)).il_min
    return out


def write_touchstone_2port(path: str | Path, report: FilterReport, z0: float = 50.0) -> None:
    """Two-port file, magnitude (dB) / angle (deg), standard S11 S21 S12 S22 order."""
    g = report.s_grid
    lines = ["! ladder filter S-parameters", f"# HZ S DB R {z0:g}"]
    for k, fk in enumerate(g["f"]):
        vals = []
        for key in ("S11", "S21", "S12", "S22"):
            s = g[key][k]
            vals += [20 * math.log10(max(abs(s), 1e-300)), math.degrees(math.atan2(s.imag, s.real))]
        lines.append(f"{fk:.9e} " + " ".join(f"{v:.9e}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")

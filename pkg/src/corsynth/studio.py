"""Design sweeps: electrode thickness, lithographic tuning, dimension scaling,
COR versus BAW scaling and thickness sensitivity."""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fem import ElectricalState, SolverError
from .geometry import Scheme, UnitCellGeometry
from .modal import (
    DEFAULT_NX, DEFAULT_NZ, build_system, extract_kt2, find_com, find_thickness_mode,
)

log = logging.getLogger(__name__)

F_MIN, F_MAX = 6e9, 60e9


@dataclass
class SweepRow:
    value: float
    f_r: float
    kt2: float | None
    mac: float
    spurious: bool
    note: str = ""


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    rows: list[SweepRow]
    argmax: float | None = None
    peak: float | None = None

    def __post_init__(self):
        if len(self.values) != len(self.rows):
            raise ValueError("rows must align with axis values")
        for r in self.rows:
            if r.spurious and r.kt2 is not None:
                raise ValueError("spurious rows carry no kt2")

    def good(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.spurious]

    def columns(self) -> list[dict]:
        return [{self.axis: r.value, "f_r": r.f_r, "kt2": r.kt2, "mac": r.mac,
                 "spurious": r.spurious, "note": r.note} for r in self.rows]


def quadratic_argmax(rows: Sequence[SweepRow]) -> tuple[float, float] | tuple[None, None]:
    """Peak position and value through the best non-spurious point and its two neighbours."""
    good = [r for r in rows if not r.spurious]
    if not good:
        return None, None
    i = max(range(len(good)), key=lambda k: good[k].kt2)
    if i == 0 or i == len(good) - 1 or len(good) < 3:
        return good[i].value, good[i].kt2
    x = np.array([good[i - 1].value, good[i].value, good[i + 1].value])
    y = np.array([good[i - 1].kt2, good[i].kt2, good[i + 1].kt2])
    a, b, c = np.polyfit(x, y, 2)
    if a >= 0:
        return good[i].value, good[i].kt2
    xm = float(np.clip(-b / (2 * a), x[0], x[2]))
    return xm, float(np.polyval([a, b, c], xm))


def kt2_point(g: UnitCellGeometry, materials=None, nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ,
              value: float = float("nan")) -> SweepRow:
    sys = build_system(g, materials, nx, nz)
    try:
        rep = extract_kt2(sys)
    except SolverError as exc:
        # no admissible open-circuit partner: cannot be identified, flag it
        log.warning("flagging point %g: %s", value, exc)
        return SweepRow(value=value, f_r=float("nan"), kt2=None, mac=0.0, spurious=True, note=str(exc))
    return SweepRow(value=value, f_r=rep.f_low, kt2=rep.kt2, mac=rep.mac, spurious=rep.spurious)


def _t_al_job(t_Al, base, materials, nx, nz):
    return kt2_point(base.with_(t_Al=t_Al), materials, nx, nz, value=t_Al)


def _w_job(W, base, materials, nx, nz):
    return kt2_point(base.with_(W=W), materials, nx, nz, value=W)


def _sweep(axis, values, job, map_fn) -> SweepResult:
    values = [float(v) for v in values]
    if not values:
        raise ValueError("empty sweep")
    rows = list(map_fn(job, values))
    res = SweepResult(axis=axis, values=values, rows=rows)
    res.argmax, res.peak = quadratic_argmax(rows)
    return res


def sweep_electrode_thickness(base: UnitCellGeometry, t_Al_list: Sequence[float], materials=None,
                              nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ,
                              map_fn: Callable = map) -> SweepResult:
    if not base.scheme.has_electrodes:
        raise ValueError("electrode sweep needs a scheme with electrodes")
    job = functools.partial(_t_al_job, base=base, materials=materials, nx=nx, nz=nz)
    return _sweep("t_Al", t_Al_list, job, map_fn)


def litho_tuning_scan(base: UnitCellGeometry, W_list: Sequence[float], materials=None,
                      nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ, map_fn: Callable = map) -> SweepResult:
    if not base.scheme.has_electrodes:
        raise ValueError("tuning scan needs a scheme with electrodes")
    job = functools.partial(_w_job, base=base, materials=materials, nx=nx, nz=nz)
    return _sweep("W", W_list, job, map_fn)


@dataclass
class TuningRange:
    fraction: float
    f_min: float
    f_max: float
    kt2_max: float
    kt2_min: float
    values: list[float]


def tuning_range(res: SweepResult, retain: float = 0.8) -> TuningRange:
    """Frequency span of the run of rows around the kt2 maximum with kt2 >= retain * max.

    Spurious rows are skipped (reported as flags elsewhere); the run ends at
    the first identified row whose kt2 falls below the threshold. When that
    row is the direct grid neighbour of the run, the band edge is placed at
    the linearly interpolated threshold crossing so the span does not depend
    on where the grid happens to sample the roll-off.
    """
    rows = sorted(res.rows, key=lambda r: r.value)
    good = [k for k, r in enumerate(rows) if not r.spurious]
    if not good:
        raise ValueError("no identified rows")
    i = max(range(len(good)), key=lambda k: rows[good[k]].kt2)
    kmax = rows[good[i]].kt2
    floor = retain * kmax
    lo = i
    while lo > 0 and rows[good[lo - 1]].kt2 >= floor:
        lo -= 1
    hi = i
    while hi < len(good) - 1 and rows[good[hi + 1]].kt2 >= floor:
        hi += 1
    run = [rows[k] for k in good[lo:hi + 1]]
    f = [r.f_r for r in run]

    def edge(inside, outside):
        if outside < 0 or outside >= len(rows) or abs(outside - inside) != 1 or rows[outside].spurious:
            return None
        a, b = rows[inside], rows[outside]
        w = (a.kt2 - floor) / (a.kt2 - b.kt2)
        return a.f_r + w * (b.f_r - a.f_r)

    for e in (edge(good[lo], good[lo] - 1), edge(good[hi], good[hi] + 1)):
        if e is not None:
            f.append(e)
    fmax, fmin = max(f), min(f)
    return TuningRange(
        fraction=(fmax - fmin) / (0.5 * (fmax + fmin)), f_min=fmin, f_max=fmax,
        kt2_max=kmax, kt2_min=min(r.kt2 for r in run), values=[r.value for r in run],
    )


# calibrated 24 GHz base designs, lengths in metres
BASE_DESIGNS = {
    Scheme.LFE: dict(f_base=24e9, W=431e-9, t_AlN=375e-9, t_Al=45e-9, alpha=0.35),
    Scheme.TFE2: dict(f_base=24e9, W=422e-9, t_AlN=383e-9, t_Al=42e-9, alpha=0.5),
}


def base_geometry(scheme) -> UnitCellGeometry:
    scheme = Scheme.parse(scheme)
    if scheme not in BASE_DESIGNS:
        raise ValueError(f"no calibrated base design for {scheme.value}")
    b = BASE_DESIGNS[scheme]
    return UnitCellGeometry(W=b["W"], t_AlN=b["t_AlN"], t_Al=b["t_Al"], alpha=b["alpha"], scheme=scheme)


@dataclass
class DimensionRecipe:
    f_target: float
    W: float
    t_AlN: float
    t_Al: float
    alpha: float
    scheme: str
    f_achieved: float | None = None
    mac: float | None = None
    calibration: str = "table"

    @property
    def frequency_error(self) -> float | None:
        if self.f_achieved is None:
            return None
        return (self.f_achieved - self.f_target) / self.f_target

    def geometry(self) -> UnitCellGeometry:
        return UnitCellGeometry(W=self.W, t_AlN=self.t_AlN, t_Al=self.t_Al, alpha=self.alpha,
                                scheme=Scheme.parse(self.scheme))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frequency_error"] = self.frequency_error
        return d


def synthesize_dimensions(f_target: float, scheme, verify: bool = True, calibration: str = "table",
                          materials=None, nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ) -> DimensionRecipe:
    """Similarity-scale the scheme's 24 GHz base design to ``f_target``.

    ``calibration="table"`` takes the base design at its nominal 24 GHz;
    ``"fem"`` first solves the base and uses the computed resonance instead,
    which puts the verified frequency on target at the cost of departing from
    the nominal dimensions.
    """
    if not F_MIN <= f_target <= F_MAX:
        raise ValueError(f"f_target must lie in [{F_MIN:.3g}, {F_MAX:.3g}] Hz")
    if calibration not in ("table", "fem"):
        raise ValueError("calibration must be 'table' or 'fem'")
    scheme = Scheme.parse(scheme)
    base = base_geometry(scheme)
    f_base = BASE_DESIGNS[scheme]["f_base"]
    if calibration == "fem":
        row = kt2_point(base, materials, nx, nz)
        if row.spurious:
            raise SolverError("base design resonance is spurious")
        f_base = row.f_r
    g = base.scaled(f_base / f_target)
    rec = DimensionRecipe(f_target=f_target, W=g.W, t_AlN=g.t_AlN, t_Al=g.t_Al, alpha=g.alpha,
                          scheme=scheme.value, calibration=calibration)
    if verify:
        sys = build_system(g, materials, nx, nz)
        m, _ = find_com(sys, ElectricalState.SHORT)
        if m.spurious:
            raise SolverError(f"verification solve at {f_target:.4g} Hz is spurious (MAC {m.mac:.2f})")
        rec.f_achieved = float(m.mode.frequency)
        rec.mac = m.mac
        if abs(rec.frequency_error) > 0.005:
            log.warning("%s recipe at %.4g Hz resonates %.2f%% off target",
                        scheme.value, f_target, 100 * rec.frequency_error)
    return rec


@dataclass
class CorBawRow:
    t_AlN: float
    f_COR: float
    f_BAW: float
    mac_COR: float
    mac_BAW: float

    @property
    def ratio(self) -> float:
        return self.f_COR / self.f_BAW


def _cor_baw_job(t, materials, nx, nz) -> CorBawRow:
    sys = build_system(UnitCellGeometry(W=t, t_AlN=t), materials, nx, nz)
    com, _ = find_com(sys, ElectricalState.BARE)
    baw = find_thickness_mode(sys, ElectricalState.BARE)
    if com.spurious or baw.spurious:
        raise SolverError(f"mode identification failed at t={t:.4g} m")
    return CorBawRow(t_AlN=t, f_COR=float(com.mode.frequency), f_BAW=float(baw.mode.frequency),
                     mac_COR=com.mac, mac_BAW=baw.mac)


def cor_vs_baw(t_list: Sequence[float], materials=None, nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ,
               map_fn: Callable = map) -> list[CorBawRow]:
    """Electrode-less COM (W = t) and thickness-extensional frequencies of the same plate."""
    job = functools.partial(_cor_baw_job, materials=materials, nx=nx, nz=nz)
    return list(map_fn(job, [float(t) for t in t_list]))


@dataclass
class SensitivityRow:
    dt: float
    df_COR: float
    df_BAW: float


@dataclass
class SensitivityTable:
    rows: list[SensitivityRow]
    slope_COR: dict = field(default_factory=dict)
    slope_BAW: dict = field(default_factory=dict)


def _freq_job(t, base_cor, base_baw, materials, nx, nz):
    s1 = build_system(base_cor.with_(t_AlN=t), materials, nx, nz)
    com, _ = find_com(s1, ElectricalState.BARE)
    s2 = build_system(base_baw.with_(t_AlN=t), materials, nx, nz)
    baw = find_thickness_mode(s2, ElectricalState.BARE)
    if com.spurious or baw.spurious:
        raise SolverError(f"mode identification failed at t_AlN={t:.4g} m")
    return float(com.mode.frequency), float(baw.mode.frequency)


def thickness_sensitivity(base_COR: UnitCellGeometry, base_BAW: UnitCellGeometry | None = None,
                          delta_list: Sequence[float] = (-0.05, -0.02, -0.01, 0.0, 0.01, 0.02, 0.05),
                          materials=None, nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ,
                          map_fn: Callable = map) -> SensitivityTable:
    """Relative frequency shifts for relative t_AlN perturbations at fixed W.

    Every point is re-meshed. Slopes are central differences for each
    magnitude that appears with both signs.
    """
    for g in (base_COR, base_BAW):
        if g is not None and g.scheme.has_electrodes:
            raise ValueError("sensitivity comparison uses electrode-less plates")
    base_BAW = base_BAW or base_COR
    deltas = sorted({float(d) for d in delta_list} | {0.0})
    if any(abs(d) > 0.1 for d in deltas):
        raise ValueError("perturbations must lie within +-10%")
    job = functools.partial(_freq_job, base_cor=base_COR, base_baw=base_BAW, materials=materials, nx=nx, nz=nz)
    ts = [base_COR.t_AlN * (1 + d) for d in deltas]
    if base_BAW.t_AlN != base_COR.t_AlN:
        raise ValueError("COR and BAW plates must share t_AlN")
    res = dict(zip(deltas, map_fn(job, ts)))
    c0, b0 = res[0.0]
    rows = [SensitivityRow(dt=d, df_COR=res[d][0] / c0 - 1, df_BAW=res[d][1] / b0 - 1) for d in deltas]
    out = SensitivityTable(rows=rows)
    for d in deltas:
        if d > 0 and -d in res:
            out.slope_COR[d] = (res[d][0] - res[-d][0]) / (2 * d * c0)
            out.slope_BAW[d] = (res[d][1] - res[-d][1]) / (2 * d * b0)
    return out


def pool_map(jobs: int | None):
    """Order-preserving map over a bounded process pool (plain map for jobs <= 1)."""
    if not jobs or jobs <= 1:
        return map
    from concurrent.futures import ProcessPoolExecutor

    def _map(fn, items):
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))

    return _map

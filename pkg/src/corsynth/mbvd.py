"""Modified Butterworth-Van Dyke resonator model."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

PI2_8 = math.pi ** 2 / 8


@dataclass(frozen=True)
class MbvdModel:
    f_s: float
    kt2: float
    Q: float
    C0: float
    Rs: float = 0.0

    def __post_init__(self):
        if not (self.f_s > 0 and self.kt2 > 0 and self.Q > 0 and self.C0 > 0):
            raise ValueError("f_s, kt2, Q and C0 must all be positive")
        if self.kt2 >= PI2_8:
            raise ValueError("kt2 must be below pi^2/8")
        if self.Rs < 0:
            raise ValueError("Rs must be >= 0")

    @property
    def Cm(self) -> float:
        # Cm/C0 = (8/pi^2) kt2 makes kt2 = (pi^2/8)(fp^2 - fs^2)/fs^2 exact
        return self.C0 * self.kt2 / PI2_8

    @property
    def Lm(self) -> float:
        return 1.0 / ((2 * math.pi * self.f_s) ** 2 * self.Cm)

    @property
    def Rm(self) -> float:
        return 1.0 / (2 * math.pi * self.f_s * self.Cm * self.Q)

    @property
    def f_p(self) -> float:
        return self.f_s * math.sqrt(1 + self.Cm / self.C0)

    def scaled_frequency(self, f_s: float) -> "MbvdModel":
        return MbvdModel(f_s=f_s, kt2=self.kt2, Q=self.Q, C0=self.C0, Rs=self.Rs)

    def admittance(self, f) -> np.ndarray:
        return admittance(self, f)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(Cm=self.Cm, Lm=self.Lm, Rm=self.Rm, f_p=self.f_p)
        return d

    def dump_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def mbvd_from_physics(f_s: float, kt2: float, Q: float, C0: float, Rs: float = 0.0) -> MbvdModel:
    return MbvdModel(f_s=f_s, kt2=kt2, Q=Q, C0=C0, Rs=Rs)


def admittance(m: MbvdModel, f) -> np.ndarray:
    """Y = j w C0 + 1 / (Rm + j w Lm + 1/(j w Cm)), then Rs in series."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    w = 2 * np.pi * f
    y = 1j * w * m.C0 + 1.0 / (m.Rm + 1j * w * m.Lm + 1.0 / (1j * w * m.Cm))
    if m.Rs:
        y = 1.0 / (m.Rs + 1.0 / y)
    return y


def size_for_termination(f_s: float, Z_target: float) -> float:
    """Static capacitance whose reactance equals Z_target at f_s."""
    if f_s <= 0 or Z_target <= 0:
        raise ValueError("f_s and Z_target must be positive")
    return 1.0 / (2 * math.pi * f_s * Z_target)


def termination_impedance(f: float, C0: float) -> float:
    return 1.0 / (2 * math.pi * f * C0)


def _refine_extremum(fun, f_lo, f_hi, maximize: bool) -> float:
    from scipy.optimize import minimize_scalar

    sign = -1.0 if maximize else 1.0
    res = minimize_scalar(lambda x: sign * fun(x), bounds=(f_lo, f_hi), method="bounded",
                          options={"xatol": 1e-12 * f_hi})
    return float(res.x)


def resonances_from_admittance(f: np.ndarray, y: np.ndarray, model_fn=None) -> tuple[float, float]:
    """(f_s, f_p) as the |Y| maximum and the nearest |Y| minimum above it.

    With ``model_fn`` (callable f -> Y) the grid extrema are polished by a
    bounded scalar search between the neighbouring grid points.
    """
    f = np.asarray(f, dtype=float)
    mag = np.abs(y)
    i = int(np.argmax(mag))
    above = np.flatnonzero((np.arange(len(f)) > i))
    if len(above) == 0:
        raise ValueError("no grid points above the series resonance")
    # nearest local minimum above f_s
    j = None
    for k in above[:-1]:
        if mag[k] <= mag[k - 1] and mag[k] <= mag[k + 1]:
            j = k
            break
    if j is None:
        j = int(above[np.argmin(mag[above])])
    fs, fp = f[i], f[j]
    if model_fn is not None:
        lo, hi = f[max(i - 1, 0)], f[min(i + 1, len(f) - 1)]
        fs = _refine_extremum(lambda x: abs(model_fn(x)), lo, hi, True)
        lo, hi = f[max(j - 1, 0)], f[min(j + 1, len(f) - 1)]
        fp = _refine_extremum(lambda x: abs(model_fn(x)), lo, hi, False)
    return fs, fp


def kt2_from_resonances(f_s: float, f_p: float) -> float:
    return PI2_8 * (f_p ** 2 - f_s ** 2) / f_s ** 2


def loaded_q_3db(f: np.ndarray, y: np.ndarray) -> float:
    """Loaded Q from the half-power width of Re{Y} around its peak."""
    f = np.asarray(f, dtype=float)
    g = np.real(y)
    i = int(np.argmax(g))
    half = 0.5 * g[i]
    lo = i
    while lo > 0 and g[lo] > half:
        lo -= 1
    hi = i
    while hi < len(g) - 1 and g[hi] > half:
        hi += 1
    if g[lo] > half or g[hi] > half:
        raise ValueError("half-power points not bracketed by the grid")

    def cross(a, b):
        return f[a] + (half - g[a]) * (f[b] - f[a]) / (g[b] - g[a])

    return float(f[i] / (cross(hi - 1, hi) - cross(lo, lo + 1)))


def write_touchstone_1port(path: str | Path, f: np.ndarray, y: np.ndarray, z0: float = 50.0) -> None:
    """One-port network file with admittance data (frequency, Re Y, Im Y)."""
    lines = ["! one-port admittance", f"# HZ Y RI R {z0:g}"]
    # Touchstone Y data is normalised to the reference impedance
    for fi, yi in zip(np.asarray(f, dtype=float), np.asarray(y) * z0):
        lines.append(f"{fi:.9e} {yi.real:.12e} {yi.imag:.12e}")
    Path(path).write_text("\n".join(lines) + "\n")

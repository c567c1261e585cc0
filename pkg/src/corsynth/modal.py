"""Mode-level analysis: analytic COM shape, mode identification, coupling.

Coupling constants follow the frequency-pair definition

    k^2 = (pi^2 / 8) (f_high^2 - f_low^2) / f_low^2

with (f_low, f_high) = (f_s, f_p) for a real electrode set and (f_m, f_o)
for the metallized/bare plate.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fem import (
    AssembledSystem, ElectricalState, FieldSolution, SolverError, assemble, eigensolve,
    element_fields, static_drive,
)
from .geometry import ALN, Scheme, UnitCellGeometry, build_unit_cell
from .materials import material_map

log = logging.getLogger(__name__)

MAC_SPURIOUS = 0.6
PI2_8 = math.pi ** 2 / 8
# widest plausible coupling when pairing short/open modes
MAX_KT2 = 0.10
DEFAULT_NX = 24
DEFAULT_NZ = 24


def coupling_from_pair(f_low: float, f_high: float) -> float:
    return PI2_8 * (f_high ** 2 - f_low ** 2) / f_low ** 2


@dataclass(frozen=True)
class AnalyticModeShape:
    Xbar: float
    Zbar: float
    beta_x: float
    beta_zx: float
    beta_zz: float

    def __call__(self, x, z, shift: float = 0.0):
        """(u_x, u_z) at (x, z); z is measured up from the AlN bottom face."""
        x = np.asarray(x, dtype=float) - shift
        z = np.asarray(z, dtype=float)
        ux = -self.Xbar * np.cos(self.beta_x * x) * np.cos(self.beta_zx * z)
        uz = -self.Zbar * np.sin(self.beta_x * x) * np.cos(self.beta_zz * z)
        return ux, uz

    @property
    def quarter_shift(self) -> float:
        # x-shift that turns cos(beta_x x) into sin(beta_x x)
        return 0.5 * math.pi / self.beta_x


def analytic_modeshape(g: UnitCellGeometry, Xbar: float = 1.0, Zbar: float = 1.0) -> AnalyticModeShape:
    if g.W <= 0 or g.t_AlN <= 0:
        raise ValueError("W and t_AlN must be positive")
    return AnalyticModeShape(
        Xbar=Xbar, Zbar=Zbar,
        beta_x=math.pi / g.W, beta_zx=3 * math.pi / g.t_AlN, beta_zz=2 * math.pi / g.t_AlN,
    )


@dataclass(frozen=True)
class ThicknessModeShape:
    """Fundamental thickness-extensional plate mode: u_z ~ cos(pi z / t), no x dependence."""

    t_AlN: float
    quarter_shift: float = 0.0

    def __call__(self, x, z, shift: float = 0.0):
        z = np.asarray(z, dtype=float)
        return np.zeros_like(z), np.cos(math.pi * z / self.t_AlN)


def _aln_nodes(mesh) -> np.ndarray:
    return np.unique(mesh.elements[mesh.region == ALN])


def modal_assurance(sol: FieldSolution, shape: AnalyticModeShape, phase_invariant: bool | None = None) -> float:
    """MAC of a mode against the analytic COM, sampled on the AlN nodes.

    A bare cell is translation invariant, so its COM comes as a degenerate
    pair with arbitrary phase; there the reference space is spanned by the
    shape and its quarter-period translate. Electrodes pin the phase: the
    mode whose u_x node sits under each finger is the piezo-active one, and
    that is the shape's native phase (fingers centred at x = W/2).
    """
    mesh = sol.mesh
    if phase_invariant is None:
        phase_invariant = not mesh.geometry.scheme.has_electrodes
    ids = _aln_nodes(mesh)
    x, z = mesh.nodes[ids, 0], mesh.nodes[ids, 1]
    a = np.column_stack(shape(x, z)).ravel()
    if phase_invariant:
        b = np.column_stack(shape(x, z, shift=shape.quarter_shift)).ravel()
        A = np.column_stack([a, b])
    else:
        A = a[:, None]
    v = np.real(sol.u[ids]).ravel()
    vv = v @ v
    if vv == 0:
        return 0.0
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(np.clip((A @ coef) @ v / vv, 0.0, 1.0))


@dataclass
class ModeMatch:
    mode: FieldSolution
    mac: float
    spurious: bool


def identify_com(modes: Sequence[FieldSolution], shape: AnalyticModeShape) -> ModeMatch:
    if not modes:
        raise ValueError("empty mode list")
    scores = [modal_assurance(m, shape) for m in modes]
    i = int(np.argmax(scores))
    return ModeMatch(mode=modes[i], mac=scores[i], spurious=scores[i] < MAC_SPURIOUS)


def com_frequency_guess(g: UnitCellGeometry, materials=None) -> float:
    """Shear-wave estimate of the COM frequency with electrode mass loading."""
    mats = material_map() if materials is None else _as_map(materials)
    aln = mats["AlN"]
    vs = math.sqrt(aln.c[4, 4] / aln.density)
    f = 0.5 * vs * math.sqrt(1 / g.W ** 2 + 9 / g.t_AlN ** 2)
    if g.scheme.has_electrodes and "Al" in mats:
        sides = 2 if g.scheme.has_bottom else 1
        m_el = sides * mats["Al"].density * g.t_Al * g.alpha
        f *= math.sqrt(aln.density * g.t_AlN / (aln.density * g.t_AlN + m_el))
    return f


def _as_map(materials):
    if isinstance(materials, dict):
        return materials
    return {m.name: m for m in materials}


def build_system(g: UnitCellGeometry, materials=None, nx: int = DEFAULT_NX, nz: int = DEFAULT_NZ) -> AssembledSystem:
    return assemble(build_unit_cell(g, nx, nz), materials)


def find_com(sys: AssembledSystem, state: ElectricalState | str, f_center: float | None = None,
             n_modes: int = 20, shape: AnalyticModeShape | None = None) -> tuple[ModeMatch, list[FieldSolution]]:
    g = sys.mesh.geometry
    shape = shape or analytic_modeshape(g)
    f_center = f_center or com_frequency_guess(g, {m.name: m for m in sys.materials.values()})
    modes = eigensolve(sys, state, n_modes, f_center)
    return identify_com(modes, shape), modes


def find_thickness_mode(sys: AssembledSystem, state: ElectricalState | str = ElectricalState.BARE,
                        n_modes: int = 12) -> ModeMatch:
    """Fundamental thickness-extensional (BAW) mode of the cell."""
    aln = sys.materials[ALN]
    t = sys.mesh.geometry.t_AlN
    f_guess = 0.5 * math.sqrt(aln.stiffened_c33() / aln.density) / t
    modes = eigensolve(sys, state, n_modes, f_guess)
    return identify_com(modes, ThicknessModeShape(t))


@dataclass
class CouplingReport:
    f_low: float
    f_high: float
    kt2: float | None = None
    K2: float | None = None
    Um: float | None = None
    Ue: float | None = None
    Ucoupling: float | None = None
    mac: float | None = None
    scheme: str = ""
    spurious: bool = False

    @property
    def value(self) -> float:
        return self.kt2 if self.kt2 is not None else self.K2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DispersionRow:
    W: float
    f_o: float
    f_m: float
    K2: float | None
    mac: float
    spurious: bool


@dataclass
class DispersionTable:
    t_AlN: float
    rows: list[DispersionRow] = field(default_factory=list)

    @property
    def peak(self) -> DispersionRow | None:
        ok = [r for r in self.rows if not r.spurious]
        return max(ok, key=lambda r: r.K2) if ok else None

    def columns(self) -> list[dict]:
        pk = self.peak
        return [
            {"W": r.W, "f_o": r.f_o, "f_m": r.f_m, "K2": r.K2, "mac": r.mac,
             "spurious": r.spurious, "peak": r is pk}
            for r in self.rows
        ]


def dispersion_point(t_AlN: float, W: float, materials=None, nx: int = DEFAULT_NX,
                     nz: int = DEFAULT_NZ) -> DispersionRow:
    g = UnitCellGeometry(W=W, t_AlN=t_AlN)
    sys = build_system(g, materials, nx, nz)
    bare, _ = find_com(sys, ElectricalState.BARE)
    metal, _ = find_com(sys, ElectricalState.METALLIZED_GROUNDED, f_center=bare.mode.frequency)
    mac = min(bare.mac, metal.mac)
    spurious = bare.spurious or metal.spurious
    f_o, f_m = float(bare.mode.frequency), float(metal.mode.frequency)
    K2 = None if spurious else coupling_from_pair(f_m, f_o)
    return DispersionRow(W=W, f_o=f_o, f_m=f_m, K2=K2, mac=mac, spurious=spurious)


def _dispersion_job(t_AlN, W, materials=None, nx=DEFAULT_NX, nz=DEFAULT_NZ):
    return dispersion_point(t_AlN, W, materials, nx, nz)


def dispersion_scan(t_AlN: float, W_list: Sequence[float], materials=None, nx: int = DEFAULT_NX,
                    nz: int = DEFAULT_NZ, map_fn: Callable = map) -> DispersionTable:
    """Bare/metallized COM frequencies and K^2 versus pitch W."""
    W_list = list(W_list)
    if not W_list or any(b <= a for a, b in zip(W_list, W_list[1:])):
        raise ValueError("W_list must be non-empty and strictly ascending")
    job = functools.partial(_dispersion_job, t_AlN, materials=materials, nx=nx, nz=nz)
    rows = list(map_fn(job, W_list))
    return DispersionTable(t_AlN=t_AlN, rows=rows)


def _open_window(f_s: float) -> tuple[float, float]:
    hi = f_s * math.sqrt(1 + 2 * MAX_KT2 / PI2_8)
    return f_s * (1 - 1e-7), hi


def extract_kt2(sys: AssembledSystem, f_window: tuple[float, float] | float | None = None,
                n_modes: int = 20) -> CouplingReport:
    """kt^2 of the COM from short- and open-circuit eigenpairs.

    The open-circuit partner is the highest-MAC open mode inside the
    admissible window above f_s.
    """
    g = sys.mesh.geometry
    if not g.scheme.has_electrodes:
        raise ValueError("extract_kt2 needs an electroded cell")
    shape = analytic_modeshape(g)
    if f_window is None:
        f_center = None
    elif np.isscalar(f_window):
        f_center = float(f_window)
    else:
        f_center = 0.5 * (f_window[0] + f_window[1])
    short, _ = find_com(sys, ElectricalState.SHORT, f_center, n_modes, shape)
    f_s = float(short.mode.frequency)
    if short.spurious:
        return CouplingReport(f_low=f_s, f_high=float("nan"), kt2=None, mac=short.mac,
                              scheme=g.scheme.value, spurious=True)
    lo, hi = _open_window(f_s)
    opens = eigensolve(sys, ElectricalState.OPEN, n_modes, f_s)
    cands = [m for m in opens if lo <= m.frequency <= hi]
    if not cands:
        raise SolverError(f"no open-circuit partner for f_s={f_s:.6g} Hz in [{lo:.6g}, {hi:.6g}]")
    best = identify_com(cands, shape)
    f_p = max(float(best.mode.frequency), f_s)
    return CouplingReport(
        f_low=f_s, f_high=f_p, kt2=coupling_from_pair(f_s, f_p), mac=short.mac,
        scheme=g.scheme.value, spurious=False,
    )


def energy_integral_kt2(sys: AssembledSystem, mode: FieldSolution,
                        drive: FieldSolution | None = None) -> CouplingReport:
    """Energy-integral coupling estimate from a modal stress field and a drive field.

    Um uses the compliance s^E = c^-1, the mutual term uses the strain
    coefficients d = e s^E so that T d E is an energy density, and Ue uses
    the stress-free permittivity.
    """
    if drive is None:
        drive = static_drive(sys)
    if mode.mesh is not sys.mesh or drive.mesh is not sys.mesh:
        raise ValueError("mode and drive fields must live on the system mesh")
    fm = element_fields(sys, mode)
    fd = element_fields(sys, drive)
    w = fm["wdet"]
    Um = Uc = Ue = 0.0
    for tag, mat in sys.materials.items():
        sel = sys.mesh.region == tag
        if not sel.any():
            continue
        T6 = _full_stress(fm["S"][sel], fm["E"][sel], mat)
        s = mat.compliance
        Um += 0.5 * np.einsum("eq,eqi,ij,eqj->", w[sel], T6, s, T6).real
        if mat.is_conductor:
            continue
        E3 = np.zeros(fd["E"][sel].shape[:2] + (3,))
        E3[..., 0] = np.real(fd["E"][sel][..., 0])
        E3[..., 2] = np.real(fd["E"][sel][..., 1])
        Uc += 0.5 * np.einsum("eq,eqi,ni,eqn->", w[sel], T6, mat.d, E3).real
        Ue += 0.5 * np.einsum("eq,eqm,mn,eqn->", w[sel], E3, mat.eps_T, E3)
    kt2 = PI2_8 * Uc ** 2 / (Um * Ue) if Um > 0 and Ue > 0 else 0.0
    return CouplingReport(
        f_low=float(np.real(mode.frequency)), f_high=float("nan"), kt2=kt2,
        Um=float(Um), Ue=float(Ue), Ucoupling=float(Uc), scheme=sys.mesh.geometry.scheme.value,
    )


def _full_stress(S3: np.ndarray, E2: np.ndarray, mat) -> np.ndarray:
    """Full Voigt stress (..., 6) from plane strain (S_xx, S_zz, 2S_xz) and E (x, z)."""
    S6 = np.zeros(S3.shape[:-1] + (6,))
    S6[..., 0] = np.real(S3[..., 0])
    S6[..., 2] = np.real(S3[..., 1])
    S6[..., 4] = np.real(S3[..., 2])
    E = np.zeros(E2.shape[:-1] + (3,))
    E[..., 0] = np.real(E2[..., 0])
    E[..., 2] = np.real(E2[..., 1])
    return S6 @ mat.c.T - E @ mat.e


@dataclass
class QBudget:
    q_anchor: float | None = None
    q_interface: float | None = None
    q_material: float | None = None
    q_electrical: float | None = None
    q_dielectric: float | None = None
    q_intrinsic: float | None = None

    def channels(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def q_total(b: QBudget) -> float:
    """Harmonic combination of the loss channels that are set."""
    ch = b.channels()
    if not ch:
        raise ValueError("at least one Q channel must be set")
    bad = {k: v for k, v in ch.items() if not v > 0}
    if bad:
        raise ValueError(f"Q channels must be positive: {bad}")
    return 1.0 / math.fsum(1.0 / v for v in ch.values())

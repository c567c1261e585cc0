"""COR periodic unit cell description and structured quad meshing."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class Scheme(str, enum.Enum):
    ELECTRODELESS_OPEN = "electrodeless_open"
    ELECTRODELESS_METALLIZED = "electrodeless_metallized"
    LFE = "lfe"
    TFE1 = "tfe1"
    TFE2 = "tfe2"

    @property
    def has_electrodes(self) -> bool:
        return self in (Scheme.LFE, Scheme.TFE1, Scheme.TFE2)

    @property
    def has_bottom(self) -> bool:
        return self in (Scheme.TFE1, Scheme.TFE2)

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for s in cls:
            if s.value.replace("_", "") == key:
                return s
        raise ValueError(f"unknown excitation scheme {value!r}")


class Terminal(str, enum.Enum):
    DRIVE_POS = "+"
    DRIVE_NEG = "-"
    GROUND = "0"


class GeometryError(ValueError):
    pass


# region tags
ALN, TOP, BOTTOM = 0, 1, 2
REGION_NAMES = ("AlN", "top_electrode", "bottom_electrode")


@dataclass(frozen=True)
class UnitCellGeometry:
    """Periodic COR cross-section; all lengths in metres."""

    W: float
    t_AlN: float
    t_Al: float = 0.0
    alpha: float = 0.5
    N: int = 2
    scheme: Scheme = Scheme.ELECTRODELESS_OPEN

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not (self.W > 0 and self.t_AlN > 0):
            raise GeometryError("W and t_AlN must be positive")
        if self.t_Al < 0:
            raise GeometryError("t_Al must be >= 0")
        if not 0 < self.alpha < 1:
            raise GeometryError("alpha must lie in (0, 1)")
        if int(self.N) != self.N or self.N < 1:
            raise GeometryError("N must be an integer >= 1")
        object.__setattr__(self, "N", int(self.N))
        if (self.t_Al == 0) != (not self.scheme.has_electrodes):
            raise GeometryError("t_Al = 0 exactly when the scheme is electrode-less")

    @property
    def width(self) -> float:
        return self.N * self.W

    def scaled(self, s: float) -> "UnitCellGeometry":
        return replace(self, W=self.W * s, t_AlN=self.t_AlN * s, t_Al=self.t_Al * s)

    def with_(self, **kw) -> "UnitCellGeometry":
        return replace(self, **kw)

    def electrode_span(self, period: int) -> tuple[float, float]:
        x0 = period * self.W
        return x0 + 0.5 * (1 - self.alpha) * self.W, x0 + 0.5 * (1 + self.alpha) * self.W


@dataclass(frozen=True)
class Finger:
    side: str  # "top" | "bottom"
    period: int
    terminal: Terminal


@dataclass
class Mesh:
    nodes: np.ndarray  # (n, 2) x, z
    elements: np.ndarray  # (ne, 4) counter-clockwise
    region: np.ndarray  # (ne,) ALN / TOP / BOTTOM
    element_finger: np.ndarray  # (ne,) finger index or -1
    fingers: list[Finger]
    left: np.ndarray  # node ids on x = 0, ordered by z
    right: np.ndarray  # partner ids on x = N W
    top: np.ndarray  # AlN top surface nodes
    bottom: np.ndarray  # AlN bottom surface nodes
    geometry: UnitCellGeometry
    nx: int
    nz: int
    nz_electrode: int = 0
    resolution: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def finger_nodes(self, k: int) -> np.ndarray:
        return np.unique(self.elements[self.element_finger == k])

    def jacobian_dets(self) -> np.ndarray:
        x = self.nodes[self.elements]  # (ne, 4, 2)
        # 2 * signed polygon area; positive for CCW quads
        a = x[:, :, 0] * np.roll(x[:, :, 1], -1, axis=1) - np.roll(x[:, :, 0], -1, axis=1) * x[:, :, 1]
        return 0.5 * a.sum(axis=1)

    def dump_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path.with_suffix(".nodes.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "x", "z"])
            for i, (x, z) in enumerate(self.nodes):
                w.writerow([i, repr(float(x)), repr(float(z))])
        with open(path.with_suffix(".elements.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "n0", "n1", "n2", "n3", "region"])
            for i, (conn, r) in enumerate(zip(self.elements, self.region)):
                w.writerow([i, *map(int, conn), REGION_NAMES[r]])


def terminal_pattern(g: UnitCellGeometry) -> list[Finger]:
    """Polarity of every electrode finger, alternating along x."""
    if not g.scheme.has_electrodes:
        raise GeometryError(f"scheme {g.scheme.value} has no electrodes")
    alt = [Terminal.DRIVE_POS if p % 2 == 0 else Terminal.DRIVE_NEG for p in range(g.N)]
    flip = {Terminal.DRIVE_POS: Terminal.DRIVE_NEG, Terminal.DRIVE_NEG: Terminal.DRIVE_POS}
    fingers = [Finger("top", p, alt[p]) for p in range(g.N)]
    if g.scheme is Scheme.TFE1:
        fingers += [Finger("bottom", p, flip[alt[p]]) for p in range(g.N)]
    elif g.scheme is Scheme.TFE2:
        fingers += [Finger("bottom", p, alt[p]) for p in range(g.N)]
    return fingers


def _x_breaks(g: UnitCellGeometry, nx: int) -> tuple[np.ndarray, np.ndarray]:
    """Column node x-coordinates and a per-column electrode flag."""
    if not g.scheme.has_electrodes:
        xs = [p * g.W + g.W * np.arange(nx) / nx for p in range(g.N)]
        x = np.concatenate(xs + [np.array([g.width])])
        return x, np.zeros(g.N * nx, dtype=bool)
    n_gap = round(0.5 * (1 - g.alpha) * nx)
    n_el = nx - 2 * n_gap
    if n_gap < 1 or n_el < 2:
        raise GeometryError(
            f"electrode width alpha*W not resolvable with nx={nx} (gap cols {n_gap}, electrode cols {n_el})"
        )
    xs, flags = [], []
    for p in range(g.N):
        a, b = g.electrode_span(p)
        x0, x1 = p * g.W, (p + 1) * g.W
        for lo, hi, n, on in ((x0, a, n_gap, False), (a, b, n_el, True), (b, x1, n_gap, False)):
            xs.append(lo + (hi - lo) * np.arange(n) / n)
            flags.append(np.full(n, on))
    return np.concatenate(xs + [np.array([g.width])]), np.concatenate(flags)


def build_unit_cell(g: UnitCellGeometry, nx: int = 24, nz: int = 24, nz_electrode: int | None = None) -> Mesh:
    """Structured mesh of the N-period cell.

    ``nx`` counts element columns per period and ``nz`` element rows through
    the AlN. Electrode layers get ``nz_electrode`` rows (default scales with
    t_Al/t_AlN, at least 2).
    """
    if nx < 8 or nz < 8:
        raise GeometryError("need nx >= 8 per period and nz >= 8 through the AlN")
    x, el_col = _x_breaks(g, nx)
    ncol = len(x) - 1

    if g.scheme.has_electrodes:
        if nz_electrode is None:
            nz_electrode = max(2, math.ceil(nz * g.t_Al / g.t_AlN - 1e-9))
        ze = g.t_Al * np.arange(nz_electrode + 1) / nz_electrode
    else:
        nz_electrode = 0
        ze = np.zeros(1)
    z_aln = g.t_AlN * np.arange(nz + 1) / nz

    # row coordinates and the region tag of the element row above each
    if g.scheme.has_bottom:
        z = np.concatenate([ze[:-1] - g.t_Al, z_aln])
        row_region = [BOTTOM] * nz_electrode + [ALN] * nz
        j_aln0 = nz_electrode
    else:
        z = z_aln.copy()
        row_region = [ALN] * nz
        j_aln0 = 0
    if g.scheme.has_electrodes:
        z = np.concatenate([z, g.t_AlN + ze[1:]])
        row_region += [TOP] * nz_electrode
    nrow = len(z) - 1

    grid = np.arange((nrow + 1) * (ncol + 1)).reshape(nrow + 1, ncol + 1)
    elems, regions, fing = [], [], []
    col_period = np.repeat(np.arange(g.N), nx)
    for j in range(nrow):
        reg = row_region[j]
        for i in range(ncol):
            if reg != ALN and not el_col[i]:
                continue
            elems.append((grid[j, i], grid[j, i + 1], grid[j + 1, i + 1], grid[j + 1, i]))
            regions.append(reg)
            if reg == ALN:
                fing.append(-1)
            else:
                fing.append(int(col_period[i]) + (0 if reg == TOP else g.N))
    elems = np.array(elems, dtype=np.int64)

    used = np.unique(elems)
    renum = -np.ones(grid.size, dtype=np.int64)
    renum[used] = np.arange(len(used))
    X, Z = np.meshgrid(x, z)
    nodes = np.column_stack([X.ravel()[used], Z.ravel()[used]])
    elements = renum[elems]

    aln_rows = range(j_aln0, j_aln0 + nz + 1)
    left = renum[[grid[j, 0] for j in aln_rows]]
    right = renum[[grid[j, ncol] for j in aln_rows]]
    bottom = renum[grid[j_aln0, :]]
    top = renum[grid[j_aln0 + nz, :]]

    fingers_all = terminal_pattern(g) if g.scheme.has_electrodes else []
    # finger index convention: top fingers 0..N-1, bottom fingers N..2N-1
    fingers = [None] * (2 * g.N if g.scheme.has_bottom else g.N) if fingers_all else []
    for f in fingers_all:
        fingers[f.period + (0 if f.side == "top" else g.N)] = f

    mesh = Mesh(
        nodes=nodes, elements=elements, region=np.array(regions, dtype=np.int64),
        element_finger=np.array(fing, dtype=np.int64), fingers=fingers,
        left=left, right=right, top=top, bottom=bottom, geometry=g,
        nx=nx, nz=nz, nz_electrode=nz_electrode,
        resolution={"nx": nx, "nz": nz, "nz_electrode": nz_electrode},
    )
    if np.any(mesh.jacobian_dets() <= 0):
        raise GeometryError("degenerate or inverted elements")
    return mesh

"""Coupled piezoelectric plane-strain FEM on the periodic unit cell.

Unknowns per node are (u_x, u_z, phi). The discrete balance is

    [Kuu  Kup] [u  ]   [f ]
    [Kpu -Kpp] [phi] = [-q]

with Kpu = Kup^T and q the nodal free charge. Right-boundary nodes are
identified with their left partners, and every electrode finger wired to
the same terminal collapses to a single potential unknown.
"""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import ALN, Mesh, Terminal
from .materials import MaterialTensors, material_map, plane_strain_tensors

log = logging.getLogger(__name__)

DENSE_LIMIT = 5000

_GP = np.array([-1.0, 1.0]) / np.sqrt(3.0)
GAUSS_POINTS = np.array([(a, b) for b in _GP for a in _GP])
GAUSS_WEIGHTS = np.ones(4)


class SolverError(RuntimeError):
    pass


class ElectricalState(str, enum.Enum):
    SHORT = "short"
    OPEN = "open"
    METALLIZED_GROUNDED = "metallized"
    BARE = "bare"


def _shape(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    n = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
    dn = 0.25 * np.array([
        [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
        [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)],
    ])
    return n, dn


@dataclass
class AssembledSystem:
    mesh: Mesh
    materials: dict[int, MaterialTensors]
    node_map: np.ndarray  # mesh node -> reduced node (periodic identification)
    n_red: int
    Kuu: sp.csr_matrix
    Kup: sp.csr_matrix
    Kpp: sp.csr_matrix
    M: sp.csr_matrix
    # per element / gauss point operators for post-processing
    Bu: np.ndarray  # (ne, 4, 3, 8)
    Bp: np.ndarray  # (ne, 4, 2, 4)
    Nq: np.ndarray  # (4, 4) shape values at gauss points
    wdet: np.ndarray  # (ne, 4)
    dielectric_nodes: np.ndarray  # reduced ids touching a non-conductor
    finger_nodes: list[np.ndarray] = field(default_factory=list)  # reduced ids per finger

    @property
    def n_u(self) -> int:
        return 2 * self.n_red

    def terminal_nodes(self, terminal: Terminal) -> np.ndarray:
        ids = [self.finger_nodes[k] for k, f in enumerate(self.mesh.fingers) if f.terminal == terminal]
        return np.unique(np.concatenate(ids)) if ids else np.zeros(0, dtype=np.int64)

    def electrode_nodes(self) -> np.ndarray:
        if not self.finger_nodes:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.finger_nodes))

    def surface_nodes(self) -> np.ndarray:
        return np.unique(self.node_map[np.concatenate([self.mesh.top, self.mesh.bottom])])


@dataclass
class FieldSolution:
    frequency: complex
    u: np.ndarray  # (n_nodes, 2) on mesh nodes
    phi: np.ndarray  # (n_nodes,)
    charges: dict
    state: str
    u_red: np.ndarray = field(repr=False, default=None)
    phi_red: np.ndarray = field(repr=False, default=None)
    mesh: Mesh | None = field(repr=False, default=None)

    def dump_csv(self, path: str | Path) -> None:
        mesh = self.mesh
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "x", "z", "ux", "uz", "phi"])
            for i in range(len(mesh.nodes)):
                w.writerow([i, *map(float, mesh.nodes[i]), *map(lambda v: float(np.real(v)), self.u[i]),
                            float(np.real(self.phi[i]))])


def _periodic_map(mesh: Mesh) -> tuple[np.ndarray, int]:
    n = mesh.n_nodes
    master = np.arange(n)
    master[mesh.right] = mesh.left
    uniq, inv = np.unique(master, return_inverse=True)
    return inv, len(uniq)


def _region_materials(materials) -> dict[int, MaterialTensors]:
    if materials is None:
        materials = material_map()
    elif isinstance(materials, (list, tuple)):
        materials = {m.name: m for m in materials}
    from .geometry import BOTTOM, TOP
    names = {ALN: "AlN", TOP: "Al", BOTTOM: "Al"}
    if all(isinstance(k, int) for k in materials):
        return dict(materials)
    out = {}
    for tag, nm in names.items():
        if nm in materials:
            out[tag] = materials[nm]
    return out


def assemble(mesh: Mesh, materials=None, mass_blend: float = 0.5) -> AssembledSystem:
    """Assemble stiffness, coupling, dielectric and mass matrices.

    ``materials`` maps region tags (or the names "AlN"/"Al") to
    MaterialTensors; default is the bundled set.
    """
    mats = _region_materials(materials)
    for tag in np.unique(mesh.region):
        if int(tag) not in mats:
            raise SolverError(f"no material for region tag {int(tag)}")

    node_map, n_red = _periodic_map(mesh)
    ne = len(mesh.elements)
    X = mesh.nodes[mesh.elements]  # (ne, 4, 2)

    Bu = np.zeros((ne, 4, 3, 8))
    Bp = np.zeros((ne, 4, 2, 4))
    wdet = np.zeros((ne, 4))
    Nq = np.zeros((4, 4))
    for q, (xi, eta) in enumerate(GAUSS_POINTS):
        n, dn = _shape(xi, eta)
        Nq[q] = n
        J = np.einsum("ak,ekd->ead", dn, X)  # (ne, 2, 2): d(x,z)/d(xi,eta)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            raise SolverError("inverted element")
        Jinv = np.linalg.inv(J)
        dN = np.einsum("eda,ak->edk", Jinv, dn)  # (ne, 2, 4): d/dx, d/dz
        wdet[:, q] = GAUSS_WEIGHTS[q] * det
        Bp[:, q] = dN
        Bu[:, q, 0, 0::2] = dN[:, 0]
        Bu[:, q, 1, 1::2] = dN[:, 1]
        Bu[:, q, 2, 0::2] = dN[:, 1]
        Bu[:, q, 2, 1::2] = dN[:, 0]

    ke_uu = np.zeros((ne, 8, 8))
    ke_up = np.zeros((ne, 8, 4))
    ke_pp = np.zeros((ne, 4, 4))
    me = np.zeros((ne, 8, 8))
    NN = np.einsum("qa,qb->qab", Nq, Nq)
    dielectric = np.zeros(ne, dtype=bool)
    for tag, m in mats.items():
        sel = mesh.region == tag
        if not sel.any():
            continue
        c2, e2, eps2 = plane_strain_tensors(m)
        b, bp, w = Bu[sel], Bp[sel], wdet[sel]
        ke_uu[sel] = np.einsum("eq,eqia,ij,eqjb->eab", w, b, c2, b)
        if not m.is_conductor:
            dielectric[sel] = True
            ke_up[sel] = np.einsum("eq,eqia,ji,eqjb->eab", w, b, e2, bp)
            ke_pp[sel] = np.einsum("eq,eqia,ij,eqjb->eab", w, bp, eps2, bp)
        mm = m.density * np.einsum("eq,qab->eab", w, NN)
        if mass_blend:
            lumped = np.einsum("eab->ea", mm)
            mm = (1 - mass_blend) * mm + mass_blend * np.einsum("ea,ab->eab", lumped, np.eye(4))
        blk = np.zeros((sel.sum(), 8, 8))
        blk[:, 0::2, 0::2] = mm
        blk[:, 1::2, 1::2] = mm
        me[sel] = blk
    if not dielectric.any():
        raise SolverError("singular Kpp: no dielectric region in the mesh")

    rn = node_map[mesh.elements]  # (ne, 4) reduced node ids
    udof = np.empty((ne, 8), dtype=np.int64)
    udof[:, 0::2] = 2 * rn
    udof[:, 1::2] = 2 * rn + 1

    def scatter(ke, rows, cols, shape):
        r = np.broadcast_to(rows[:, :, None], ke.shape).ravel()
        c = np.broadcast_to(cols[:, None, :], ke.shape).ravel()
        return sp.csr_matrix((ke.ravel(), (r, c)), shape=shape)

    nu = 2 * n_red
    Kuu = scatter(ke_uu, udof, udof, (nu, nu))
    Kup = scatter(ke_up, udof, rn, (nu, n_red))
    Kpp = scatter(ke_pp, rn, rn, (n_red, n_red))
    M = scatter(me, udof, udof, (nu, nu))
    Kuu = 0.5 * (Kuu + Kuu.T)
    Kpp = 0.5 * (Kpp + Kpp.T)
    M = 0.5 * (M + M.T)

    finger_nodes = [np.unique(node_map[mesh.finger_nodes(k)]) for k in range(len(mesh.fingers))]
    diel_nodes = np.unique(rn[dielectric])
    return AssembledSystem(
        mesh=mesh, materials=mats, node_map=node_map, n_red=n_red,
        Kuu=Kuu.tocsr(), Kup=Kup.tocsr(), Kpp=Kpp.tocsr(), M=M.tocsr(),
        Bu=Bu, Bp=Bp, Nq=Nq, wdet=wdet, dielectric_nodes=diel_nodes,
        finger_nodes=finger_nodes,
    )


@dataclass
class PotentialReduction:
    """phi_nodal = T @ phi_free + phi_fixed."""

    T: sp.csr_matrix
    fixed: np.ndarray
    groups: dict  # Terminal -> free column index, when the terminal floats


def potential_reduction(sys: AssembledSystem, state: ElectricalState | None = None,
                        voltages: dict | None = None) -> PotentialReduction:
    """Map nodal potentials onto the unknowns of one electrical configuration.

    Pass ``voltages`` ({Terminal: volts}) for a driven configuration; the
    named terminals are prescribed and everything else floats charge-free.
    """
    n = sys.n_red
    col = -np.ones(n, dtype=np.int64)  # -1 = fixed
    fixed = np.zeros(n)
    free_mask = np.zeros(n, dtype=bool)
    free_mask[sys.dielectric_nodes] = True
    free_mask[sys.electrode_nodes()] = False

    term_nodes = {t: sys.terminal_nodes(t) for t in Terminal}
    floating_terms = []
    if voltages is not None:
        for t, nodes in term_nodes.items():
            if len(nodes) == 0:
                continue
            if t in voltages:
                fixed[nodes] = voltages[t]
            else:
                floating_terms.append(t)
    elif state is ElectricalState.SHORT:
        pass  # every terminal held at 0 V
    elif state is ElectricalState.OPEN:
        floating_terms = [t for t in (Terminal.DRIVE_POS,) if len(term_nodes[t])]
    elif state is ElectricalState.BARE:
        floating_terms = [t for t in Terminal if len(term_nodes[t])]
    elif state is ElectricalState.METALLIZED_GROUNDED:
        free_mask[sys.surface_nodes()] = False
    else:
        raise ValueError(f"unknown electrical state {state!r}")

    idx = np.flatnonzero(free_mask)
    needs_gauge = (voltages is None and state in (ElectricalState.BARE,)) or (
        voltages is not None and not any(len(term_nodes[t]) for t in voltages)
    )
    if needs_gauge and len(idx):
        idx = idx[1:]  # pin one node to remove the constant-potential null space
    col[idx] = np.arange(len(idx))
    ncol = len(idx)
    groups = {}
    for t in floating_terms:
        col[term_nodes[t]] = ncol
        groups[t] = ncol
        ncol += 1
    rows = np.flatnonzero(col >= 0)
    T = sp.csr_matrix((np.ones(len(rows)), (rows, col[rows])), shape=(n, ncol))
    return PotentialReduction(T=T, fixed=fixed, groups=groups)


def _charges(sys: AssembledSystem, u: np.ndarray, phi: np.ndarray) -> dict:
    q = sys.Kpp @ phi - sys.Kup.T @ u
    out = {}
    for t in Terminal:
        nodes = sys.terminal_nodes(t)
        if len(nodes):
            out[t] = q[nodes].sum()
    return out


def _expand(sys: AssembledSystem, u_red, phi_red, state, freq) -> FieldSolution:
    u = u_red.reshape(-1, 2)[sys.node_map]
    phi = phi_red[sys.node_map]
    return FieldSolution(
        frequency=freq, u=u, phi=phi, charges=_charges(sys, u_red, phi_red), state=state,
        u_red=u_red, phi_red=phi_red, mesh=sys.mesh,
    )


def _phi_scale(sys: AssembledSystem) -> float:
    """Potential unit that balances the elastic and dielectric blocks.

    Kuu and Kpp differ by ~20 orders of magnitude; solving for phi / scale
    keeps the saddle-point factorization well pivoted.
    """
    ku = np.abs(sys.Kuu.diagonal()).mean()
    kp = np.abs(sys.Kpp.diagonal()).mean()
    return float(np.sqrt(ku / kp)) if kp > 0 else 1.0


def _condensed_dense(sys: AssembledSystem, red: PotentialReduction) -> np.ndarray:
    Kpp = (red.T.T @ sys.Kpp @ red.T).toarray()
    Kup = (sys.Kup @ red.T).toarray()
    return sys.Kuu.toarray() + Kup @ np.linalg.solve(Kpp, Kup.T)


def eigensolve(sys: AssembledSystem, electrical_state: ElectricalState | str, n_modes: int,
               f_center: float, dense: bool | None = None) -> list[FieldSolution]:
    """Eigenpairs nearest ``f_center`` with potentials condensed out.

    The shift-invert operator factors the full saddle-point matrix, which is
    algebraically identical to inverting the Schur-complement stiffness
    Kuu + Kup Kpp^-1 Kpu shifted by sigma M.
    """
    state = ElectricalState(electrical_state)
    if n_modes < 1 or f_center <= 0:
        raise ValueError("need n_modes >= 1 and f_center > 0")
    red = potential_reduction(sys, state)
    nu = sys.n_u
    Kup = (sys.Kup @ red.T).tocsr()
    Kpp = (red.T.T @ sys.Kpp @ red.T).tocsc()
    sigma = (2 * np.pi * f_center) ** 2
    n_eq = nu + Kpp.shape[0]
    if dense is None:
        dense = False
    if dense:
        if n_eq > DENSE_LIMIT:
            raise SolverError(f"dense eigensolve limited to {DENSE_LIMIT} equations (got {n_eq})")
        Keff = _condensed_dense(sys, red)
        lam, vec = sla.eigh(Keff, sys.M.toarray())
        order = np.argsort(np.abs(lam - sigma))[:n_modes]
        lam, vec = lam[order], vec[:, order]
    else:
        sc = _phi_scale(sys)
        A = sp.bmat([[sys.Kuu - sigma * sys.M, sc * Kup], [sc * Kup.T, -(sc * sc) * Kpp]], format="csc")
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"shift-invert factorization failed: {exc}") from exc
        zeros = np.zeros(Kpp.shape[0])

        def opinv(v):
            return lu.solve(np.concatenate([v, zeros]))[:nu]

        kpp_lu = spla.splu(Kpp) if Kpp.shape[0] else None

        def keff(v):
            out = sys.Kuu @ v
            if kpp_lu is not None:
                out = out + Kup @ kpp_lu.solve(Kup.T @ v)
            return out

        OPinv = spla.LinearOperator((nu, nu), matvec=opinv, dtype=float)
        Aop = spla.LinearOperator((nu, nu), matvec=keff, dtype=float)
        # a few guard vectors keep the outermost requested pairs well converged
        k = min(n_modes + 4, nu - 2)
        try:
            lam, vec = spla.eigsh(Aop, k=k, M=sys.M, sigma=sigma, OPinv=OPinv, which="LM",
                                  v0=np.ones(nu), tol=1e-12, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver did not converge: {exc}") from exc
        keep = np.argsort(np.abs(lam - sigma))[:n_modes]
        lam, vec = lam[keep], vec[:, keep]
    if len(lam) == 0:
        raise SolverError("empty spectrum in window")

    order = np.argsort(lam)
    kpp_lu = spla.splu(Kpp) if Kpp.shape[0] else None
    kpp_solve = kpp_lu.solve if kpp_lu is not None else (lambda r: r)
    sols = []
    for i in order:
        u = vec[:, i].astype(float)
        u = u / np.sqrt(u @ (sys.M @ u))
        # deterministic sign: largest component positive
        j = int(np.argmax(np.abs(u)))
        if u[j] < 0:
            u = -u
        phi_free = kpp_solve(Kup.T @ u) if Kpp.shape[0] else np.zeros(0)
        phi = red.T @ phi_free + red.fixed
        # Rayleigh quotient: second-order accurate in the eigenvector error
        rq = u @ (sys.Kuu @ u) + (u @ (Kup @ phi_free) if Kpp.shape[0] else 0.0)
        f = np.sqrt(max(rq, 0.0)) / (2 * np.pi)
        sols.append(_expand(sys, u, phi, state.value, f))
    return sorted(sols, key=lambda m: m.frequency)


def drive_voltages(swap: bool = False, amplitude: float = 0.5) -> dict:
    s = -1.0 if swap else 1.0
    return {Terminal.DRIVE_POS: s * amplitude, Terminal.DRIVE_NEG: -s * amplitude}


def harmonic_solve(sys: AssembledSystem, f: float, Q_struct: float = 1e4,
                   voltages: dict | None = None) -> FieldSolution:
    """Forced response to prescribed terminal voltages at one frequency."""
    if Q_struct <= 0:
        raise ValueError("Q_struct must be positive")
    if not sys.finger_nodes:
        raise SolverError("harmonic drive needs electrodes")
    voltages = drive_voltages() if voltages is None else voltages
    red = potential_reduction(sys, voltages=voltages)
    T = red.T
    Kup_f = (sys.Kup @ T).tocsr()
    Kpp_ff = (T.T @ sys.Kpp @ T).tocsc()
    w2 = (2 * np.pi * f) ** 2
    Kd = sys.Kuu * (1 + 1j / Q_struct) - w2 * sys.M
    sc = _phi_scale(sys)
    A = sp.bmat([[Kd, sc * Kup_f], [sc * Kup_f.T, -(sc * sc) * Kpp_ff]], format="csc")
    rhs = np.concatenate([-(sys.Kup @ red.fixed), sc * (T.T @ (sys.Kpp @ red.fixed))]).astype(complex)
    x = spla.spsolve(A, rhs)
    nu = sys.n_u
    u = x[:nu]
    phi = T @ (sc * x[nu:]) + red.fixed
    return _expand(sys, u, phi, "harmonic", f)


def static_drive(sys: AssembledSystem, voltages: dict | None = None) -> FieldSolution:
    """Electrostatic potential for the drive pattern with the plate clamped."""
    voltages = drive_voltages() if voltages is None else voltages
    red = potential_reduction(sys, voltages=voltages)
    T = red.T
    Kpp_ff = (T.T @ sys.Kpp @ T).tocsc()
    phi_f = spla.spsolve(Kpp_ff, -(T.T @ (sys.Kpp @ red.fixed))) if Kpp_ff.shape[0] else np.zeros(0)
    phi = T @ np.atleast_1d(phi_f) + red.fixed
    return _expand(sys, np.zeros(sys.n_u), phi, "static", 0.0)


def static_capacitance(sys: AssembledSystem) -> float:
    """Clamped capacitance per unit depth (F/m) between DRIVE+ and DRIVE-."""
    sol = static_drive(sys)
    q = sol.charges
    return float(np.real(0.5 * (q[Terminal.DRIVE_POS] - q[Terminal.DRIVE_NEG])))


def admittance_from(sol: FieldSolution, voltages: dict | None = None) -> complex:
    voltages = drive_voltages() if voltages is None else voltages
    v = voltages[Terminal.DRIVE_POS] - voltages[Terminal.DRIVE_NEG]
    dq = 0.5 * (sol.charges[Terminal.DRIVE_POS] - sol.charges[Terminal.DRIVE_NEG])
    return 1j * 2 * np.pi * sol.frequency * dq / v


def harmonic_admittance(sys: AssembledSystem, f_grid, Q_struct: float = 1e4,
                        voltages: dict | None = None) -> np.ndarray:
    """Y(f) per metre of depth (S/m) for the differential drive."""
    voltages = drive_voltages() if voltages is None else voltages
    return np.array([admittance_from(harmonic_solve(sys, float(f), Q_struct, voltages), voltages)
                     for f in np.atleast_1d(f_grid)])


def element_fields(sys: AssembledSystem, sol: FieldSolution) -> dict:
    """Strain, stress, electric field and displacement at Gauss points.

    Arrays are (ne, 4, k); Voigt order for strain/stress is (xx, zz, xz).
    """
    mesh = sys.mesh
    rn = sys.node_map[mesh.elements]
    u_e = np.empty((len(rn), 8), dtype=sol.u_red.dtype)
    u_e[:, 0::2] = sol.u_red[2 * rn]
    u_e[:, 1::2] = sol.u_red[2 * rn + 1]
    p_e = sol.phi_red[rn]
    S = np.einsum("eqia,ea->eqi", sys.Bu, u_e)
    E = -np.einsum("eqia,ea->eqi", sys.Bp, p_e)
    T = np.zeros_like(S)
    D = np.zeros_like(E)
    for tag, m in sys.materials.items():
        sel = mesh.region == tag
        if not sel.any():
            continue
        c2, e2, eps2 = plane_strain_tensors(m)
        T[sel] = S[sel] @ c2.T - E[sel] @ e2
        if not m.is_conductor:
            D[sel] = S[sel] @ e2.T + E[sel] @ eps2.T
    return {"S": S, "T": T, "E": E, "D": D, "wdet": sys.wdet}


def balance_residual(sys: AssembledSystem, sol: FieldSolution, Q_struct: float) -> float:
    """Relative residual of the free equations of a harmonic solve."""
    red = potential_reduction(sys, voltages=drive_voltages())
    w2 = (2 * np.pi * sol.frequency) ** 2
    u, phi = sol.u_red, sol.phi_red
    r_u = (sys.Kuu * (1 + 1j / Q_struct) - w2 * sys.M) @ u + sys.Kup @ phi
    r_p = red.T.T @ (sys.Kup.T @ u - sys.Kpp @ phi)
    scale = np.linalg.norm(sys.Kup @ phi) + np.linalg.norm(sys.Kpp @ phi)
    return float(np.sqrt(np.linalg.norm(r_u) ** 2 + np.linalg.norm(r_p) ** 2) / scale)

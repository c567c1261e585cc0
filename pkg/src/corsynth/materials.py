"""Anisotropic material property sets (stiffness, piezoelectric, dielectric).

Tensors are stored in Voigt form. Index order for the 6-vectors is
(xx, yy, zz, yz, xz, xy), i.e. the usual 1..6 numbering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

EPS0 = 8.8541878128e-12

# Voigt index -> (i, j) tensor pair
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
_PAIR_TO_VOIGT = np.empty((3, 3), dtype=int)
for _k, (_i, _j) in enumerate(VOIGT_PAIRS):
    _PAIR_TO_VOIGT[_i, _j] = _PAIR_TO_VOIGT[_j, _i] = _k

_ALLOWED_KEYS = {
    "name", "density", "symmetry", "conductor",
    "c", "elastic", "isotropic",
    "e", "piezo",
    "eps", "eps_r",
}


class MaterialError(ValueError):
    """Raised when a material entry is malformed or physically invalid."""


@dataclass(frozen=True)
class MaterialTensors:
    name: str
    density: float
    c: np.ndarray
    e: np.ndarray = field(default_factory=lambda: np.zeros((3, 6)))
    eps: np.ndarray = field(default_factory=lambda: EPS0 * np.eye(3))
    is_conductor: bool = False
    symmetry: str = "general"

    def __post_init__(self):
        for name in ("c", "e", "eps"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        validate(self)

    @property
    def compliance(self) -> np.ndarray:
        """Elastic compliance s^E = c^-1 (Voigt, engineering shear strains)."""
        return np.linalg.inv(self.c)

    @property
    def d(self) -> np.ndarray:
        """Piezoelectric strain coefficients d = e s^E (C/N)."""
        return self.e @ self.compliance

    @property
    def eps_T(self) -> np.ndarray:
        """Stress-free permittivity eps^T = eps^S + d e^T."""
        return self.eps + self.d @ self.e.T

    def longitudinal_velocity(self) -> float:
        """Unstiffened bulk velocity along z, sqrt(c33/rho)."""
        return float(np.sqrt(self.c[2, 2] / self.density))

    def stiffened_c33(self) -> float:
        if self.is_conductor:
            return float(self.c[2, 2])
        return float(self.c[2, 2] + self.e[2, 2] ** 2 / self.eps[2, 2])


def _is_spd(a: np.ndarray, rtol: float = 1e-10) -> bool:
    if not np.allclose(a, a.T, rtol=rtol, atol=rtol * np.abs(a).max()):
        return False
    return bool(np.linalg.eigvalsh(a).min() > 0.0)


def _check_hexagonal(m: MaterialTensors) -> None:
    c, e = m.c, m.e
    scale = np.abs(c).max()
    tol = 1e-9 * scale
    ok = (
        abs(c[0, 0] - c[1, 1]) <= tol
        and abs(c[0, 2] - c[1, 2]) <= tol
        and abs(c[3, 3] - c[4, 4]) <= tol
        and abs(c[5, 5] - 0.5 * (c[0, 0] - c[0, 1])) <= tol
    )
    mask = np.zeros((6, 6), dtype=bool)
    for i, j in [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2), (3, 3), (4, 4), (5, 5)]:
        mask[i, j] = mask[j, i] = True
    ok = ok and np.all(np.abs(c[~mask]) <= tol)
    if not ok:
        raise MaterialError(f"{m.name}: stiffness violates hexagonal 6mm pattern")
    emask = np.zeros((3, 6), dtype=bool)
    emask[0, 4] = emask[1, 3] = True
    emask[2, 0] = emask[2, 1] = emask[2, 2] = True
    etol = 1e-12 + 1e-9 * np.abs(e).max()
    if np.any(np.abs(e[~emask]) > etol) or abs(e[0, 4] - e[1, 3]) > etol or abs(e[2, 0] - e[2, 1]) > etol:
        raise MaterialError(f"{m.name}: piezo matrix violates hexagonal 6mm pattern")


def validate(m: MaterialTensors) -> None:
    if not m.name:
        raise MaterialError("material needs a name")
    if not np.isfinite(m.density) or m.density <= 0:
        raise MaterialError(f"{m.name}: density must be > 0 (got {m.density})")
    if m.c.shape != (6, 6) or m.e.shape != (3, 6) or m.eps.shape != (3, 3):
        raise MaterialError(f"{m.name}: tensor shapes must be c 6x6, e 3x6, eps 3x3")
    if not _is_spd(m.c):
        raise MaterialError(f"{m.name}: stiffness is not symmetric positive-definite")
    if m.is_conductor:
        if np.any(m.e != 0):
            raise MaterialError(f"{m.name}: conductors carry no piezoelectric terms")
    elif not _is_spd(m.eps):
        raise MaterialError(f"{m.name}: permittivity is not symmetric positive-definite")
    if m.symmetry in ("hexagonal", "isotropic"):
        _check_hexagonal(m)
    elif m.symmetry != "general":
        raise MaterialError(f"{m.name}: unknown symmetry class {m.symmetry!r}")


def hexagonal_stiffness(c11, c12, c13, c33, c44) -> np.ndarray:
    c = np.zeros((6, 6))
    c[0, 0] = c[1, 1] = c11
    c[2, 2] = c33
    c[0, 1] = c[1, 0] = c12
    c[0, 2] = c[2, 0] = c[1, 2] = c[2, 1] = c13
    c[3, 3] = c[4, 4] = c44
    c[5, 5] = 0.5 * (c11 - c12)
    return c


def isotropic_stiffness(youngs: float, poisson: float) -> np.ndarray:
    lam = youngs * poisson / ((1 + poisson) * (1 - 2 * poisson))
    mu = youngs / (2 * (1 + poisson))
    return hexagonal_stiffness(lam + 2 * mu, lam, lam, lam + 2 * mu, mu)


def hexagonal_piezo(e15, e31, e33) -> np.ndarray:
    e = np.zeros((3, 6))
    e[0, 4] = e[1, 3] = e15
    e[2, 0] = e[2, 1] = e31
    e[2, 2] = e33
    return e


def _exact_keys(d: dict, keys: set, what: str) -> dict:
    extra = set(d) - keys
    missing = keys - set(d)
    if extra or missing:
        raise MaterialError(f"{what}: expected keys {sorted(keys)}, extra={sorted(extra)} missing={sorted(missing)}")
    return {k: float(v) for k, v in d.items()}


def material_from_dict(entry: dict) -> MaterialTensors:
    if not isinstance(entry, dict):
        raise MaterialError(f"material entry must be a mapping, got {type(entry).__name__}")
    unknown = set(entry) - _ALLOWED_KEYS
    name = str(entry.get("name", ""))
    if unknown:
        raise MaterialError(f"{name or '<unnamed>'}: unknown fields {sorted(unknown)}")
    if "density" not in entry:
        raise MaterialError(f"{name}: density is required")
    conductor = bool(entry.get("conductor", False))
    symmetry = str(entry.get("symmetry", "general"))

    sources = [k for k in ("c", "elastic", "isotropic") if k in entry]
    if len(sources) != 1:
        raise MaterialError(f"{name}: give exactly one of c / elastic / isotropic")
    if "c" in entry:
        c = np.asarray(entry["c"], dtype=float)
    elif "elastic" in entry:
        c = hexagonal_stiffness(**_exact_keys(entry["elastic"], {"c11", "c12", "c13", "c33", "c44"}, name))
    else:
        c = isotropic_stiffness(**_exact_keys(entry["isotropic"], {"youngs", "poisson"}, name))

    if "e" in entry and "piezo" in entry:
        raise MaterialError(f"{name}: give at most one of e / piezo")
    if "e" in entry:
        e = np.asarray(entry["e"], dtype=float)
    elif "piezo" in entry:
        e = hexagonal_piezo(**_exact_keys(entry["piezo"], {"e15", "e31", "e33"}, name))
    else:
        e = np.zeros((3, 6))

    if "eps" in entry and "eps_r" in entry:
        raise MaterialError(f"{name}: give at most one of eps / eps_r")
    if "eps" in entry:
        eps = np.asarray(entry["eps"], dtype=float)
    elif "eps_r" in entry:
        r = _exact_keys(entry["eps_r"], {"eps11", "eps33"}, name)
        eps = EPS0 * np.diag([r["eps11"], r["eps11"], r["eps33"]])
    else:
        eps = EPS0 * np.eye(3)

    try:
        return MaterialTensors(
            name=name, density=float(entry["density"]), c=c, e=e, eps=eps,
            is_conductor=conductor, symmetry=symmetry,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, MaterialError):
            raise
        raise MaterialError(f"{name}: {exc}") from exc


def load_material_db(path: str | Path | None = None) -> list[MaterialTensors]:
    """Parse and validate a YAML material database.

    With ``path=None`` the bundled default set (AlN, Al) is returned.
    """
    if path is None:
        text = resources.files("corsynth.data").joinpath("materials.yaml").read_text()
        where = "<default materials>"
    else:
        path = Path(path)
        if not path.exists():
            raise MaterialError(f"material file not found: {path}")
        text = path.read_text()
        where = str(path)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MaterialError(f"{where}: parse failure: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"materials"} or not isinstance(doc["materials"], list):
        raise MaterialError(f"{where}: expected a single top-level 'materials' list")
    mats = [material_from_dict(entry) for entry in doc["materials"]]
    names = [m.name for m in mats]
    if len(set(names)) != len(names):
        raise MaterialError(f"{where}: duplicate material names")
    return mats


def material_map(mats: list[MaterialTensors] | None = None) -> dict[str, MaterialTensors]:
    if mats is None:
        mats = load_material_db()
    return {m.name: m for m in mats}


def voigt_to_full(m: MaterialTensors) -> tuple[np.ndarray, np.ndarray]:
    """Return the full c_ijkl (3,3,3,3) and e_ikl (3,3,3) tensors."""
    idx = _PAIR_TO_VOIGT
    c_full = m.c[idx[:, :, None, None], idx[None, None, :, :]]
    e_full = m.e[:, idx]
    return c_full, e_full


def full_to_voigt(c_full: np.ndarray, e_full: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = np.empty((6, 6))
    e = np.empty((3, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        e[:, a] = e_full[:, i, j]
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            c[a, b] = c_full[i, j, k, l]
    return c, e


# plane strain in the x-z plane: strain vector (S_xx, S_zz, 2 S_xz)
PLANE_STRAIN = [0, 2, 4]
PLANE_FIELD = [0, 2]


def plane_strain_tensors(m: MaterialTensors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduce (c, e, eps) to the x-z plane-strain subset used by the 2-D solver."""
    c2 = m.c[np.ix_(PLANE_STRAIN, PLANE_STRAIN)]
    e2 = m.e[np.ix_(PLANE_FIELD, PLANE_STRAIN)]
    eps2 = m.eps[np.ix_(PLANE_FIELD, PLANE_FIELD)]
    return c2, e2, eps2

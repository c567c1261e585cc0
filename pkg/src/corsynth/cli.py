"""Command-line front end: every subcommand writes plot-ready tables plus a manifest."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fem import ElectricalState, SolverError
from .geometry import GeometryError, Scheme, UnitCellGeometry, build_unit_cell
from .materials import MaterialError, load_material_db

EXIT_CONFIG, EXIT_SOLVER, EXIT_SPURIOUS = 2, 3, 4

log = logging.getLogger("corsynth")


class ConfigError(ValueError):
    pass


class SpuriousOnly(RuntimeError):
    pass


_UNITS = {
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "freq": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "cap": {"f": 1.0, "pf": 1e-12, "ff": 1e-15, "nf": 1e-9},
    "ohm": {"ohm": 1.0, "kohm": 1e3},
    "number": {},
}
_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Zµ]*)\s*$")


def parse_quantity(text: str, kind: str, unit: str | None = None) -> float:
    m = _NUM.match(str(text))
    if not m:
        raise ConfigError(f"cannot parse {kind} value {text!r}")
    value, suffix = float(m.group(1)), m.group(2) or unit
    if not suffix:
        return value
    table = _UNITS[kind]
    key = suffix if suffix in table else suffix.lower()
    if key not in table:
        raise ConfigError(f"unknown {kind} unit {suffix!r} in {text!r}")
    return value * table[key]


def parse_list(text: str, kind: str) -> list[float]:
    """``a:b:step[unit]`` (inclusive), comma list, or a single value."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:step, got {text!r}")
        unit = _NUM.match(parts[2]).group(2) if _NUM.match(parts[2]) else None
        a, b, step = (parse_quantity(p, kind, unit) for p in parts)
        if step <= 0 or b < a:
            raise ConfigError(f"bad range {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(n)]
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError("empty list")
    unit = _NUM.match(items[-1]).group(2) if _NUM.match(items[-1]) else None
    return [parse_quantity(s, kind, unit) for s in items]


def _scalar(text, kind):
    vals = parse_list(text, kind)
    if len(vals) != 1:
        raise ConfigError(f"expected a single value, got {text!r}")
    return vals[0]


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (Scheme, ElectricalState)):
        return v.value
    return v


class Writer:
    """Collects artifacts in an output directory and hashes them for the manifest."""

    def __init__(self, out: Path, fmt: str):
        self.out = Path(out)
        self.fmt = fmt
        self.files: dict[str, str] = {}
        self.out.mkdir(parents=True, exist_ok=True)

    def _record(self, path: Path):
        self.files[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def table(self, name: str, rows: list[dict], meta: dict | None = None) -> Path:
        rows = [_clean(r) for r in rows]
        if self.fmt == "csv":
            path = self.out / f"{name}.csv"
            buf = io.StringIO()
            cols = list(rows[0]) if rows else []
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k])
                            for k in cols})
            path.write_text(buf.getvalue())
        else:
            path = self.out / f"{name}.json"
            doc = {"meta": _clean(meta or {}), "rows": rows}
            path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        self._record(path)
        return path

    def blob(self, name: str, writer) -> Path:
        path = self.out / name
        writer(path)
        self._record(path)
        return path

    def mesh_dump(self, mesh, stem: str):
        mesh.dump_csv(self.out / stem)
        for suffix in (".nodes.csv", ".elements.csv"):
            self._record((self.out / stem).with_suffix(suffix))

    def manifest(self, command: str, config: dict, materials_path):
        import scipy

        doc = {
            "command": command,
            "config": _clean(config),
            "materials": str(materials_path) if materials_path else "<default>",
            "versions": {"corsynth": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "outputs": dict(sorted(self.files.items())),
        }
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _materials(args):
    return load_material_db(args.materials) if args.materials else None


def _map(args):
    from .studio import pool_map

    return pool_map(args.jobs)


def _geometry(args, scheme=None) -> UnitCellGeometry:
    if getattr(args, "recipe", None):
        d = json.loads(Path(args.recipe).read_text())
        d = d.get("rows", [d])[0] if "rows" in d else d
        return UnitCellGeometry(W=d["W"], t_AlN=d["t_AlN"], t_Al=d["t_Al"], alpha=d["alpha"],
                                scheme=Scheme.parse(d["scheme"]))
    scheme = Scheme.parse(scheme or args.scheme)
    t_al = _scalar(args.t_al, "length") if scheme.has_electrodes else 0.0
    if args.t_aln is None or args.w is None:
        raise ConfigError("--t-aln and --w are required")
    return UnitCellGeometry(W=_scalar(args.w, "length"), t_AlN=_scalar(args.t_aln, "length"), t_Al=t_al,
                            alpha=args.alpha, scheme=scheme)


# subcommands ---------------------------------------------------------------

def cmd_materials(args, out: Writer):
    mats = load_material_db(args.materials)
    rows = []
    for m in mats:
        rows.append({"name": m.name, "density": m.density, "conductor": m.is_conductor, "symmetry": m.symmetry,
                     "c11": m.c[0, 0], "c13": m.c[0, 2], "c33": m.c[2, 2], "c44": m.c[3, 3],
                     "e15": m.e[0, 4], "e31": m.e[2, 0], "e33": m.e[2, 2],
                     "eps11_r": m.eps[0, 0] / 8.8541878128e-12, "eps33_r": m.eps[2, 2] / 8.8541878128e-12})
    out.table("materials", rows)
    return rows


def cmd_dispersion(args, out: Writer):
    from .modal import dispersion_scan

    t = _scalar(args.t_aln, "length")
    table = dispersion_scan(t, parse_list(args.w, "length"), _materials(args), args.nx, args.nz, _map(args))
    rows = table.columns()
    out.table("dispersion", rows, {"t_AlN": t})
    if table.peak is None:
        raise SpuriousOnly("every W point is spurious")
    return rows


def cmd_modal(args, out: Writer):
    from .modal import build_system, find_com

    g = _geometry(args)
    sys_ = build_system(g, _materials(args), args.nx, args.nz)
    state = ElectricalState(args.state) if args.state else (
        ElectricalState.SHORT if g.scheme.has_electrodes else ElectricalState.BARE)
    m, modes = find_com(sys_, state, n_modes=args.modes)
    rows = [{"mode": i, "f": float(s.frequency), "is_com": s is m.mode} for i, s in enumerate(modes)]
    out.table("modal", rows, {"f_COM": float(m.mode.frequency), "mac": m.mac, "spurious": m.spurious,
                              "state": state.value, "geometry": _geom_dict(g)})
    if args.dump_mesh:
        out.mesh_dump(sys_.mesh, "mesh")
    if args.dump_fields:
        out.blob("com_fields.csv", m.mode.dump_csv)
    if m.spurious:
        raise SpuriousOnly(f"best COM match has MAC {m.mac:.3f}")
    return rows


def _geom_dict(g):
    return {"W": g.W, "t_AlN": g.t_AlN, "t_Al": g.t_Al, "alpha": g.alpha, "N": g.N, "scheme": g.scheme.value}


def cmd_kt2(args, out: Writer):
    from .studio import base_geometry, litho_tuning_scan, sweep_electrode_thickness, tuning_range

    mats = _materials(args)
    if args.base:
        g = base_geometry(args.base)
    else:
        g = None
    sweeps = [name for name in ("t_al", "w", "w_scale") if getattr(args, name) and
              (":" in str(getattr(args, name)) or "," in str(getattr(args, name)))]
    if len(sweeps) > 1:
        raise ConfigError("sweep at most one of --t-al / --w / --w-scale")
    if g is None:
        if args.t_al is None:
            raise ConfigError("--t-al is required without --base")
        w_arg = args.w if args.w and "w" not in sweeps else "1"
        t_arg = args.t_al if "t_al" not in sweeps else "1"
        g = UnitCellGeometry(W=_scalar(w_arg, "length"), t_AlN=_scalar(args.t_aln, "length"),
                             t_Al=_scalar(t_arg, "length"), alpha=args.alpha, scheme=Scheme.parse(args.scheme))
    else:
        if args.w and "w" not in sweeps:
            g = g.with_(W=_scalar(args.w, "length"))
        if args.t_al and "t_al" not in sweeps:
            g = g.with_(t_Al=_scalar(args.t_al, "length"))
    if not g.scheme.has_electrodes:
        raise ConfigError("kt2 needs an electroded scheme (lfe, tfe1, tfe2)")
    meta = {"geometry": _geom_dict(g)}
    if "t_al" in sweeps:
        res = sweep_electrode_thickness(g, parse_list(args.t_al, "length"), mats, args.nx, args.nz, _map(args))
    elif sweeps:
        Ws = parse_list(args.w, "length") if "w" in sweeps else [g.W * s for s in parse_list(args.w_scale, "number")]
        res = litho_tuning_scan(g, Ws, mats, args.nx, args.nz, _map(args))
        if res.good():
            tr = tuning_range(res)
            meta["tuning_range"] = tr.fraction
            meta["tuning_kt2_retained"] = tr.kt2_min / tr.kt2_max
    else:
        from .studio import kt2_point

        row = kt2_point(g, mats, args.nx, args.nz, value=g.t_Al)
        res = None
        rows = [{"t_Al": g.t_Al, "W": g.W, "f_s": row.f_r, "kt2": row.kt2, "mac": row.mac, "spurious": row.spurious}]
        if args.energy:
            from .modal import build_system, energy_integral_kt2, find_com

            sys_ = build_system(g, mats, args.nx, args.nz)
            m, _ = find_com(sys_, ElectricalState.SHORT)
            rows[0]["kt2_energy"] = energy_integral_kt2(sys_, m.mode).kt2
        out.table("kt2", rows, meta)
        if args.dump_mesh:
            out.mesh_dump(build_unit_cell(g, args.nx, args.nz), "mesh")
        if row.spurious:
            raise SpuriousOnly("COM not identified")
        return rows
    rows = res.columns()
    meta.update(axis=res.axis, argmax=res.argmax, peak=res.peak)
    out.table("kt2_sweep", rows, meta)
    if not res.good():
        raise SpuriousOnly("every sweep point is spurious")
    return rows


def cmd_qbudget(args, out: Writer):
    from .modal import QBudget, q_total

    b = QBudget(q_anchor=args.anchor, q_interface=args.interface, q_material=args.material_q,
                q_electrical=args.electrical, q_dielectric=args.dielectric, q_intrinsic=args.intrinsic)
    rows = [{**b.channels(), "q_total": q_total(b)}]
    out.table("qbudget", rows)
    return rows


def cmd_mbvd(args, out: Writer):
    from .mbvd import mbvd_from_physics, size_for_termination, termination_impedance, write_touchstone_1port

    fs = _scalar(args.fs, "freq")
    if args.c0 is not None:
        c0 = _scalar(args.c0, "cap")
    elif args.z_target is not None:
        c0 = size_for_termination(fs, _scalar(args.z_target, "ohm"))
    else:
        raise ConfigError("give --c0 or --z-target")
    m = mbvd_from_physics(fs, args.kt2, args.q, c0, _scalar(args.rs, "ohm"))
    span = max(4 * (m.f_p - m.f_s), 20 * fs / args.q)
    f = np.linspace(m.f_s - span, m.f_p + span, args.points)
    y = m.admittance(f)
    rows = [{"f": float(fi), "Y_abs_dB": float(20 * np.log10(abs(yi))), "Y_re": float(yi.real),
             "Y_im": float(yi.imag)} for fi, yi in zip(f, y)]
    meta = {**m.to_dict(), "Z_termination": termination_impedance(fs, c0)}
    out.table("mbvd_admittance", rows, meta)
    out.blob("mbvd_model.json", m.dump_json)
    out.blob("mbvd.s1p", lambda p: write_touchstone_1port(p, f, y))
    return rows


_KT2_DEFAULT = {Scheme.TFE2: 0.019, Scheme.LFE: 0.008}


def _kt2_for(args):
    if args.kt2 is not None:
        return args.kt2
    s = Scheme.parse(args.scheme)
    if s not in _KT2_DEFAULT:
        raise ConfigError("give --kt2 for this scheme")
    return _KT2_DEFAULT[s]


def cmd_filter(args, out: Writer):
    from .filters import (
        bw_il_scaling_table, evaluate_sparams, synthesize_ladder, write_touchstone_2port,
    )

    kt2 = _kt2_for(args)
    kw = dict(Z0=args.z0, order=args.order, shunt_c0_ratio=args.shunt_ratio)
    if args.q_list:
        f0 = _scalar(args.f, "freq")
        rows = []
        for q in parse_list(args.q_list, "number"):
            rep = evaluate_sparams(synthesize_ladder(f0, kt2, q, **kw))
            rows.append({"Q": q, "il_min": rep.il_min, "bw": rep.bw_3db})
        out.table("filter_il_vs_q", rows, {"kt2": kt2, "f": f0, "scheme": args.scheme})
        return rows
    fl = parse_list(args.f, "freq")
    if len(fl) > 1:
        rows = bw_il_scaling_table(fl, kt2, args.q, **kw)
        out.table("filter_table", rows, {"kt2": kt2, "Q": args.q, "scheme": args.scheme})
        return rows
    rep = evaluate_sparams(synthesize_ladder(fl[0], kt2, args.q, **kw))
    g = rep.s_grid
    rows = [{"f": float(fk), "S21_dB": float(20 * np.log10(abs(s21))), "S11_dB": float(20 * np.log10(abs(s11)))}
            for fk, s21, s11 in zip(g["f"], g["S21"], g["S11"])]
    out.table("filter", rows, {**rep.summary(), "kt2": kt2, "Q": args.q, "scheme": args.scheme})
    out.blob("filter.s2p", lambda p: write_touchstone_2port(p, rep, args.z0))
    return rows


def cmd_bank(args, out: Writer):
    from .filters import synthesize_bank

    kt2 = _kt2_for(args)
    bank = synthesize_bank(_scalar(args.f_start, "freq"), args.n, kt2, args.q, args.z0, args.order,
                           args.shunt_ratio)
    rows = []
    for k, (net, rep) in enumerate(zip(bank.networks, bank.members)):
        g = rep.s_grid
        for fk, s21 in zip(g["f"], g["S21"]):
            rows.append({"filter": k, "f": float(fk), "S21_dB": float(20 * np.log10(abs(s21)))})
    meta = {"aggregated_bw": bank.aggregated_bw, "crossover_dB": bank.crossover_db,
            "members": [r.summary() for r in bank.members], "kt2": kt2, "Q": args.q}
    out.table("bank", rows, meta)
    return rows


def cmd_synth_dims(args, out: Writer):
    from .studio import synthesize_dimensions

    rows = []
    for f in parse_list(args.f, "freq"):
        rec = synthesize_dimensions(f, args.scheme, verify=not args.no_verify, calibration=args.calibration,
                                    materials=_materials(args), nx=args.nx, nz=args.nz)
        rows.append(rec.to_dict())
    out.table("dimensions", rows, {"scheme": Scheme.parse(args.scheme).value})
    return rows


def cmd_sensitivity(args, out: Writer):
    from .studio import thickness_sensitivity

    g = UnitCellGeometry(W=_scalar(args.w, "length"), t_AlN=_scalar(args.t_aln, "length"))
    tab = thickness_sensitivity(g, None, [float(x) for x in args.delta.split(",")], _materials(args),
                                args.nx, args.nz, _map(args))
    rows = [{"dt_rel": r.dt, "df_rel_COR": r.df_COR, "df_rel_BAW": r.df_BAW} for r in tab.rows]
    out.table("sensitivity", rows, {"slope_COR": tab.slope_COR, "slope_BAW": tab.slope_BAW})
    return rows


def cmd_cor_vs_baw(args, out: Writer):
    from .studio import cor_vs_baw

    res = cor_vs_baw(parse_list(args.t_aln, "length"), _materials(args), args.nx, args.nz, _map(args))
    rows = [{"t_AlN": r.t_AlN, "f_COR": r.f_COR, "f_BAW": r.f_BAW, "ratio": r.ratio} for r in res]
    out.table("cor_vs_baw", rows)
    return rows


# parser --------------------------------------------------------------------

def _common(p):
    p.add_argument("--materials", help="YAML material database (default: bundled AlN/Al)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--nx", type=int, default=24, help="element columns per period")
    p.add_argument("--nz", type=int, default=24, help="element rows through the AlN")
    p.add_argument("--dump-mesh", action="store_true")
    p.add_argument("--dump-fields", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")


def _geom_flags(p, scheme_default="electrodeless_open"):
    p.add_argument("--scheme", default=scheme_default)
    p.add_argument("--w", help="IDT pitch, e.g. 1.1um")
    p.add_argument("--t-aln", dest="t_aln", help="AlN thickness")
    p.add_argument("--t-al", dest="t_al", help="electrode thickness")
    p.add_argument("--alpha", type=float, default=0.5, help="metallic coverage")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="corsynth", description="AlN combined overtone resonator design toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("materials", help="list and validate a material database")
    _common(p)
    p.set_defaults(fn=cmd_materials)

    p = sub.add_parser("dispersion", help="bare/metallized COM frequencies and K2 versus W")
    _common(p)
    p.add_argument("--t-aln", dest="t_aln", default="1um")
    p.add_argument("--w", default="600:1600:50nm", help="pitch list or start:stop:step")
    p.set_defaults(fn=cmd_dispersion)

    p = sub.add_parser("modal", help="eigenmodes around the COM and its MAC")
    _common(p)
    _geom_flags(p)
    p.add_argument("--state", choices=[s.value for s in ElectricalState])
    p.add_argument("--modes", type=int, default=20)
    p.add_argument("--recipe", help="dimension recipe JSON from synth-dims")
    p.set_defaults(fn=cmd_modal)

    p = sub.add_parser("kt2", help="coupling of one design or a t_Al / W sweep")
    _common(p)
    _geom_flags(p, "tfe2")
    p.set_defaults(t_aln="1um")
    p.add_argument("--base", choices=("lfe", "tfe2"), help="start from the 24 GHz base design")
    p.add_argument("--w-scale", dest="w_scale", help="pitch multipliers of the base design, e.g. 0.75:1.25:0.0125")
    p.add_argument("--energy", action="store_true", help="also report the energy-integral estimate")
    p.set_defaults(fn=cmd_kt2)

    p = sub.add_parser("qbudget", help="combine loss channels into a total Q")
    _common(p)
    for name in ("anchor", "interface", "electrical", "dielectric", "intrinsic"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--material", dest="material_q", type=float, help="material-limited Q")
    p.set_defaults(fn=cmd_qbudget)

    p = sub.add_parser("mbvd", help="MBVD model, admittance grid and one-port export")
    _common(p)
    p.add_argument("--fs", required=True)
    p.add_argument("--kt2", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--c0")
    p.add_argument("--z-target", dest="z_target")
    p.add_argument("--rs", default="0")
    p.add_argument("--points", type=int, default=2001)
    p.set_defaults(fn=cmd_mbvd)

    for name, fn, helptext in (("filter", cmd_filter, "ladder filter response, BW table or IL versus Q"),
                               ("bank", cmd_bank, "contiguous filter bank")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--scheme", default="tfe2")
        p.add_argument("--kt2", type=float)
        p.add_argument("--q", type=float, default=750.0)
        p.add_argument("--z0", type=float, default=50.0)
        p.add_argument("--order", type=int, default=3, help="number of series/shunt L-sections")
        p.add_argument("--shunt-ratio", dest="shunt_ratio", type=float, default=1.0,
                       help="shunt C0 relative to series C0")
        if name == "filter":
            p.add_argument("--f", default="24GHz", help="center frequency or list for a BW table")
            p.add_argument("--q-list", dest="q_list", help="Q values for an IL-versus-Q table")
        else:
            p.add_argument("--f-start", dest="f_start", default="23.8GHz", help="lower edge of the first filter")
            p.add_argument("--n", type=int, default=5)
        p.set_defaults(fn=fn)

    p = sub.add_parser("synth-dims", help="similarity-scaled dimensions for target frequencies")
    _common(p)
    p.add_argument("--scheme", required=True)
    p.add_argument("--f", required=True, help="target frequency or list")
    p.add_argument("--calibration", choices=("table", "fem"), default="table")
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(fn=cmd_synth_dims)

    p = sub.add_parser("sensitivity", help="frequency shift versus relative AlN thickness change")
    _common(p)
    p.add_argument("--t-aln", dest="t_aln", default="1um")
    p.add_argument("--w", default="1um")
    p.add_argument("--delta", default="-0.05,-0.02,-0.01,0,0.01,0.02,0.05")
    p.set_defaults(fn=cmd_sensitivity)

    p = sub.add_parser("cor-vs-baw", help="COM and thickness-mode frequencies versus AlN thickness")
    _common(p)
    p.add_argument("--t-aln", dest="t_aln", default="200:1000:100nm")
    p.set_defaults(fn=cmd_cor_vs_baw)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("fn", "out")}
    try:
        out = Writer(Path(args.out), args.format)
        try:
            args.fn(args, out)
        finally:
            out.manifest(args.command, config, args.materials)
    except (ConfigError, MaterialError, GeometryError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SpuriousOnly as exc:
        print(f"spurious only: {exc}", file=sys.stderr)
        return EXIT_SPURIOUS
    return 0


if __name__ == "__main__":
    sys.exit(main())

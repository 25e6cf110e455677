"""Deterministic file I/O: structure TOML files, trajectory CSV, JSON reports.

Floats are rendered with ``repr`` (shortest round-trip form) and JSON keys
are sorted, so identical inputs produce byte-identical payloads.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .poly import format_poly, parse_poly
from .structures import SRStructure
from .vfield import PolyVecField

_DATA_DIR = Path(__file__).parent / "data"
STRUCTURES_DIR = _DATA_DIR / "structures"
SCENARIOS_DIR = _DATA_DIR / "scenarios"


# ---------------------------------------------------------------------------
# Structure files
# ---------------------------------------------------------------------------

def load_structure_toml(path):
    """Read a structure definition: dim, optional weights, frame literals."""
    with open(path, "rb") as fh:
        doc = _toml.load(fh)
    dim = int(doc["dim"])
    weights = doc.get("weights")
    frame = []
    for literals in doc["frame"]:
        if len(literals) != dim:
            raise ValueError(f"frame field needs {dim} components in {path}")
        frame.append(PolyVecField([parse_poly(text, dim) for text in literals]))
    name = doc.get("name") or Path(path).stem
    return SRStructure(frame, weights=weights, name=name)


def save_structure_toml(S, path):
    lines = []
    if S.name:
        lines.append(f'name = "{S.name}"')
    lines.append(f"dim = {S.dim}")
    if S.weights is not None:
        lines.append(f"weights = [{', '.join(str(w) for w in S.weights)}]")
    lines.append("frame = [")
    for field in S.frame:
        comps = ", ".join(f'"{format_poly(c)}"' for c in field.components)
        lines.append(f"    [{comps}],")
    lines.append("]")
    Path(path).write_text("\n".join(lines) + "\n")


def builtin_structure_names():
    return sorted(p.stem for p in STRUCTURES_DIR.glob("*.toml"))


def load_builtin_structure(name):
    path = STRUCTURES_DIR / f"{name}.toml"
    if not path.exists():
        raise FileNotFoundError(f"no builtin structure named {name!r}")
    return load_structure_toml(path)


def builtin_scenario_path(name):
    path = SCENARIOS_DIR / f"{name}.toml"
    return path if path.exists() else None


# ---------------------------------------------------------------------------
# CSV / JSON writers
# ---------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_trajectory_csv(traj, path):
    """Columns: t, x_1..x_n, p_1..p_n, u_1, u_2, h_1comp, h_2comp, detA,
    traceA, goh_residual."""
    n = traj.X.shape[1]
    header = (["t"] + [f"x_{i + 1}" for i in range(n)]
              + [f"p_{i + 1}" for i in range(n)]
              + ["u_1", "u_2", "h_1comp", "h_2comp", "detA", "traceA",
                 "goh_residual"])
    rows = []
    for i in range(len(traj.times)):
        det = float(np.linalg.det(traj.A[i]))
        tr = float(np.trace(traj.A[i]))
        rows.append([traj.times[i], *traj.X[i], *traj.P[i], *traj.U[i],
                     *traj.H[i], det, tr, traj.goh_residuals[i]])
    write_csv(path, header, rows)


def write_phase_csv(path_obj, path):
    """Columns: s, rho, theta_unwrapped, alpha, beta, zeta, f, g."""
    header = ["s", "rho", "theta_unwrapped", "alpha", "beta", "zeta", "f", "g"]
    rows = np.column_stack([path_obj.s, path_obj.rho, path_obj.theta,
                            path_obj.alpha, path_obj.beta, path_obj.zeta,
                            path_obj.f, path_obj.g])
    write_csv(path, header, rows)


def write_controls_csv(times, controls, path):
    """Columns: t, u1, u2."""
    rows = np.column_stack([times, controls])
    write_csv(path, ["t", "u1", "u2"], rows)


class _ReportEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        if hasattr(o, "__dict__"):
            return o.__dict__
        return super().default(o)


def write_json(obj, path):
    text = json.dumps(obj, cls=_ReportEncoder, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")

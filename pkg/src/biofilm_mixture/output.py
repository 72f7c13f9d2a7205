"""Writers for nodal fields and run manifests.

Output is deterministic: values are printed with 17 significant digits and
no timestamps are embedded, so equal runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import BiofilmError

FIELD_COLUMNS = ("x", "z", "phi_l", "phi_b", "p", "c", "vbx", "vbz", "vlx", "vlz")
HISTORY_COLUMNS = (
    "iteration", "dv_l", "dphi_l", "dp", "max_div_vl", "max_vn", "sign_policy",
    "phi_l_min", "phi_l_max", "c_min", "c_max", "incompressibility", "picard_iterations",
)


def _g(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return "nan"
    return "%.17g" % f


def state_columns(state) -> dict[str, np.ndarray]:
    g = state.grid
    return {
        "x": g.X,
        "z": g.Z,
        "phi_l": state.phi_l.values,
        "phi_b": state.phi_b.values,
        "p": state.p.values,
        "c": state.c.values,
        "vbx": state.v_b.x,
        "vbz": state.v_b.z,
        "vlx": state.v_l.x,
        "vlz": state.v_l.z,
    }


def fields_csv(state) -> str:
    cols = state_columns(state)
    flat = [np.asarray(cols[k]).reshape(-1) for k in FIELD_COLUMNS]
    lines = [",".join(FIELD_COLUMNS)]
    for row in zip(*flat):
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"


def fields_vtk(state, title: str = "biofilm quasi-stationary state") -> str:
    """Legacy ASCII STRUCTURED_GRID with every field as point data."""
    g = state.grid
    nx1, nz1 = g.shape
    cols = state_columns(state)
    # VTK point order runs fastest in the first dimension (x)
    X = np.asarray(g.X).T.reshape(-1)
    Z = np.asarray(g.Z).T.reshape(-1)
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {nx1} {nz1} 1",
        f"POINTS {nx1 * nz1} double",
    ]
    out += ["%.17g %.17g 0" % (a, b) for a, b in zip(X, Z)]
    out.append(f"POINT_DATA {nx1 * nz1}")
    for name in ("phi_l", "phi_b", "p", "c"):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += ["%.17g" % v for v in np.asarray(cols[name]).T.reshape(-1)]
    for name, (a, b) in (("v_b", ("vbx", "vbz")), ("v_l", ("vlx", "vlz"))):
        out.append(f"VECTORS {name} double")
        ax = np.asarray(cols[a]).T.reshape(-1)
        bz = np.asarray(cols[b]).T.reshape(-1)
        out += ["%.17g %.17g 0" % (u, w) for u, w in zip(ax, bz)]
    return "\n".join(out) + "\n"


def history_csv(history: Sequence[dict]) -> str:
    extra = sorted({k for rec in history for k in rec} - set(HISTORY_COLUMNS))
    cols = list(HISTORY_COLUMNS) + extra
    lines = [",".join(cols)]
    for rec in history:
        lines.append(",".join(_g(rec[k]) if k in rec else "" for k in cols))
    return "\n".join(lines) + "\n"


def table_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines += [",".join(_g(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _write(root: Path, rel: str, text: str) -> dict:
    path = root / rel
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path.write_bytes(data)
    except OSError as exc:
        raise BiofilmError(f"cannot write {path}: {exc}") from exc
    return {"path": rel, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()}


def write_text(directory, name: str, text: str) -> dict:
    return _write(Path(directory), name, text)


def write_fields(state, directory, formats: Sequence[str] = ("csv",), subdir: str = "") -> list[dict]:
    """Write the nodal fields and the iteration history; return manifest entries.

    Paths in the entries are relative to ``directory``.
    """
    d = Path(directory)
    pre = f"{subdir}/" if subdir else ""
    entries = []
    if "csv" in formats:
        entries.append(_write(d, f"{pre}fields.csv", fields_csv(state)))
    if "vtk" in formats:
        entries.append(_write(d, f"{pre}fields.vtk", fields_vtk(state)))
    entries.append(_write(d, f"{pre}diagnostics.csv", history_csv(state.history)))
    return entries


def write_manifest(directory, entries: list[dict], meta: dict | None = None) -> dict:
    """Write ``manifest.json`` listing every file with its size and digest."""
    files = sorted(entries, key=lambda e: e["path"])
    manifest = {"files": files}
    if meta:
        manifest["meta"] = meta
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _write(Path(directory), "manifest.json", text)
    manifest["digest"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return manifest

"""CSV and JSON serialization of profiles, fields and estimate records.

Numbers are written with ``repr`` so that files round-trip exactly and do not
depend on the locale. Every data file ``name.csv`` has a header ``name.json``.
"""

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .domains import GridField, PlanarGrid, RadialBall, RadialProfile
from .exceptions import ParameterError, ShapeMismatchError
from .functionals import ConventionConstants


def _fmt(x):
    return repr(float(x))


def _write_rows(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    return header, data


def dump_json(obj, path=None):
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def mask_checksum(grid):
    """SHA-256 of the node mask and arm offsets."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(grid.mask, dtype=np.int8).tobytes())
    h.update(np.ascontiguousarray(grid.offsets, dtype="<f8").tobytes())
    return h.hexdigest()


def profile_header(u):
    return {
        "kind": "radial",
        "n": u.n,
        "R": float(u.ball.R),
        "grid_length": int(u.ball.size),
        "convention": ConventionConstants(u.n).as_dict(),
    }


def field_header(f):
    g = f.grid
    ny, nx = g.shape
    return {
        "kind": "planar",
        "n": 1,
        "h": float(g.h),
        "bounds": [float(g.x0), float(g.x0 + (nx - 1) * g.h), float(g.y0), float(g.y0 + (ny - 1) * g.h)],
        "shape": [int(ny), int(nx)],
        "shape_kind": g.shape_kind,
        "geometry": [float(x) for x in g.geometry],
        "mask_checksum": mask_checksum(g),
        "potential": bool(f.potential),
        "convention": ConventionConstants(1).as_dict(),
    }


def write_profile(u, path):
    """Write ``path`` (CSV ``rho, value``) and its JSON header next to it."""
    path = Path(path)
    _write_rows(path, ["rho", "value"], zip(u.ball.rho_grid, u.v))
    dump_json(profile_header(u), path.with_suffix(".json"))
    return path


def read_profile(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    cols, data = _read_rows(path)
    if cols != ["rho", "value"] or data.shape[0] != header["grid_length"]:
        raise ShapeMismatchError("profile CSV does not match its header")
    return RadialProfile(RadialBall(header["n"], header["R"], data[:, 0]), data[:, 1])


def write_field(f, path):
    """Write ``path`` (CSV ``x, y, value`` for every node) and its JSON header."""
    path = Path(path)
    X, Y = f.grid.coordinates
    _write_rows(path, ["x", "y", "value"], zip(X.ravel(), Y.ravel(), f.values.ravel()))
    dump_json(field_header(f), path.with_suffix(".json"))
    return path


def read_field(path, grid):
    """Read a field written by :func:`write_field` onto ``grid`` (checksum verified)."""
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if header["mask_checksum"] != mask_checksum(grid):
        raise ShapeMismatchError("grid mask checksum does not match the file header")
    _, data = _read_rows(path)
    return GridField(grid, data[:, 2].reshape(grid.shape), potential=header["potential"])


def write(obj, path):
    """Dispatch on :class:`RadialProfile` or :class:`GridField`."""
    if isinstance(obj, RadialProfile):
        return write_profile(obj, path)
    if isinstance(obj, GridField):
        return write_field(obj, path)
    raise ParameterError(f"cannot serialize {type(obj).__name__}")


SUMMARY_COLUMNS = ("name", "params", "estimate", "extrapolated", "label", "verdict", "resolutions")


def records_jsonl(records, path=None):
    """One JSON object per line, in the order given."""
    text = "".join(json.dumps(r.as_dict(), sort_keys=True) + "\n" for r in records)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def records_csv(records, path=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for r in records:
        d = r.as_dict()
        writer.writerow(
            [
                d["name"],
                json.dumps(d["params"], sort_keys=True),
                repr(d["estimate"]),
                repr(d["extrapolated"]),
                d["label"],
                "pass" if d["verdict"] else "fail",
                " ".join(str(x) for x in d["resolutions"]),
            ]
        )
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text

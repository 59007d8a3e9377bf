"""File formats.

Datasets are CSV with header ``y,x1,...,xp`` and values written at 17
significant digits so they round-trip exactly.  Latent swiss-roll
coordinates go to a ``t,h`` sidecar next to the data file.

Model files are zip archives holding ``manifest.json`` (format version,
centering mean, member table, run manifest) and ``.npy`` arrays for the
centering vector, centered response and per-member compressed designs and
solve vectors.  Entries are written with a fixed timestamp so identical
models produce identical bytes.
"""

from __future__ import annotations

import csv
import io as _io
import json
import zipfile
from pathlib import Path

import numpy as np

from . import compress
from .ensemble import EnsembleModel, Member, MemberConfig
from .errors import ConfigError, DataError
from .simdata import Centering, Dataset

MODEL_FORMAT = "cgpr-model"
MODEL_VERSION = 1
FLOAT_FMT = "%.17g"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def latent_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".latent.csv")


def manifest_path(path):
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_dataset(path, ds: Dataset, write_latent=True):
    header = ",".join(["y"] + [f"x{j + 1}" for j in range(ds.p)])
    np.savetxt(path, np.column_stack([ds.y, ds.X]), delimiter=",", fmt=FLOAT_FMT,
               header=header, comments="")
    if write_latent and ds.latent is not None:
        np.savetxt(latent_path(path), ds.latent, delimiter=",", fmt=FLOAT_FMT, header="t,h", comments="")


def _locate_bad_cell(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                return f"line {lineno}: expected {len(header)} fields, found {len(row)}"
            for col, cell in enumerate(row):
                try:
                    float(cell)
                except ValueError:
                    return f"line {lineno}, column {col + 1} ({header[col]}): cannot parse {cell!r}"
    return "unknown location"


def read_dataset(path, require_y=True) -> Dataset:
    """Read a dataset CSV.

    The ``y`` column may be omitted when ``require_y`` is False (prediction
    inputs); the returned response is then all zeros, see :func:`csv_has_y`.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in header]
    has_y = header[0] == "y"
    xcols = header[1:] if has_y else header
    expected = [f"x{j + 1}" for j in range(len(xcols))]
    if xcols != expected or (require_y and not has_y):
        raise DataError(f"{path}: header must be y,x1,...,xp")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError:
        raise DataError(f"{path}: {_locate_bad_cell(path)}") from None
    if data.shape[1] != len(header):
        raise DataError(f"{path}: expected {len(header)} columns, found {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        r, c = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}: non-finite value at line {r + 2}, column {c + 1}")
    latent = None
    lp = latent_path(path)
    if lp.exists():
        latent = np.loadtxt(lp, delimiter=",", skiprows=1, ndmin=2)
    if has_y:
        return Dataset(data[:, 1:], data[:, 0], latent)
    return Dataset(data, np.zeros(data.shape[0]), latent)


def csv_has_y(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [""])
    return header[0].strip() == "y"


def write_predictions(path, mean, lower, upper):
    np.savetxt(path, np.column_stack([mean, lower, upper]), delimiter=",", fmt=FLOAT_FMT,
               header="mean,lower,upper", comments="")


def _add_array(zf, name, arr):
    buf = _io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    _add_bytes(zf, name, buf.getvalue())


def _add_bytes(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_model(path, model: EnsembleModel, run_manifest=None):
    members = []
    for i, (mem, w) in enumerate(zip(model.members, model.weights)):
        c = mem.config
        members.append({
            "index": c.index, "m": c.m, "seed": int(c.seed), "mode": c.mode, "lam": c.lam,
            "log_ml": mem.log_ml, "weight": float(w), "b": mem.b, "regenerations": mem.regenerations,
        })
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "mode": model.mode,
        "n": model.n,
        "p": model.p,
        "y_mean": model.centering.y_mean,
        "phi": None if model.phi_spec is None else model.phi_spec.to_dict(),
        "per_member_phi": model.per_member_phi,
        "members": members,
        "dropped": model.dropped,
        "run": run_manifest or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _add_bytes(zf, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode())
        _add_array(zf, "x_means.npy", model.centering.x_means)
        _add_array(zf, "y.npy", model.y)
        for i, mem in enumerate(model.members):
            _add_array(zf, f"member{i:05d}_Z.npy", mem.Z)
            _add_array(zf, f"member{i:05d}_ysolve.npy", mem.y_solve)


def _read_array(zf, name):
    with zf.open(name) as fh:
        return np.lib.format.read_array(_io.BytesIO(fh.read()), allow_pickle=False)


def load_model(path) -> EnsembleModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such model file")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile:
        raise DataError(f"{path}: not a model file") from None
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise DataError(f"{path}: model manifest missing") from None
        if manifest.get("format") != MODEL_FORMAT:
            raise DataError(f"{path}: not a {MODEL_FORMAT} file")
        if manifest.get("version") != MODEL_VERSION:
            raise ConfigError(
                f"{path}: model format version {manifest.get('version')} is not supported "
                f"(expected {MODEL_VERSION})"
            )
        members = []
        for i, rec in enumerate(manifest["members"]):
            cfg = MemberConfig(rec["index"], rec["m"], rec["seed"], rec["mode"], rec["lam"])
            members.append(Member(cfg, rec["log_ml"], rec["b"], _read_array(zf, f"member{i:05d}_Z.npy"),
                                  _read_array(zf, f"member{i:05d}_ysolve.npy"), rec.get("regenerations", 0)))
        phi = manifest["phi"]
        return EnsembleModel(
            mode=manifest["mode"], n=manifest["n"], p=manifest["p"], members=members,
            weights=np.array([r["weight"] for r in manifest["members"]]),
            centering=Centering(manifest["y_mean"], _read_array(zf, "x_means.npy")),
            y=_read_array(zf, "y.npy"),
            phi_spec=None if phi is None else compress.ProjectionSpec.from_dict(phi),
            per_member_phi=manifest["per_member_phi"], dropped=manifest["dropped"],
        )

"""File formats for problems, models, datasets, and simulation fields.

Everything numeric rides in NPZ archives: each named section is a standard
NPY member whose header records shape, C order, and the little-endian
float64 dtype, so files are self-describing and round-trip bit-exact.
Scalar metadata (seeds, flags, manifests) is stored as a JSON string member
named "meta".  SHA-256 checksums over the raw payload bytes tie models to
the datasets they were fitted on.
"""

import hashlib
import json

import numpy as np

from .adapter import GeneralQp
from .boxqp import BoxQpProblem, StructuredHessian
from .koopman import KoopmanModel, LiftKind, LiftSpec, SnapshotDataset

_F64 = np.dtype("<f8")


def _pin(array):
    """Force the on-disk layout: C-contiguous little-endian float64."""
    return np.ascontiguousarray(array, dtype=_F64)


def checksum(*arrays):
    """SHA-256 over the concatenated raw bytes of the pinned arrays."""
    digest = hashlib.sha256()
    for a in arrays:
        digest.update(_pin(a).tobytes())
    return digest.hexdigest()


def _write(path, meta, **arrays):
    payload = {name: _pin(a) for name, a in arrays.items()}
    payload["meta"] = np.asarray(json.dumps(meta))
    np.savez(path, **payload)


def _read(path):
    with np.load(path, allow_pickle=False) as archive:
        arrays = {name: archive[name] for name in archive.files if name != "meta"}
        meta = json.loads(str(archive["meta"])) if "meta" in archive.files else {}
    return arrays, meta


def save_problem(path, problem, meta=None):
    """Write a BoxQpProblem; structured Hessians keep their block form."""
    meta = dict(meta or {})
    if problem.is_structured:
        sh = problem.structure
        meta["form"] = "structured"
        meta["rho"] = sh.rho
        _write(path, meta, linear=problem.linear, F=sh.F, M11=sh.M11,
               wx_diag=sh.wx_diag)
    else:
        meta["form"] = "dense"
        _write(path, meta, linear=problem.linear, hessian=problem.dense_hessian())


def load_problem(path, validate=True):
    arrays, meta = _read(path)
    if meta.get("form") == "structured":
        hessian = StructuredHessian(rho=float(meta["rho"]), F=arrays["F"],
                                    M11=arrays["M11"], wx_diag=arrays["wx_diag"])
    else:
        hessian = arrays["hessian"]
    return BoxQpProblem(hessian, arrays["linear"], validate=validate), meta


def save_dataset(path, dataset, manifest=None):
    """Write snapshot data (X, U, Xp) plus its generation manifest."""
    _write(path, dict(manifest or {}), X=dataset.X, U=dataset.U, Xp=dataset.Xp)


def load_dataset(path):
    arrays, meta = _read(path)
    return SnapshotDataset(X=arrays["X"], U=arrays["U"], Xp=arrays["Xp"]), meta


def dataset_checksum(dataset):
    return checksum(dataset.X, dataset.U, dataset.Xp)


def save_model(path, model, meta=None):
    """Write a fitted predictor: A, B, C, lift centers, fit provenance."""
    meta = dict(meta or {})
    meta.update({
        "n_x": model.lift.n_x,
        "lift_kind": model.lift.kind.value,
        "fit_residual": model.fit_residual,
        "rank_deficient": model.rank_deficient,
        "data_checksum": model.data_checksum,
    })
    _write(path, meta, A=model.A, B=model.B, C=model.C,
           centers=model.lift.centers)


def load_model(path):
    arrays, meta = _read(path)
    spec = LiftSpec(n_x=int(meta["n_x"]), centers=arrays["centers"],
                    kind=LiftKind(meta["lift_kind"]))
    residual = meta.get("fit_residual")
    return KoopmanModel(
        A=arrays["A"], B=arrays["B"], C=arrays["C"], lift=spec,
        fit_residual=None if residual is None else float(residual),
        rank_deficient=bool(meta.get("rank_deficient", False)),
        data_checksum=meta.get("data_checksum"),
    )


def save_general_qp(path, qp, meta=None):
    _write(path, dict(meta or {}), Q=qp.Q, q=qp.q, A=qp.A,
           y_min=qp.y_min, y_max=qp.y_max, x_min=qp.x_min, x_max=qp.x_max)


def load_general_qp(path):
    arrays, meta = _read(path)
    return GeneralQp(**{k: arrays[k] for k in
                        ("Q", "q", "A", "y_min", "y_max", "x_min", "x_max")}), meta


def save_field(path, times, field, nodes, meta=None):
    """Write a space-time field y(t, x) with its time and node axes."""
    _write(path, dict(meta or {}), times=times, field=field, nodes=nodes)


def load_field(path):
    arrays, meta = _read(path)
    return arrays["times"], arrays["field"], arrays["nodes"], meta

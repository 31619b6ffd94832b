"""Deterministic file I/O: data CSVs, result JSON, atomic writes.

Every floating-point value is printed with 17 significant digits so the
binary value round-trips exactly; output files are written to a
temporary sibling and renamed into place.  Each file carries a single
generation timestamp (a JSON field, or a leading comment line in CSVs)
and is otherwise byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from datetime import datetime, timezone

import numpy as np

from .errors import UsageError
from .kernels import RkhsFunction, parse_kernel
from .solver import Dataset, FitResult


def fmt(value) -> str:
    """17-significant-digit decimal form of a float (exact round trip)."""
    return format(float(value), ".17g")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-kbreg-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _serialize(value, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v != v or v in (float("inf"), float("-inf")):
            return "null"
        return fmt(v)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{inner}{_serialize(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_serialize(v, indent + 1)}"
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dump_json(path: str, payload: dict, stamp: bool = True) -> None:
    """Write a JSON object with 17-digit floats, atomically."""
    body = dict(payload)
    if stamp:
        body = {"generated_at": timestamp(), **body}
    _atomic_write(path, _serialize(body, 0) + "\n")


def load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_csv(path: str, header: list[str], rows, stamp: bool = True) -> None:
    """Write a CSV with LF endings and 17-digit floats, atomically.

    The generation timestamp is isolated in a leading comment line so
    the remainder is byte-deterministic.
    """
    import io as _io

    buf = _io.StringIO()
    if stamp:
        buf.write(f"# generated_at={timestamp()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    _atomic_write(path, buf.getvalue())


def read_data_csv(path: str) -> Dataset:
    """Read a data CSV with header x1,...,xd,y."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = [row for row in csv.reader(handle)
                if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise UsageError(f"{path}: empty data file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header[-1] != "y" or header[:-1] != [f"x{i + 1}" for i in range(d)]:
        raise UsageError(
            f"{path}: expected header x1,...,xd,y, got {','.join(header)}"
        )
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric data entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != d + 1 or data.shape[0] < 1:
        raise UsageError(f"{path}: malformed data block")
    return Dataset(data[:, :d], data[:, d])


def write_data_csv(path: str, dataset: Dataset, stamp: bool = False) -> None:
    header = [f"x{i + 1}" for i in range(dataset.dim)] + ["y"]
    rows = [list(x) + [y] for x, y in zip(dataset.xs, dataset.ys)]
    write_csv(path, header, rows, stamp=stamp)


def fit_to_dict(result: FitResult, loss_spec: str, kernel_spec: str) -> dict:
    return {
        "kind": "fit",
        "loss": loss_spec,
        "kernel": kernel_spec,
        "lambda": result.lam,
        "n": int(result.f_hat.centers.shape[0]),
        "dim": int(result.f_hat.dim),
        "objective": result.objective,
        "stationarity_residual": result.stationarity_residual,
        "norm_h": result.norm_h,
        "prop8_delta": result.prop8_delta,
        "solver": {
            "kind": result.solver_kind,
            "iterations": int(result.iterations),
            "converged": bool(result.converged),
        },
        "centers": result.f_hat.centers,
        "coefficients": result.f_hat.coefficients,
    }


def load_fit(path: str) -> tuple[RkhsFunction, dict]:
    """Rebuild the fitted expansion from a fit JSON file."""
    payload = load_json(path)
    kernel = parse_kernel(payload["kernel"])
    f_hat = RkhsFunction(kernel, np.array(payload["centers"], dtype=float),
                         np.array(payload["coefficients"], dtype=float))
    return f_hat, payload

"""File formats: channel and input specs (JSON), result tables (CSV / JSON).

Channel spec JSON::

    {"x_size": 2, "z_size": 2, "s_size": 2, "d": 0.1, "s0": 0,
     "kernel": [[[[...]]]]}          # nested lists indexed [s_prev][x][z][s_next]

Markov input JSON: ``{"m": 1, "q": [[...], ...]}`` with one row per context.
Block process JSON: ``{"n": 2, "x_size": 2, "pmf": [...], "shift": "uniform"}``.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import logging
import os
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .channel_model import ChannelError, ChannelSpec
from .input_models import BlockProcessSpec, InputModelError, MarkovInputSpec

log = logging.getLogger(__name__)

LOAD_ROW_TOL = 1e-9
CSV_VERSION = "delfsc-csv v1"
ESTIMATE_COLUMNS = (
    "m", "n", "k", "chains", "seed",
    "rate_side_info", "penalty", "lower_bound", "std_error", "wall_time_s",
)
BUILTIN_PREFIX = "builtin:"


class SpecError(ValueError):
    """A spec file failed validation; the message names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# -- low-level ------------------------------------------------------------------------


def atomic_write(path, data: str | bytes) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fingerprint(obj) -> str:
    """sha256 of the canonical JSON form (or of raw bytes)."""
    data = obj if isinstance(obj, bytes) else dumps(obj).encode()
    return hashlib.sha256(data).hexdigest()


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- channel specs ------------------------------------------------------------------


def channel_spec_to_json(spec: ChannelSpec) -> dict:
    return {
        "x_size": spec.x_size,
        "z_size": spec.z_size,
        "s_size": spec.s_size,
        "d": float(spec.d),
        "s0": int(spec.s0),
        "kernel": spec.kernel.tolist(),
    }


def _require(data: dict, field: str):
    if field not in data:
        raise SpecError(field, "missing field")
    return data[field]


def _as_int(data, field, low=None):
    val = _require(data, field)
    if isinstance(val, bool) or not isinstance(val, int):
        raise SpecError(field, f"expected an integer, got {val!r}")
    if low is not None and val < low:
        raise SpecError(field, f"must be >= {low}, got {val}")
    return val


def channel_spec_from_json(data: dict) -> tuple[ChannelSpec, list[str]]:
    """Validate and build; returns the spec and any adjustment notes."""
    if not isinstance(data, dict):
        raise SpecError("<root>", "expected a JSON object")
    x_size = _as_int(data, "x_size", 1)
    z_size = _as_int(data, "z_size", 1)
    s_size = _as_int(data, "s_size", 1)
    d = _require(data, "d")
    if isinstance(d, bool) or not isinstance(d, (int, float)) or not 0.0 <= d <= 1.0:
        raise SpecError("d", f"must be a number in [0, 1], got {d!r}")
    s0 = _as_int(data, "s0", 0)
    if s0 >= s_size:
        raise SpecError("s0", f"must be < s_size={s_size}, got {s0}")
    try:
        kernel = np.array(_require(data, "kernel"), dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError("kernel", f"not a numeric nested list ({exc})") from None
    want = (s_size, x_size, z_size, s_size)
    if kernel.shape != want:
        raise SpecError("kernel", f"shape {kernel.shape} != [s_prev][x][z][s_next] = {want}")
    if not np.all(np.isfinite(kernel)) or kernel.min() < 0:
        bad = tuple(int(v) for v in np.argwhere(~(kernel >= 0))[0])
        raise SpecError("kernel", f"negative or non-finite entry at {list(bad)}")
    notes = []
    sums = kernel.sum(axis=(2, 3))
    for sp, x in np.ndindex(*sums.shape):
        dev = abs(sums[sp, x] - 1.0)
        if dev > LOAD_ROW_TOL:
            raise SpecError(
                f"kernel[s'={sp}][x={x}]", f"row sums to {sums[sp, x]!r}, not 1 within {LOAD_ROW_TOL}"
            )
        if dev > 1e-12:
            kernel[sp, x] /= sums[sp, x]
            notes.append(f"renormalized kernel row (s'={sp}, x={x}); deviation {dev:.3e}")
    try:
        spec = ChannelSpec(float(d), kernel, s0)
    except ChannelError as exc:
        raise SpecError("kernel", str(exc)) from None
    return spec, notes


# -- input specs ---------------------------------------------------------------------


def markov_spec_to_json(spec: MarkovInputSpec) -> dict:
    return spec.to_json()


def markov_spec_from_json(data: dict) -> MarkovInputSpec:
    m = _as_int(data, "m", 0)
    try:
        q = np.array(_require(data, "q"), dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError("q", f"not a numeric table ({exc})") from None
    if "x_size" in data and q.ndim == 2 and q.shape[1] != data["x_size"]:
        raise SpecError("x_size", f"q has {q.shape[1]} columns, x_size={data['x_size']}")
    try:
        return MarkovInputSpec(m, q)
    except InputModelError as exc:
        raise SpecError("q", str(exc)) from None


def block_spec_from_json(data: dict) -> BlockProcessSpec:
    n = _as_int(data, "n", 1)
    x_size = _as_int(data, "x_size", 1)
    try:
        pmf = np.array(_require(data, "pmf"), dtype=float)
        return BlockProcessSpec(n, pmf, x_size, data.get("shift", "uniform"))
    except (InputModelError, TypeError, ValueError) as exc:
        raise SpecError("pmf", str(exc)) from None


# -- loading ------------------------------------------------------------------------


def _read_json(path) -> dict:
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        res = resources.files("delfsc") / "specs" / f"{name}.json"
        if not res.is_file():
            raise SpecError("<path>", f"no built-in spec named {name!r}; have {builtin_names()}")
        raw = res.read_bytes()
    else:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise SpecError("<path>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecError("<json>", f"invalid JSON in {path}: {exc}") from None
    log.info("loaded %s sha256=%s", path, fingerprint(raw))
    return data


def load_spec(path) -> ChannelSpec | MarkovInputSpec | BlockProcessSpec:
    """Load any spec file, telling the kinds apart by their fields."""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise SpecError("<root>", "expected a JSON object")
    if "kernel" in data:
        spec, notes = channel_spec_from_json(data)
        for note in notes:
            log.warning("%s: %s", path, note)
        return spec
    if "q" in data:
        return markov_spec_from_json(data)
    if "pmf" in data:
        return block_spec_from_json(data)
    raise SpecError("<root>", "not a channel (kernel), Markov input (q) or block (pmf) spec")


def load_channel_spec(path) -> ChannelSpec:
    spec = load_spec(path)
    if not isinstance(spec, ChannelSpec):
        raise SpecError("kernel", f"{path} is not a channel spec")
    return spec


def save_spec(spec, path) -> None:
    if isinstance(spec, ChannelSpec):
        data = channel_spec_to_json(spec)
    else:
        data = spec.to_json()
    atomic_write(path, dumps(data))


def builtin_names() -> list[str]:
    root = resources.files("delfsc") / "specs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin_spec(name: str) -> ChannelSpec:
    return load_channel_spec(BUILTIN_PREFIX + name)


# -- result tables -------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(columns, rows, header: bool = True) -> str:
    buf = _io.StringIO()
    if header:
        buf.write(f"# {CSV_VERSION} columns={','.join(columns)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_table(path, columns, rows, fmt: str = "csv", append: bool = False) -> None:
    """Write rows as CSV (versioned header) or as a JSON array.

    ``append`` adds CSV rows to an existing file of the same columns.
    """
    if fmt == "json":
        atomic_write(path, dumps([{c: row.get(c) for c in columns} for row in rows]))
        return
    path = Path(path)
    if append and path.exists():
        existing = path.read_text()
        first = existing.splitlines()[0] if existing else ""
        if first != f"# {CSV_VERSION} columns={','.join(columns)}":
            raise SpecError("--out", f"cannot append: {path} has different columns")
        atomic_write(path, existing + csv_text(columns, rows, header=False))
    else:
        atomic_write(path, csv_text(columns, rows))


def read_table(path) -> list[dict]:
    """Parse a CSV written by :func:`write_table` (values left as strings)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))

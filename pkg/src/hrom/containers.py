"""
On-disk formats for impulse responses, reduced models and evaluation results.

Every container is a JSON header plus, where needed, a raw little-endian
payload next to it with the same stem:

    <stem>.json + <stem>.f32   impulse response (t, i, j), single precision
    <stem>.json + <stem>.f64   reduced model A, B, C, D, row-major, double precision
    <stem>.json                delay matrix, dead-time spec, synthetic ground truth

CSV exports go through pandas.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import DB_FLOOR, FORMAT_VERSION
from .core import DeadTimeSpec, DelayMatrix, MarkovSequence, StateSpaceModel, StructuredModel
from .errors import FormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IR_DTYPE = np.dtype("<f4")
ROM_DTYPE = np.dtype("<f8")

EVAL_COLUMNS = [
    "scenario",
    "mode",
    "r",
    "dofs",
    "erel_db",
    "eest_db",
    "ekc_db",
    "ekw_db",
    "wall_seconds",
]
RESPONSE_COLUMNS = ["omega", "output", "input", "real", "imag", "magnitude_db", "phase"]


def container_stem(path: PathLike) -> Path:
    path = Path(path)
    if path.suffix in (".json", ".f32", ".f64"):
        return path.with_suffix("")
    return path


def _header_path(path: PathLike) -> Path:
    stem = container_stem(path)
    return stem.with_name(stem.name + ".json")


def _payload_path(path: PathLike, suffix: str) -> Path:
    stem = container_stem(path)
    return stem.with_name(stem.name + suffix)


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def _read_json(path: Path, kind: str) -> Dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Header not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})", offset=exc.pos) from exc
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    if data.get("kind") != kind:
        raise FormatError(f"{path}: expected kind {kind!r}, found {data.get('kind')!r}")
    return data


def _positive_int(header: Dict[str, Any], key: str, path: Path) -> int:
    value = header.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise FormatError(f"{path}: header field {key!r} must be a positive integer (got {value!r})")
    return value


def _read_payload(path: Path, dtype: np.dtype, count: int) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"Payload not found: {path}")
    expected = count * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise FormatError(
            f"{path}: payload is {actual} bytes, expected {expected}",
            expected=expected,
            actual=actual,
        )
    values = np.fromfile(path, dtype=dtype)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        offset = int(bad[0]) * dtype.itemsize
        raise FormatError(f"{path}: non-finite value at byte offset {offset}", offset=offset)
    return values


# ---------------------------------------------------------------------------
# Impulse responses
# ---------------------------------------------------------------------------

def ir_payload_size(N: int, p: int, m: int) -> int:
    return IR_DTYPE.itemsize * N * p * m


def write_ir(path: PathLike, h: MarkovSequence) -> Path:
    """Write ``h`` as single precision; returns the header path."""
    header_path = _header_path(path)
    payload_path = _payload_path(path, ".f32")
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "ir",
        "N": h.N,
        "p": h.p,
        "m": h.m,
        "sample_rate": float(h.sample_rate),
        "byte_order": "little",
        "precision": "f32",
    }
    _write_json(header_path, header)
    h.data.astype(IR_DTYPE).tofile(payload_path)
    logger.info("Wrote impulse response N=%d, p=%d, m=%d to %s", h.N, h.p, h.m, header_path)
    return header_path


def read_ir(path: PathLike) -> MarkovSequence:
    header_path = _header_path(path)
    header = _read_json(header_path, "ir")
    N = _positive_int(header, "N", header_path)
    p = _positive_int(header, "p", header_path)
    m = _positive_int(header, "m", header_path)
    if header.get("byte_order") != "little" or header.get("precision") != "f32":
        raise FormatError(
            f"{header_path}: unsupported encoding {header.get('byte_order')!r}/{header.get('precision')!r}"
        )
    rate = header.get("sample_rate")
    if not isinstance(rate, (int, float)) or not rate > 0:
        raise FormatError(f"{header_path}: sample_rate must be positive (got {rate!r})")
    values = _read_payload(_payload_path(path, ".f32"), IR_DTYPE, N * p * m)
    return MarkovSequence(values.reshape(N, p, m), sample_rate=float(rate))


# ---------------------------------------------------------------------------
# Reduced models
# ---------------------------------------------------------------------------

def _matrix_layout(n: int, m: int, p: int) -> Dict[str, Tuple[int, Tuple[int, int]]]:
    shapes = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m)}
    layout = {}
    offset = 0
    for name, shape in shapes.items():
        layout[name] = (offset, shape)
        offset += shape[0] * shape[1] * ROM_DTYPE.itemsize
    return layout


def write_rom(path: PathLike, model: StructuredModel, provenance: Optional[Dict[str, Any]] = None) -> Path:
    """Write a structured ROM; the payload is A, B, C, D back to back."""
    core, spec = model.core, model.spec
    layout = _matrix_layout(core.n, core.m, core.p)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "rom",
        "order": core.n,
        "m": core.m,
        "p": core.p,
        "tau": spec.tau.tolist(),
        "theta": spec.theta.tolist(),
        "residual": spec.residual.tolist(),
        "byte_order": "little",
        "precision": "f64",
        "matrices": {
            name: {"offset": offset, "shape": list(shape)} for name, (offset, shape) in layout.items()
        },
        "provenance": provenance or {},
    }
    header_path = _header_path(path)
    _write_json(header_path, manifest)
    payload = np.concatenate([np.ascontiguousarray(getattr(core, name)).reshape(-1) for name in "ABCD"])
    payload.astype(ROM_DTYPE).tofile(_payload_path(path, ".f64"))
    logger.info("Wrote ROM of order %d (%dx%d) to %s", core.n, core.p, core.m, header_path)
    return header_path


def read_rom(path: PathLike) -> Tuple[StructuredModel, Dict[str, Any]]:
    """Returns the structured model and its provenance record."""
    header_path = _header_path(path)
    manifest = _read_json(header_path, "rom")
    m = _positive_int(manifest, "m", header_path)
    p = _positive_int(manifest, "p", header_path)
    n = manifest.get("order")
    if not isinstance(n, int) or n < 0:
        raise FormatError(f"{header_path}: order must be a non-negative integer (got {n!r})")
    tau, theta = manifest.get("tau", []), manifest.get("theta", [])
    if len(tau) != m:
        raise FormatError(f"{header_path}: tau has {len(tau)} entries, expected m={m}")
    if len(theta) != p:
        raise FormatError(f"{header_path}: theta has {len(theta)} entries, expected p={p}")

    layout = _matrix_layout(n, m, p)
    declared = manifest.get("matrices", {})
    for name, (offset, shape) in layout.items():
        entry = declared.get(name)
        if entry is not None and (entry.get("offset") != offset or list(entry.get("shape", [])) != list(shape)):
            raise FormatError(
                f"{header_path}: matrix {name} declared at {entry} but dims imply offset {offset}, shape {list(shape)}"
            )
    count = sum(shape[0] * shape[1] for _, shape in layout.values())
    values = _read_payload(_payload_path(path, ".f64"), ROM_DTYPE, count)
    mats = {}
    for name, (offset, shape) in layout.items():
        start = offset // ROM_DTYPE.itemsize
        mats[name] = values[start : start + shape[0] * shape[1]].reshape(shape)

    core = StateSpaceModel(mats["A"], mats["B"], mats["C"], mats["D"])
    residual = manifest.get("residual")
    if residual is None:
        residual = np.zeros((p, m), dtype=np.int64)
    spec = DeadTimeSpec(tau, theta, residual)
    return StructuredModel(core, spec), manifest.get("provenance", {})


# ---------------------------------------------------------------------------
# JSON side files
# ---------------------------------------------------------------------------

def write_delays(path: PathLike, delays: DelayMatrix) -> Path:
    header_path = _header_path(path)
    _write_json(
        header_path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "delays",
            "p": delays.p,
            "m": delays.m,
            "n_samples": delays.n_samples,
            "delta": delays.delta.tolist(),
        },
    )
    return header_path


def read_delays(path: PathLike) -> DelayMatrix:
    header_path = _header_path(path)
    data = _read_json(header_path, "delays")
    delta = np.asarray(data.get("delta", []), dtype=np.int64)
    if delta.ndim != 2 or delta.shape != (data.get("p"), data.get("m")):
        raise FormatError(f"{header_path}: delta has shape {delta.shape}, expected ({data.get('p')}, {data.get('m')})")
    return DelayMatrix(delta, n_samples=data.get("n_samples"))


def write_spec(path: PathLike, spec: DeadTimeSpec, mode: str = "dts") -> Path:
    header_path = _header_path(path)
    _write_json(
        header_path,
        {
            "format_version": FORMAT_VERSION,
            "kind": "dead-time-spec",
            "mode": mode,
            "tau": spec.tau.tolist(),
            "theta": spec.theta.tolist(),
            "residual": spec.residual.tolist(),
            "extracted": int(spec.tau.sum() + spec.theta.sum()),
            "total_residual": int(spec.residual.sum()),
        },
    )
    return header_path


def read_spec(path: PathLike) -> Tuple[DeadTimeSpec, str]:
    header_path = _header_path(path)
    data = _read_json(header_path, "dead-time-spec")
    try:
        spec = DeadTimeSpec(data["tau"], data["theta"], data["residual"])
    except KeyError as exc:
        raise FormatError(f"{header_path}: missing field {exc.args[0]!r}") from exc
    return spec, data.get("mode", "dts")


def write_truth(path: PathLike, truth: Dict[str, Any]) -> Path:
    header_path = _header_path(path)
    _write_json(header_path, {"format_version": FORMAT_VERSION, "kind": "truth", **truth})
    return header_path


def read_truth(path: PathLike) -> Dict[str, Any]:
    return _read_json(_header_path(path), "truth")


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

@dataclass
class EvalRecord:
    scenario: str
    mode: str
    r: int
    dofs: int
    erel_db: float
    eest_db: Optional[float] = None
    ekc_db: Optional[float] = None
    ekw_db: Optional[float] = None
    wall_seconds: Optional[float] = None


def _to_csv(frame: pd.DataFrame, path: Optional[PathLike]) -> str:
    text = frame.to_csv(index=False, lineterminator="\r\n")
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            f.write(text)
    return text


def export_eval(records: Iterable[Union[EvalRecord, Dict[str, Any]]], path: Optional[PathLike] = None) -> str:
    """One row per (scenario, mode, r); returns the CSV text and writes it if ``path`` is given."""
    rows: List[Dict[str, Any]] = [asdict(r) if isinstance(r, EvalRecord) else dict(r) for r in records]
    frame = pd.DataFrame(rows, columns=EVAL_COLUMNS)
    return _to_csv(frame, path)


def export_response(omegas: np.ndarray, response: np.ndarray, path: Optional[PathLike] = None) -> str:
    """Long-format frequency response table, one row per (omega, output, input)."""
    omegas = np.asarray(omegas, dtype=np.float64)
    count, p, m = response.shape
    w, i, j = np.meshgrid(np.arange(count), np.arange(p), np.arange(m), indexing="ij")
    values = response[w, i, j].reshape(-1)
    magnitude = np.abs(values)
    with np.errstate(divide="ignore"):
        magnitude_db = np.maximum(20.0 * np.log10(magnitude), DB_FLOOR)
    frame = pd.DataFrame(
        {
            "omega": omegas[w.reshape(-1)],
            "output": i.reshape(-1),
            "input": j.reshape(-1),
            "real": values.real,
            "imag": values.imag,
            "magnitude_db": magnitude_db,
            "phase": np.angle(values),
        },
        columns=RESPONSE_COLUMNS,
    )
    return _to_csv(frame, path)

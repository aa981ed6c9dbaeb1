"""File formats: operator input, instance files, experiment configs and
report outputs.  Floats are written with 17 significant digits so files
round-trip exactly and reruns compare byte for byte."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError, SpecFilterError
from .montecarlo import ExperimentConfig, NoiseSpec
from .sequence_model import ProblemInstance, SingularSystem, build_singular_system

SCHEMA_VERSION = 1


def fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float at 17 significant digits and keys in
    insertion order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def atomic_write(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir, files: dict, command: str) -> Path:
    """Write ``{relative name: bytes}`` then manifest.json listing each
    artifact with its sha256.  Nothing is written until every payload
    has been produced by the caller."""
    out = Path(out_dir)
    entries = []
    for name in sorted(files):
        data = files[name]
        atomic_write(out / name, data)
        entries.append({"path": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    manifest = {"schema_version": SCHEMA_VERSION, "command": command, "artifacts": entries}
    atomic_write(out / "manifest.json", (dumps(manifest) + "\n").encode())
    return out / "manifest.json"


def csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_float(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def json_bytes(obj) -> bytes:
    return (dumps(obj) + "\n").encode()


# ---------------------------------------------------------------------------
# operator input


def read_matrix_csv(path) -> np.ndarray:
    """Row-major matrix: a "rows,cols" line (optionally preceded by the
    literal header ``rows,cols``) followed by the data."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty operator file")
    if lines[0].replace(" ", "").lower() == "rows,cols":
        lines = lines[1:]
    try:
        rows, cols = (int(v) for v in lines[0].split(","))
        values = [float(v) for ln in lines[1:] for v in ln.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed operator CSV ({exc})") from None
    if len(values) != rows * cols:
        raise ConfigError(f"{path}: header says {rows}x{cols} but found {len(values)} values")
    return np.array(values).reshape(rows, cols)


def write_matrix_csv(matrix) -> bytes:
    a = np.asarray(matrix, dtype=float)
    lines = ["rows,cols", f"{a.shape[0]},{a.shape[1]}"]
    lines += [",".join(fmt_float(v) for v in row) for row in a]
    return ("\n".join(lines) + "\n").encode()


def read_operator(path, tolerance: float = 1e-12) -> SingularSystem:
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if set(data) - {"b", "schema_version"} or "b" not in data:
            raise ConfigError(f"{path}: spectrum file must hold exactly {{\"b\": [...]}}")
        return SingularSystem(np.asarray(data["b"], dtype=float))
    return build_singular_system(read_matrix_csv(path), tolerance)


# ---------------------------------------------------------------------------
# instance files

_INSTANCE_KEYS = {"schema_version", "kind", "b", "operator", "x", "sigma", "labels"}


def instance_to_dict(instance: ProblemInstance, labels=None) -> dict:
    if not instance.system.spectrum_only:
        raise SpecFilterError("only spectrum-level instances are serialised inline")
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "instance",
        "b": instance.b.tolist(),
        "x": instance.x.tolist(),
        "sigma": instance.sigma,
        "labels": dict(labels or {}),
    }


def instance_from_dict(d: dict, base: Path | None = None) -> tuple[ProblemInstance, dict]:
    unknown = set(d) - _INSTANCE_KEYS
    if unknown:
        raise ConfigError(f"unknown instance keys: {sorted(unknown)}")
    for key in ("x", "sigma"):
        if key not in d:
            raise ConfigError(f"instance is missing {key!r}")
    if ("b" in d) == ("operator" in d):
        raise ConfigError("instance needs exactly one of 'b' or 'operator'")
    if "operator" in d:
        p = Path(d["operator"])
        system = read_operator(p if p.is_absolute() or base is None else base / p)
    else:
        system = SingularSystem(np.asarray(d["b"], dtype=float))
    return ProblemInstance(np.asarray(d["x"], dtype=float), float(d["sigma"]), system), dict(d.get("labels", {}))


def load_instance(path) -> tuple[ProblemInstance, dict]:
    path = Path(path)
    return instance_from_dict(_read_json(path), path.parent)


def _read_json(path: Path):
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# experiment configs

_CONFIG_KEYS = {"schema_version", "instance", "noise", "xi", "estimators", "replications",
                "seed", "beta", "K", "alpha", "threads"}
_NOISE_KEYS = {"family", "K", "beta"}
_XI_KEYS = {"family", "s", "Kprime", "betaprime", "C", "values", "mode"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse an experiment config; CLI ``overrides`` replace top-level values."""
    path = Path(path)
    d = _read_json(path)
    return config_from_dict(d, path.parent, overrides)


def config_from_dict(d: dict, base: Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    _check_keys(d, _CONFIG_KEYS, "config")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}, got {d.get('schema_version')!r}")
    d = dict(d)
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "instance" not in d:
        raise ConfigError("config is missing 'instance'")
    inst_spec = d["instance"]
    if isinstance(inst_spec, str):
        p = Path(inst_spec)
        instance, labels = load_instance(p if p.is_absolute() or base is None else base / p)
    else:
        instance, labels = instance_from_dict(inst_spec, base)

    noise_d = d.get("noise", {})
    _check_keys(noise_d, _NOISE_KEYS, "noise")
    noise = NoiseSpec(noise_d.get("family", "gaussian"), instance.sigma,
                      noise_d.get("K"), noise_d.get("beta"))

    xi = xi_values = None
    xi_mode = "conditional"
    alpha = float(d.get("alpha", 1.0))
    if d.get("xi") is not None:
        xd = d["xi"]
        _check_keys(xd, _XI_KEYS, "xi")
        if "s" not in xd:
            raise ConfigError("xi is missing the noise scale 's'")
        xi = NoiseSpec(xd.get("family", "gaussian"), float(xd["s"]), xd.get("Kprime"),
                       xd.get("betaprime"), alpha, xd.get("C"))
        if xd.get("values") is not None:
            xi_values = tuple(float(v) for v in xd["values"])
        xi_mode = xd.get("mode", "conditional")

    try:
        return ExperimentConfig(
            instance=instance,
            estimators=tuple(d.get("estimators", ())),
            replications=int(d.get("replications", 10_000)),
            seed=int(d.get("seed", 0)),
            beta=float(d.get("beta", 3.0)),
            K=None if d.get("K") is None else float(d["K"]),
            alpha=alpha,
            noise=noise,
            xi=xi,
            xi_values=xi_values,
            xi_mode=xi_mode,
            threads=d.get("threads"),
            labels=labels,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecFilterError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None

"""Persistence: CSV tables, key=value configs, JSON manifests, point cache, resumable sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .model import ConfigError, ModelParams, Truncation, resolve_extents
from .resonance import FidelityScan, branch_labels, map_points, scan_from_rows, worker_count

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CACHE_MAGIC = b"SHCRPNT1"


class ConfigMismatch(ValueError):
    def __init__(self, diff: list[str]):
        self.diff = diff
        super().__init__("existing run has a different configuration:\n  " + "\n  ".join(diff))


class SweepInterrupted(RuntimeError):
    pass


class CacheCorrupt(ValueError):
    pass


# -- numbers and tables ----------------------------------------------------------


def fmt(x) -> str:
    """Full-precision decimal (17 significant digits); ints and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:] if ln]


def write_matrix_csv(path, x_name, x, y_name, y, values) -> Path:
    """Matrix CSV: first row '<x>\\<y>', y values...; then one row per x."""
    header = [f"{x_name}\\{y_name}"] + [fmt(v) for v in y]
    rows = [[xv] + list(row) for xv, row in zip(x, values)]
    return write_csv(path, header, rows)


def parse_range(text: str) -> np.ndarray:
    """'start:stop:step' (inclusive stop) or a single number."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ConfigError([f"cannot parse range {text!r}"]) from None
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3 or nums[2] <= 0 or nums[1] < nums[0]:
        raise ConfigError([f"range must be start:stop:step with step > 0, got {text!r}"])
    a, b, h = nums
    n = int(math.floor((b - a) / h + 1e-9)) + 1
    return np.round(a + h * np.arange(n), 12)


# -- config files -----------------------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    """key=value lines; '#' starts a comment; keys use CLI spelling with or without dashes."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {path}"])
    out = {}
    for i, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"{path}:{i}: expected key=value"])
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


# -- sweep description --------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    kind: str  # "spectrum" or "fidelity"
    inv_a0: tuple
    r0: tuple
    n_states: int = 14
    delta_r0: float = 1e-3
    J: int = 0
    parity: int = 1
    trunc: Truncation = field(default_factory=Truncation)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inv_a0"] = [_json_float(x) for x in self.inv_a0]
        d["r0"] = [float(x) for x in self.r0]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        d["trunc"] = Truncation(**d["trunc"])
        d["inv_a0"] = tuple(_from_json_float(x) for x in d["inv_a0"])
        d["r0"] = tuple(float(x) for x in d["r0"])
        return cls(**d)

    def params(self, inv_a0: float) -> ModelParams:
        return ModelParams(inv_a0=inv_a0, delta_r0=self.delta_r0, J=self.J, parity=self.parity)

    @property
    def r0_max(self) -> float:
        return max(self.r0) + (self.delta_r0 if self.kind == "fidelity" else 0.0)

    def resolved_trunc(self) -> Truncation:
        return resolve_extents(self.trunc, self.r0_max)


def _json_float(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def _from_json_float(x) -> float:
    return float(x)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def dict_diff(a: dict, b: dict, prefix: str = "") -> list[str]:
    out = []
    for k in sorted(set(a) | set(b)):
        va, vb = a.get(k, "<missing>"), b.get(k, "<missing>")
        if isinstance(va, dict) and isinstance(vb, dict):
            out += dict_diff(va, vb, f"{prefix}{k}.")
        elif va != vb:
            sa, sb = json.dumps(va), json.dumps(vb)
            if len(sa) > 80:
                sa = sa[:77] + "..."
            if len(sb) > 80:
                sb = sb[:77] + "..."
            out.append(f"{prefix}{k}: {sa} -> {sb}")
    return out


# -- manifest --------------------------------------------------------------------------


def code_version() -> str:
    from . import __version__

    return __version__


@dataclass
class RunManifest:
    command: str
    config: dict
    code_version: str = field(default_factory=code_version)
    grid_hashes: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    jobs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError([f"unsupported manifest schema {d.get('schema_version')}"])
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def write(self, out_dir) -> Path:
        p = Path(out_dir) / "manifest.json"
        tmp = p.with_suffix(".tmp")
        tmp.write_text(self.to_json() + "\n")
        os.replace(tmp, p)
        return p

    @classmethod
    def load(cls, out_dir) -> "RunManifest":
        p = Path(out_dir) / "manifest.json"
        if not p.is_file():
            raise ConfigError([f"no manifest in {out_dir}"])
        return cls.from_json(p.read_text())


def grid_hashes(cfg: SweepConfig) -> dict:
    def h(a):
        return hashlib.sha256(np.asarray(a, float).tobytes()).hexdigest()[:16]
    return {"r0": h(cfg.r0), "inv_a0": h(cfg.inv_a0)}


# -- binary point cache -----------------------------------------------------------


def write_array(path, arr: np.ndarray) -> None:
    """Header (magic, schema, ndim, shape, sha256 of payload) + row-major little-endian float64."""
    a = np.ascontiguousarray(arr, dtype="<f8")
    payload = a.tobytes(order="C")
    head = CACHE_MAGIC + struct.pack("<II", SCHEMA_VERSION, a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape) + hashlib.sha256(payload).digest()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(head + payload)
    os.replace(tmp, path)


def read_array(path) -> np.ndarray:
    data = Path(path).read_bytes()
    try:
        if data[:8] != CACHE_MAGIC:
            raise CacheCorrupt("bad magic")
        ver, ndim = struct.unpack_from("<II", data, 8)
        if ver != SCHEMA_VERSION:
            raise CacheCorrupt(f"schema {ver}")
        off = 16
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        digest = data[off:off + 32]
        payload = data[off + 32:]
        if len(payload) != 8 * int(np.prod(shape)) or hashlib.sha256(payload).digest() != digest:
            raise CacheCorrupt("payload size or checksum mismatch")
    except struct.error as exc:
        raise CacheCorrupt(str(exc)) from None
    return np.frombuffer(payload, dtype="<f8").reshape(shape).copy()


def point_key(cfg_hash: str, inv_a0: float, r0: float) -> str:
    return hashlib.sha256(f"{cfg_hash}|{inv_a0!r}|{r0!r}".encode()).hexdigest()[:32]


# -- sweeps -------------------------------------------------------------------------------


@dataclass(eq=False)
class SweepResult:
    config: SweepConfig
    data: dict  # inv_a0 -> array (len(r0), k, n_states)

    def scan(self, inv_a0: float) -> FidelityScan:
        cfg = self.config
        return scan_from_rows(cfg.r0, self.data[inv_a0], cfg.delta_r0, cfg.params(inv_a0),
                              cfg.resolved_trunc())


def _job_name(inv_a0: float, r0: float) -> str:
    return f"inv_a0={fmt(inv_a0)};r0={fmt(r0)}"


def run_sweep(out_dir, cfg: SweepConfig, workers: int | None = None, resume: bool = False,
              max_points: int | None = None, command: str | None = None) -> SweepResult:
    """Compute every (a0, r0) point of ``cfg``, caching each one under out_dir/points.

    With ``resume`` an existing manifest must describe the same
    configuration; only missing or corrupted points are recomputed.
    ``max_points`` stops after that many new points (interruption tests).
    """
    out = Path(out_dir)
    _ensure_dir(out)
    pts = out / "points"
    pts.mkdir(exist_ok=True)
    cfg_dict = cfg.to_dict()
    chash = config_hash(cfg_dict)
    if (out / "manifest.json").exists():
        old = RunManifest.load(out)
        if old.config.get("sweep") != cfg_dict:
            raise ConfigMismatch(dict_diff(old.config.get("sweep", {}), cfg_dict))
        if not resume:
            log.info("existing run directory with identical configuration; reusing cached points")
        manifest = old
    else:
        manifest = RunManifest(command or cfg.kind, {"sweep": cfg_dict}, grid_hashes=grid_hashes(cfg))
    start = time.time()
    workers = worker_count() if workers is None else workers
    trunc = cfg.resolved_trunc()
    overlaps = cfg.kind == "fidelity"
    data = {}
    budget = math.inf if max_points is None else max_points
    for inv in cfg.inv_a0:
        rows: list = [None] * len(cfg.r0)
        missing = []
        for i, r0 in enumerate(cfg.r0):
            f = pts / (point_key(chash, inv, r0) + ".bin")
            if f.exists():
                try:
                    rows[i] = read_array(f)
                    manifest.jobs[_job_name(inv, r0)] = "done"
                    continue
                except CacheCorrupt as exc:
                    log.warning("corrupted cache entry %s (%s); recomputing", f.name, exc)
            missing.append(i)
        chunk = max(1, workers * 4)
        solver = None
        while missing:
            if budget <= 0:
                manifest.wall_clock += time.time() - start
                manifest.write(out)
                raise SweepInterrupted(f"stopped with {len(missing)} points left at inv_a0={inv}")
            take = missing[:int(min(chunk, budget))]
            missing = missing[len(take):]
            if workers <= 1 and solver is None:
                from .coupled import ExactSolver

                solver = ExactSolver(cfg.params(inv), trunc, r0_max=cfg.r0_max)
            res = map_points(cfg.params(inv), trunc, [cfg.r0[i] for i in take], cfg.delta_r0,
                             cfg.n_states, cfg.r0_max, workers, overlaps, solver)
            for i, arr in zip(take, res):
                write_array(pts / (point_key(chash, inv, cfg.r0[i]) + ".bin"), arr)
                rows[i] = arr
                manifest.jobs[_job_name(inv, cfg.r0[i])] = "done"
            budget -= len(take)
        data[inv] = np.array(rows)
    manifest.wall_clock += time.time() - start
    manifest.write(out)
    return SweepResult(cfg, data)


def resume_sweep(out_dir, requested: SweepConfig | None = None, workers: int | None = None) -> SweepResult:
    """Finish a partially computed sweep described by out_dir/manifest.json."""
    manifest = RunManifest.load(out_dir)
    cfg = SweepConfig.from_dict(manifest.config["sweep"])
    if requested is not None and requested.to_dict() != cfg.to_dict():
        raise ConfigMismatch(dict_diff(cfg.to_dict(), requested.to_dict()))
    return run_sweep(out_dir, cfg, workers, resume=True, command=manifest.command)


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError([f"output directory {path} is not writable: {exc}"]) from None


# -- table writers ----------------------------------------------------------------------


def a0_value(inv_a0: float) -> float:
    if inv_a0 == 0:
        return math.inf
    return 1.0 / inv_a0 if math.isfinite(inv_a0) else -0.0


def write_spectrum_csv(path, result: SweepResult) -> Path:
    """One row per (a0, r0, level) with the dominant channel and basis indices."""
    from .model import enumerate_channels

    cfg = result.config
    header = ["inv_a0", "r0", "n", "E_n", "dominant_l", "dominant_L", "dominant_nrel",
              "dominant_ncom"]
    rows = []
    for inv in cfg.inv_a0:
        chans = enumerate_channels(cfg.params(inv), cfg.trunc)
        for r0, arr in zip(cfg.r0, result.data[inv]):
            for n in range(cfg.n_states):
                ch = chans[int(arr[1, n])]
                rows.append([inv, r0, n, arr[0, n], ch.l, ch.L, int(arr[2, n]), int(arr[3, n])])
    return write_csv(path, header, rows)


def write_fidelity_csv(path, result: SweepResult) -> Path:
    cfg = result.config
    n = cfg.n_states
    header = (["inv_a0", "r0"] + [f"E{i}" for i in range(n)] + [f"overlap{i}" for i in range(n)]
              + [f"dF{i}" for i in range(n)])
    rows = []
    for inv in cfg.inv_a0:
        sc = result.scan(inv)
        dF = sc.delta_F
        for k, r0 in enumerate(cfg.r0):
            rows.append([inv, r0, *sc.energies[k], *sc.overlaps[k], *dF[k]])
    return write_csv(path, header, rows)


def label_str(lab) -> str:
    return lab if isinstance(lab, str) else f"{lab[0]}_{lab[1]}"


def write_acs_csv(path, rows) -> Path:
    """rows: (inv_a0, AvoidedCrossing-like with r0_star, gap, fwhm, states, labels, cls)."""
    header = ["inv_a0", "a0", "r0_star", "class", "label_a", "label_b", "gap", "fwhm",
              "n_lower", "n_upper"]
    out = []
    for inv, ac in rows:
        la, lb = branch_labels(ac)
        out.append([inv, a0_value(inv), ac.r0_star, ac.cls, label_str(la), label_str(lb),
                    ac.gap, ac.fwhm, ac.states[0], ac.states[1]])
    return write_csv(path, header, out)

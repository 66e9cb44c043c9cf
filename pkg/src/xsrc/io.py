"""File formats: XSG1 gathers, XSF1 grid fields, PGM previews and run manifests.

XSG1 and XSF1 files start with one ASCII header line of ``key=value`` tokens,
space-padded so the line (including its final newline) fills a multiple of
64 bytes, followed by little-endian float32 samples.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from .grid import Gather, Grid2D, Medium, TimeAxis

HEADER_BLOCK = 64
_F32 = np.dtype("<f4")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _header(magic: str, fields: dict) -> bytes:
    line = " ".join([magic] + [f"{k}={_fmt(v)}" for k, v in fields.items()])
    n = len(line) + 1
    size = -(-n // HEADER_BLOCK) * HEADER_BLOCK
    return (line + " " * (size - n) + "\n").encode("ascii")


def _read_header(fh, magic: str) -> tuple[dict, int]:
    block = fh.read(HEADER_BLOCK)
    while block and not block.endswith(b"\n"):
        more = fh.read(HEADER_BLOCK)
        if not more:
            break
        block += more
    text = block.decode("ascii", errors="replace")
    tokens = text.split()
    if not tokens or tokens[0] != magic:
        raise ValueError(f"not a {magic} file (starts with {text[:16]!r})")
    out = {}
    for tok in tokens[1:]:
        k, _, v = tok.partition("=")
        out[k] = v
    return out, len(block)


def write_gather(path, g: Gather) -> None:
    """Write ``g`` as XSG1; traces must be equally spaced."""
    x = g.x_coords
    if g.ntr > 1 and not np.allclose(np.diff(x), g.dx_trace, rtol=1e-9, atol=1e-9 * abs(g.dx_trace)):
        raise ValueError("XSG1 stores equally spaced traces only")
    hdr = _header("XSG1", {"ntr": g.ntr, "nt": g.nt, "dt": g.time.dt, "t0": g.time.t0,
                           "z": g.depth_z, "x0": float(x[0]), "dxtr": g.dx_trace})
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(np.ascontiguousarray(g.values, dtype=_F32).tobytes())


def read_gather(path) -> Gather:
    with open(path, "rb") as fh:
        h, _ = _read_header(fh, "XSG1")
        ntr, nt = int(h["ntr"]), int(h["nt"])
        data = np.frombuffer(fh.read(), dtype=_F32)
    if data.size != ntr * nt:
        raise ValueError(f"XSG1 payload has {data.size} samples, header says {ntr}x{nt}")
    time_ = TimeAxis(nt, float(h["dt"]), float(h["t0"]))
    x = float(h["x0"]) + float(h["dxtr"]) * np.arange(ntr)
    return Gather(float(h["z"]), x, time_, data.reshape(ntr, nt).astype(np.float64))


def write_field(path, grid: Grid2D, values: np.ndarray) -> None:
    """Write a grid field as XSF1, one depth profile per ``x`` (x-major)."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    hdr = _header("XSF1", {"nx": grid.nx, "nz": grid.nz, "dx": grid.dx, "dz": grid.dz,
                           "x0": grid.x0, "z0": grid.z0})
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(np.ascontiguousarray(values.T, dtype=_F32).tobytes())


def read_field(path) -> tuple[Grid2D, np.ndarray]:
    with open(path, "rb") as fh:
        h, _ = _read_header(fh, "XSF1")
        data = np.frombuffer(fh.read(), dtype=_F32)
    grid = Grid2D(int(h["nx"]), int(h["nz"]), float(h["dx"]), float(h["dz"]),
                  float(h["x0"]), float(h["z0"]))
    if data.size != grid.nx * grid.nz:
        raise ValueError("XSF1 payload size does not match its header")
    return grid, data.reshape(grid.nx, grid.nz).T.astype(np.float64)


def write_medium(prefix, medium: Medium) -> tuple[Path, Path]:
    prefix = Path(prefix)
    pk = prefix.with_name(prefix.name + "_kappa.xsf")
    pr = prefix.with_name(prefix.name + "_rho.xsf")
    write_field(pk, medium.grid, medium.kappa)
    write_field(pr, medium.grid, medium.rho)
    return pk, pr


def read_medium(prefix) -> Medium:
    prefix = Path(prefix)
    grid, kappa = read_field(prefix.with_name(prefix.name + "_kappa.xsf"))
    grid2, rho = read_field(prefix.with_name(prefix.name + "_rho.xsf"))
    if grid != grid2:
        raise ValueError("kappa and rho files describe different grids")
    return Medium(grid, kappa, rho)


def symmetric_clip(values: np.ndarray, percentile: float = 99.0) -> float:
    c = float(np.percentile(np.abs(values), percentile))
    return c if c > 0 else 1.0


def write_pgm(path, values: np.ndarray, clip: float | None = None, percentile: float = 99.0) -> float:
    """8-bit PGM raster of a gather (time down, traces across); returns the clip used.

    Amplitudes map linearly from ``[-clip, clip]`` to ``[0, 255]``; mid-grey is zero.
    """
    a = np.asarray(values, dtype=float).T
    if clip is None:
        clip = symmetric_clip(a, percentile)
    img = np.clip(np.rint(127.5 + 127.5 * np.clip(a / clip, -1.0, 1.0)), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n# clip={clip!r}\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return clip


def read_pgm_clip(path) -> float:
    """Clip value stored in the comment line of a raster written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        for _ in range(3):
            line = fh.readline().decode("ascii", errors="replace")
            if line.startswith("# clip="):
                return float(line.split("=", 1)[1])
    raise ValueError(f"{path} carries no clip comment")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, params: dict, files, started: float, extra: dict | None = None):
    from . import __version__

    files = [Path(f) for f in files]
    doc = {
        "command": command,
        "params": params,
        "version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "wall_seconds": round(time.time() - started, 3),
        "files": {f.name: sha256(f) for f in files if f.exists()},
    }
    if extra:
        doc.update(extra)
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    os.replace(tmp, path)
    return doc


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())

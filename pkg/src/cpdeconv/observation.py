"""Discrete increments of the white-noise convolution model ``dY = Kf dx + eps dW``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import Kernel
from .spectral import Grid, SampledSignal
from .testbed import ChangePointFunction

FORMAT_VERSION = 1
_PAD_FACTOR = 8


class PathFormatError(ValueError):
    """A saved path is malformed, truncated, tampered with or from another version."""


@dataclass(frozen=True, eq=False)
class ObservationPath:
    grid: Grid
    increments: np.ndarray = field(repr=False)
    eps: float
    seed: int
    kernel_id: str = ""
    function_id: str = ""

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} increments, got shape {inc.shape}")
        if not np.all(np.isfinite(inc)):
            raise ValueError("increments contain non-finite values")
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "seed", int(self.seed))

    def metadata(self) -> dict:
        g = self.grid
        return {"eps": self.eps, "seed": self.seed,
                "grid": {"x_min": g.x_min, "x_max": g.x_max, "n": g.n},
                "kernel_id": self.kernel_id, "function_id": self.function_id,
                "format_version": FORMAT_VERSION}


def noiseless_response(f: ChangePointFunction, kernel: Kernel, grid: Grid) -> SampledSignal:
    """``(Kf)(x_i)`` from the analytic spectra ``khat * fhat``.

    The product is inverted on a lattice ``_PAD_FACTOR`` times longer than the
    grid (same spacing), so exponential kernel tails leaving the window do not
    wrap back into it.
    """
    N = grid.n * _PAD_FACTOR
    P = N * grid.spacing
    w = np.fft.fftfreq(N, d=grid.spacing)
    spec = kernel.khat(w) * f.spectrum(w)
    vals = np.fft.fft(spec * np.exp(-2j * np.pi * w * grid.x_min)) / P
    return SampledSignal(grid, vals.real[:grid.n])


def noise(seed: int, n: int) -> np.ndarray:
    """Standard normals from a Philox counter stream keyed by ``seed``;
    draw i depends only on (seed, i)."""
    return np.random.Generator(np.random.Philox(key=int(seed))).standard_normal(n)


def simulate_path(f: ChangePointFunction, kernel: Kernel, eps: float, grid: Grid, seed: int,
                  response: SampledSignal | None = None) -> ObservationPath:
    """``dY_i = (Kf)(x_i) dx + eps sqrt(dx) Z_i``.

    ``response`` may carry a precomputed :func:`noiseless_response` for
    repeated draws.

    Raises
    ------
    ValueError
        If ``grid`` differs from the grid of ``f`` or of ``response``.
    """
    if grid != f.grid:
        raise ValueError("simulation grid does not match the function's grid")
    if not eps >= 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if response is None:
        response = noiseless_response(f, kernel, grid)
    elif response.grid != grid:
        raise ValueError("precomputed response lives on a different grid")
    dx = grid.spacing
    inc = response.values * dx
    if eps > 0:
        inc = inc + eps * np.sqrt(dx) * noise(seed, grid.n)
    return ObservationPath(grid, inc, float(eps), seed, kernel.kernel_id, f.function_id)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_path(p: ObservationPath, path: str | Path) -> None:
    """Write ``x,dY`` CSV plus a JSON sidecar carrying metadata and a sha256."""
    path = Path(path)
    lines = ["x,dY"] + [f"{x:.17g},{v:.17g}" for x, v in zip(p.grid.x, p.increments)]
    blob = ("\n".join(lines) + "\n").encode()
    path.write_bytes(blob)
    meta = p.metadata()
    meta["sha256"] = hashlib.sha256(blob).hexdigest()
    _sidecar(path).write_text(json.dumps(meta, indent=2))


def load_path(path: str | Path) -> ObservationPath:
    """Inverse of :func:`save_path`.

    Raises
    ------
    PathFormatError
        On a missing sidecar, version or checksum mismatch, or a row count
        that disagrees with the recorded grid.
    """
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PathFormatError(f"{path}: unreadable sidecar ({exc})") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise PathFormatError(
            f"{path}: format version {meta.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    blob = path.read_bytes()
    if hashlib.sha256(blob).hexdigest() != meta.get("sha256"):
        raise PathFormatError(f"{path}: checksum mismatch")
    rows = blob.decode().splitlines()
    if not rows or rows[0] != "x,dY":
        raise PathFormatError(f"{path}: expected header 'x,dY'")
    g = meta["grid"]
    grid = Grid(float(g["x_min"]), float(g["x_max"]), int(g["n"]))
    if len(rows) - 1 != grid.n:
        raise PathFormatError(f"{path}: {len(rows) - 1} rows for a grid of {grid.n}")
    try:
        inc = np.array([float(r.split(",")[1]) for r in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise PathFormatError(f"{path}: malformed row ({exc})") from exc
    return ObservationPath(grid, inc, float(meta["eps"]), int(meta["seed"]),
                           meta.get("kernel_id", ""), meta.get("function_id", ""))

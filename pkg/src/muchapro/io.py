"""File formats and rendering.

MCSLC  "MCSL" | u8 version=1 | u32 D, H, W | D*H*W complex64 (re, im), channel-major
MCCOV  "MCCV" | u8 version=1 | u32 D, H, W | D*D*H*W float32, plane-major
All integers and floats little-endian. A reflectivity raster is an MCCOV
with D=1. Direction sets are plain text.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .core import CovarianceField, MuchaproError, MultiChannelSLCImage
from .directions import condition_number
from .projection import ProjectionDirectionSet

SLC_MAGIC = b"MCSL"
COV_MAGIC = b"MCCV"
VERSION = 1
_HEADER = struct.Struct("<4sBIII")


class FormatError(MuchaproError):
    pass


def _pack_header(magic, D, H, W):
    return _HEADER.pack(magic, VERSION, D, H, W)


def _read_header(buf, magic, path):
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a header")
    m, version, D, H, W = _HEADER.unpack_from(buf)
    if m != magic:
        raise FormatError(f"{path}: bad magic {m!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return D, H, W


def encode_mcslc(values):
    v = np.asarray(values)
    if v.ndim == 2:
        v = v[None]
    D, H, W = v.shape
    return _pack_header(SLC_MAGIC, D, H, W) + np.ascontiguousarray(v, dtype="<c8").tobytes()


def decode_mcslc(buf, path="<bytes>"):
    D, H, W = _read_header(buf, SLC_MAGIC, path)
    n = 8 * D * H * W
    if len(buf) - _HEADER.size != n:
        raise FormatError(f"{path}: payload is {len(buf) - _HEADER.size} bytes, expected {n}")
    return np.frombuffer(buf, dtype="<c8", offset=_HEADER.size).reshape(D, H, W)


def write_mcslc(path, img):
    values = img.values if isinstance(img, MultiChannelSLCImage) else img
    Path(path).write_bytes(encode_mcslc(values))


def read_mcslc_raw(path):
    """Stored complex64 values, shape ``(D, H, W)``."""
    return decode_mcslc(Path(path).read_bytes(), path)


def read_mcslc(path) -> MultiChannelSLCImage:
    return MultiChannelSLCImage(read_mcslc_raw(path))


def encode_mccov(values):
    v = np.asarray(values)
    n, H, W = v.shape
    D = int(round(np.sqrt(n)))
    if D * D != n:
        raise FormatError(f"{n} planes is not a perfect square")
    return _pack_header(COV_MAGIC, D, H, W) + np.ascontiguousarray(v, dtype="<f4").tobytes()


def decode_mccov(buf, path="<bytes>"):
    D, H, W = _read_header(buf, COV_MAGIC, path)
    n = 4 * D * D * H * W
    if len(buf) - _HEADER.size != n:
        raise FormatError(f"{path}: payload is {len(buf) - _HEADER.size} bytes, expected {n}")
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(D * D, H, W)


def write_mccov(path, field):
    values = field.values if isinstance(field, CovarianceField) else field
    Path(path).write_bytes(encode_mccov(values))


def read_mccov_raw(path):
    return decode_mccov(Path(path).read_bytes(), path)


def read_mccov(path) -> CovarianceField:
    return CovarianceField(read_mccov_raw(path).astype(np.float64))


def write_reflectivity(path, v):
    v = np.asarray(v)
    write_mccov(path, v[None])


def read_reflectivity(path):
    raw = read_mccov_raw(path)
    if raw.shape[0] != 1:
        raise FormatError(f"{path}: reflectivity raster must have D=1, got D^2={raw.shape[0]}")
    return raw[0]


def format_directions(dirs: ProjectionDirectionSet, mode=None, seed=None, extra=None):
    mode = mode or dirs.meta.get("mode", "hermitian")
    seed = dirs.meta.get("seed") if seed is None else seed
    cond = condition_number(dirs, mode)
    lines = [f"# muchapro {__version__} projection directions"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {v}")
    lines += [f"D {dirs.D}", f"K {dirs.K}", f"mode {mode}",
              f"seed {'none' if seed is None else seed}", f"condition {cond:.17g}"]
    for k in range(dirs.K):
        p = dirs.P[:, k]
        lines.append(" ".join(f"{x:.17g}" for c in p for x in (c.real, c.imag)))
    return "\n".join(lines) + "\n"


def parse_directions(text, path="<text>", tol=1e-6):
    header, rows = {}, []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key in ("D", "K", "mode", "seed", "condition"):
            header[key] = rest.strip()
        else:
            try:
                rows.append([float(x) for x in line.split()])
            except ValueError as exc:
                raise FormatError(f"{path}: cannot parse direction line {line!r}") from exc
    try:
        D, K, mode = int(header["D"]), int(header["K"]), header["mode"]
    except KeyError as exc:
        raise FormatError(f"{path}: missing header field {exc}") from exc
    if len(rows) != K or any(len(r) != 2 * D for r in rows):
        raise FormatError(f"{path}: expected {K} lines of {2 * D} numbers")
    a = np.array(rows)
    P = (a[:, 0::2] + 1j * a[:, 1::2]).T
    seed = header.get("seed", "none")
    meta = {"mode": mode, "seed": None if seed == "none" else int(seed)}
    dirs = ProjectionDirectionSet(P, meta=meta)
    if "condition" in header:
        stored = float(header["condition"])
        meta["condition"] = stored
        actual = condition_number(dirs, mode)
        if np.isfinite(stored) and abs(actual - stored) > tol * stored:
            raise FormatError(f"{path}: stored condition {stored} but directions give {actual}")
    return dirs


def write_directions(path, dirs, **kw):
    Path(path).write_text(format_directions(dirs, **kw))


def read_directions(path):
    return parse_directions(Path(path).read_text(), path)


def write_provenance(path, **params):
    """Sidecar ``<path>.json`` with version and parameters (no timestamps)."""
    record = {"muchapro": __version__, **params}
    Path(str(path) + ".json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def stretch(x, percentile=99.0, gamma=0.7):
    """Scale to [0, 1] by clipping at a percentile, then apply a gamma."""
    x = np.maximum(np.asarray(x, dtype=np.float64), 0)
    top = np.percentile(x, percentile)
    if top <= 0:
        return np.zeros_like(x)
    return np.clip(x / top, 0, 1) ** gamma


def render_composite(C: CovarianceField, mode="insar", channels=(0, 1), percentile=99.0, gamma=0.7):
    """8-bit RGB array.

    insar: hue = phase on (-pi, pi] -> [0, 1), saturation = coherence,
    value = stretched reflectivity of the first channel.
    amplitude: grayscale stretched sqrt(reflectivity) of ``channels[0]``.
    """
    from matplotlib.colors import hsv_to_rgb

    D = C.D
    if any(not 0 <= c < D for c in channels):
        raise MuchaproError(f"channel out of range for D={D}: {channels}")
    if mode == "amplitude":
        g = stretch(np.sqrt(np.maximum(C.diagonal(channels[0]), 0)), percentile, gamma)
        rgb = np.repeat(g[..., None], 3, axis=-1)
    elif mode == "insar":
        i, j = channels
        if i == j:
            raise MuchaproError("insar composite needs two distinct channels")
        ri, rj = np.maximum(C.diagonal(i), 0), np.maximum(C.diagonal(j), 0)
        cij = C.entry(i, j)
        denom = np.sqrt(ri * rj)
        coh = np.where(denom > 0, np.abs(cij) / np.where(denom > 0, denom, 1), 0.0)
        hue = np.mod(np.angle(cij) + np.pi, 2 * np.pi) / (2 * np.pi)
        hue = np.where(hue >= 1, 0.0, hue)
        hsv = np.stack([hue, np.clip(coh, 0, 1), stretch(ri, percentile, gamma)], axis=-1)
        rgb = hsv_to_rgb(hsv)
    else:
        raise MuchaproError(f"unknown composite mode {mode!r}")
    return np.round(rgb * 255).astype(np.uint8)


def save_png(path, rgb):
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(rgb)).save(path, format="PNG")

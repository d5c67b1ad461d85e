"""PTF1 on-disk format for process tensors.

Layout: one UTF-8 JSON header line terminated by ``\\n``, then a binary
blob of 2 * dim**2 little-endian IEEE-754 doubles (row-major entries,
interleaved real/imaginary). Round-trips are bit exact.

The same header-plus-blob scheme serializes plain matrix bundles
(``PTF1-mats``), used to supply unitaries for custom models.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FormatError

TRACE_CONVENTION = "tp_choi_trace_d"


def _interleave(matrix: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(matrix, dtype=complex).reshape(-1)
    out = np.empty(2 * flat.size, dtype="<f8")
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out.tobytes()


def _deinterleave(blob: bytes, rows: int, cols: int) -> np.ndarray:
    expected = 2 * rows * cols * 8
    if len(blob) != expected:
        raise FormatError(f"blob holds {len(blob)} bytes, expected {expected}")
    raw = np.frombuffer(blob, dtype="<f8")
    return (raw[0::2] + 1j * raw[1::2]).reshape(rows, cols)


def save(pt, path) -> None:
    header = {
        "format": "PTF1",
        "system_dim": pt.system_dim,
        "k": pt.n_steps,
        "times": list(pt.times),
        "leg_labels": list(pt.legs.labels),
        "leg_dims": list(pt.legs.dims),
        "trace_convention": TRACE_CONVENTION,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(_interleave(pt.choi))


def _read_header(fh) -> dict:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise FormatError("missing header line")
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object")
    return header


def load(path):
    from .process_tensor import ProcessTensor

    with open(path, "rb") as fh:
        header = _read_header(fh)
        if header.get("format") != "PTF1":
            raise FormatError(f"unsupported format {header.get('format')!r}")
        for key in ("system_dim", "k", "times", "leg_dims"):
            if key not in header:
                raise FormatError(f"header missing field {key!r}")
        d = int(header["system_dim"])
        k = int(header["k"])
        times = [float(t) for t in header["times"]]
        if len(times) != k + 1:
            raise FormatError(f"{len(times)} times for k={k}")
        dim = int(np.prod(header["leg_dims"]))
        if dim != d ** (2 * k + 1):
            raise FormatError(
                f"leg dims {header['leg_dims']} inconsistent with "
                f"system_dim={d}, k={k}")
        blob = fh.read()
    choi = _deinterleave(blob, dim, dim)
    try:
        return ProcessTensor(choi, d, times, validate=False)
    except Exception as exc:  # dimension bookkeeping failed
        raise FormatError(str(exc)) from exc


def save_matrices(path, matrices) -> None:
    mats = [np.asarray(m, dtype=complex) for m in matrices]
    header = {
        "format": "PTF1-mats",
        "count": len(mats),
        "dims": [list(m.shape) for m in mats],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for m in mats:
            fh.write(_interleave(m))


def load_matrices(path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        if header.get("format") != "PTF1-mats":
            raise FormatError(f"unsupported format {header.get('format')!r}")
        mats = []
        for rows, cols in header["dims"]:
            blob = fh.read(2 * rows * cols * 8)
            mats.append(_deinterleave(blob, rows, cols))
        if fh.read():
            raise FormatError("trailing bytes after declared matrices")
    return mats

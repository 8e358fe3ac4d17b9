"""Checkpoint files.

Layout: an ASCII header, then the tensors as little-endian float32 in
header order::

    CMIX1
    arch smallcnn
    spec height=100 width=100 ...
    tensor conv1.w 8 1 3 3
    ...
    end
    <payload>
"""
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError, CheckpointIntegrityError, UnsupportedArchError
from .core import ARCHS, ModelParams, ModelSpec

MAGIC = "CMIX1"


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def save_checkpoint(params: ModelParams, path):
    spec = params.spec
    lines = [MAGIC, f"arch {spec.arch}"]
    lines.append("spec " + " ".join(f"{k}={_format_value(v)}" for k, v in spec.fields().items()))
    for name, t in params.tensors.items():
        lines.append(f"tensor {name} " + " ".join(str(d) for d in t.shape))
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    payload = b"".join(np.asarray(t, dtype="<f4").tobytes() for t in params.tensors.values())
    Path(path).write_bytes(header + payload)


def _parse_spec(arch, text):
    fields = {}
    for item in text.split():
        key, _, value = item.partition("=")
        if key == "cnn_channels":
            fields[key] = tuple(int(v) for v in value.split(","))
        else:
            fields[key] = int(value)
    try:
        return ModelSpec(arch=arch, **fields)
    except TypeError as exc:
        raise CheckpointFormatError(f"bad spec line: {exc}") from None


def load_checkpoint(path) -> ModelParams:
    buf = Path(path).read_bytes()
    pos = 0
    lines = []
    while True:
        nl = buf.find(b"\n", pos)
        if nl < 0:
            raise CheckpointFormatError("header is not terminated by 'end'")
        try:
            line = buf[pos:nl].decode("ascii")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"non-ASCII header at byte {pos}") from None
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != MAGIC:
        got = lines[0] if lines else ""
        raise CheckpointFormatError(f"bad magic/version {got!r}, expected {MAGIC!r}")
    if len(lines) < 3 or not lines[1].startswith("arch ") or not lines[2].startswith("spec"):
        raise CheckpointFormatError("expected 'arch' and 'spec' header lines")
    arch = lines[1][5:].strip()
    if arch not in ARCHS:
        raise UnsupportedArchError(f"unsupported architecture {arch!r}")
    spec = _parse_spec(arch, lines[2][4:])
    shapes = []
    for line in lines[3:]:
        parts = line.split()
        if len(parts) < 2 or parts[0] != "tensor":
            raise CheckpointFormatError(f"bad tensor line {line!r}")
        shapes.append((parts[1], tuple(int(d) for d in parts[2:])))
    expected = ARCHS[arch].init(spec, np.random.default_rng(0))
    declared = {name: shape for name, shape in shapes}
    if declared != {k: v.shape for k, v in expected.items()}:
        raise CheckpointIntegrityError("tensor names/shapes do not match the architecture")
    need = sum(int(np.prod(s)) for _, s in shapes) * 4
    payload = buf[pos:]
    if len(payload) != need:
        raise CheckpointIntegrityError(f"payload is {len(payload)} bytes, expected {need}")
    tensors = {}
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[name] = arr.astype(np.float64).reshape(shape)
        offset += count * 4
    return ModelParams(spec, tensors)

"""Versioned binary container for model parameters.

Layout: magic ``RNPW``, version byte, u32 little-endian metadata length,
JSON metadata, then the raw little-endian tensor bytes back to back.  The
metadata carries the model kind, its architecture descriptor, the parameter
index (name, shape, dtype, offset), and for entropy models the content hash
of the codec they were trained against.

The content hash (16 bytes, MD5) covers the kind, the architecture, and
every parameter's name and bytes in index order; it identifies the model in
bitstream headers and binds entropy models to their codec.
"""

import hashlib
import json
import struct

import numpy as np

from .codec import CodecArchitecture, CodecModel
from .entropy import EntropyArchitecture, EntropyModel
from .errors import FormatError

_MAGIC = b"RNPW"
_VERSION = 1


def _kind_and_arch(model):
    if isinstance(model, CodecModel):
        return "codec", model.arch.to_dict()
    if isinstance(model, EntropyModel):
        return "entropy", model.arch.to_dict()
    raise FormatError(f"cannot serialize object of type {type(model).__name__}")


def content_hash(model):
    """16-byte digest over architecture and parameters."""
    kind, arch = _kind_and_arch(model)
    h = hashlib.md5()
    h.update(kind.encode())
    h.update(json.dumps(arch, sort_keys=True).encode())
    for name, p in model.named_params():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.data).astype(p.data.dtype.newbyteorder("<")).tobytes())
    return h.digest()


def save_model(model, path):
    """Write the model to ``path``; returns its content hash."""
    kind, arch = _kind_and_arch(model)
    digest = content_hash(model)
    index = []
    blobs = []
    offset = 0
    for name, p in model.named_params():
        raw = np.ascontiguousarray(p.data).astype(p.data.dtype.newbyteorder("<")).tobytes()
        index.append({
            "name": name,
            "shape": list(p.data.shape),
            "dtype": p.data.dtype.str.lstrip("<>=|"),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    meta = {
        "kind": kind,
        "arch": arch,
        "params": index,
        "hash": digest.hex(),
    }
    if kind == "entropy":
        codec_hash = getattr(model, "codec_hash", None)
        if codec_hash is None:
            raise FormatError("entropy model has no codec binding hash; train it first")
        meta["codec_hash"] = codec_hash.hex() if isinstance(codec_hash, bytes) else codec_hash
    payload = json.dumps(meta).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI", _VERSION, len(payload)))
        fh.write(payload)
        for raw in blobs:
            fh.write(raw)
    return digest


def load_model(path):
    """Rebuild a model from a container; verifies the stored content hash.

    The returned model carries ``content_hash`` (bytes) and, for entropy
    models, ``codec_hash`` (bytes).
    """
    with open(path, "rb") as fh:
        head = fh.read(9)
        if len(head) != 9 or head[:4] != _MAGIC:
            raise FormatError(f"{path}: not a model parameter file")
        version, meta_len = struct.unpack("<BI", head[4:])
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported container version {version}")
        meta = json.loads(fh.read(meta_len))
        blob = fh.read()

    kind = meta.get("kind")
    if kind == "codec":
        model = CodecModel(CodecArchitecture.from_dict(meta["arch"]), seed=0)
    elif kind == "entropy":
        model = EntropyModel(EntropyArchitecture.from_dict(meta["arch"]), seed=0)
    else:
        raise FormatError(f"{path}: unknown model kind {kind!r}")

    params = dict(model.named_params())
    listed = [entry["name"] for entry in meta["params"]]
    if set(listed) != set(params):
        raise FormatError(f"{path}: parameter index does not match the architecture")
    for entry in meta["params"]:
        p = params[entry["name"]]
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise FormatError(f"{path}: truncated parameter data")
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
        p.data[...] = arr.reshape(entry["shape"]).astype(p.data.dtype)

    if kind == "entropy":
        model.codec_hash = bytes.fromhex(meta["codec_hash"])
    digest = content_hash(model)
    if digest.hex() != meta["hash"]:
        raise FormatError(f"{path}: content hash mismatch (corrupt or edited file)")
    model.content_hash = digest
    return model

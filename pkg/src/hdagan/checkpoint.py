"""Versioned binary checkpoints for a single network.

Layout (all little-endian):

    magic "HDAC" | version u16 | name length u16 + utf-8 bytes
    | entry count u32
    | per entry: name (u16 + bytes), rank u32, extents u32 each,
      float32 data
    | optional optimizer section: tag "OPTS", step u64, count u32,
      per entry: name (u16 + bytes), m data, v data (shapes mirror
      the parameter)

Entries cover parameters first and then running-statistics buffers, in
their stable iteration order, so save -> load -> save is byte
identical. Loading validates every name and shape against the target
network before a single value is written.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import Network

__all__ = ["save_network", "load_network", "save_bundle", "load_bundle", "CheckpointError"]

MAGIC = b"HDAC"
OPT_TAG = b"OPTS"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed file or mismatch against the target architecture."""


def _write_str(f, s: str) -> None:
    raw = s.encode("utf-8")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def _read_str(f) -> str:
    (n,) = struct.unpack("<H", f.read(2))
    return f.read(n).decode("utf-8")


def _write_array(f, arr: np.ndarray) -> None:
    f.write(struct.pack("<I", arr.ndim))
    for e in arr.shape:
        f.write(struct.pack("<I", e))
    f.write(arr.astype("<f4").tobytes())


def _read_array(f) -> np.ndarray:
    (rank,) = struct.unpack("<I", f.read(4))
    shape = tuple(struct.unpack("<I", f.read(4))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(4 * count), dtype="<f4")
    return data.reshape(shape).copy()


def save_network(path, net: Network, include_optimizer: bool = False) -> None:
    entries = net.params.state_arrays()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        _write_str(f, net.name)
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            _write_str(f, name)
            _write_array(f, np.asarray(arr))
        if include_optimizer and net.params.opt_m:
            f.write(OPT_TAG)
            f.write(struct.pack("<Q", net.params.opt_step))
            f.write(struct.pack("<I", len(net.params.opt_m)))
            for name in net.params.opt_m:
                _write_str(f, name)
                _write_array(f, net.params.opt_m[name])
                _write_array(f, net.params.opt_v[name])


def load_network(path, net: Network) -> Network:
    """Fill ``net`` from a checkpoint after validating the whole file.

    Names and shapes must match the network's own entries exactly and
    in order; nothing is modified on a mismatch.
    """
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<H", f.read(2))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        _read_str(f)  # stored network name is informational
        (count,) = struct.unpack("<I", f.read(4))
        loaded: list[tuple[str, np.ndarray]] = []
        for _ in range(count):
            name = _read_str(f)
            loaded.append((name, _read_array(f)))
        opt = None
        tag = f.read(4)
        if tag == OPT_TAG:
            (step,) = struct.unpack("<Q", f.read(8))
            (ocount,) = struct.unpack("<I", f.read(4))
            opt = {"step": step, "m": {}, "v": {}}
            for _ in range(ocount):
                name = _read_str(f)
                opt["m"][name] = _read_array(f)
                opt["v"][name] = _read_array(f)

    expected = net.params.state_arrays()
    if len(loaded) != len(expected):
        raise CheckpointError(
            f"{path}: {len(loaded)} entries but the architecture has {len(expected)}"
        )
    for (got_name, got_arr), (want_name, want_arr) in zip(loaded, expected):
        if got_name != want_name or got_arr.shape != np.asarray(want_arr).shape:
            raise CheckpointError(
                f"{path}: entry {got_name!r} {got_arr.shape} does not match "
                f"{want_name!r} {np.asarray(want_arr).shape}"
            )
    if opt is not None:
        for name in opt["m"]:
            if name not in net.params.params:
                raise CheckpointError(f"{path}: optimizer state for unknown parameter {name!r}")

    # validation passed; now assign
    n_params = len(net.params.params)
    for (name, arr), _ in zip(loaded[:n_params], net.params.params):
        net.params.params[name].data = arr.astype(net.params.params[name].data.dtype)
    for name, arr in loaded[n_params:]:
        net.params.buffers[name][...] = arr
    if opt is not None:
        net.params.opt_step = int(opt["step"])
        net.params.opt_m = {k: v.astype(np.float32) for k, v in opt["m"].items()}
        net.params.opt_v = {k: v.astype(np.float32) for k, v in opt["v"].items()}
    return net


def save_bundle(directory, bundle, include_final: bool = False) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, net in bundle.networks().items():
        if name == "final" and not include_final:
            continue
        save_network(directory / f"{name}.hdac", net)


def load_bundle(directory, bundle, include_final: bool = False):
    directory = Path(directory)
    for name, net in bundle.networks().items():
        if name == "final" and not include_final:
            continue
        path = directory / f"{name}.hdac"
        if not path.exists():
            raise CheckpointError(f"missing checkpoint: {path}")
        load_network(path, net)
    return bundle

"""Bit-exact binary container for episode trajectories.

Layout: magic ``RP1T``, then version/T/obs_dim/act_dim as little-endian
u32, then observations, actions and rewards as contiguous little-endian
float32 arrays (row-major), a CRC32 over that payload, and finally a
length-prefixed UTF-8 JSON metadata block.  Identical records serialize
to identical bytes.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .keyboard import KEY_COUNT
from .midi import ACTION_DIM, GOAL_STEP_DIM, OBSERVATION_DIM, observation_layout

MAGIC = b"RP1T"
FORMAT_VERSION = 1
CANONICAL_T = 550
EPISODE_SUFFIX = ".rp1t"

_HEADER = struct.Struct("<4sIIII")
_CRC = struct.Struct("<I")
_META_LEN = struct.Struct("<I")
_OBS_EXTRA = KEY_COUNT + 1 + 30 + 46  # observation size beyond the goal window


class InvalidRecordError(ValueError):
    """Record violates the container invariants."""


class BadMagicError(ValueError):
    """Source does not start with the container magic."""


class UnsupportedVersionError(ValueError):
    """Container version this reader does not understand."""


class TruncatedPayloadError(ValueError):
    """Source ends before the declared payload or metadata."""


class ChecksumMismatchError(ValueError):
    """Payload bytes do not match the stored CRC32."""


def _as_f32(name: str, values, shape_len: int) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != shape_len:
        raise InvalidRecordError(f"{name} must be {shape_len}D, got {arr.ndim}D")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class EpisodeRecord:
    """One fixed-length trajectory: observations, actions, rewards, metadata.

    Payload arrays are stored as float32 exactly as written.  Canonical
    records have T=550, obs_dim=1144, act_dim=39; other shapes are allowed
    but flagged via ``is_canonical``.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        obs = _as_f32("observations", self.observations, 2)
        act = _as_f32("actions", self.actions, 2)
        rew = _as_f32("rewards", self.rewards, 1)
        if obs.shape[0] == 0:
            raise InvalidRecordError("zero-length episode")
        if act.shape[0] != obs.shape[0] or rew.shape[0] != obs.shape[0]:
            raise InvalidRecordError(
                f"array lengths disagree: obs T={obs.shape[0]}, actions T={act.shape[0]}, rewards T={rew.shape[0]}"
            )
        if obs.shape[1] == 0 or act.shape[1] == 0:
            raise InvalidRecordError("observation and action dimensions must be >= 1")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "actions", act)
        object.__setattr__(self, "rewards", rew)

    @property
    def length(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def act_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def is_canonical(self) -> bool:
        return (self.length, self.obs_dim, self.act_dim) == (CANONICAL_T, OBSERVATION_DIM, ACTION_DIM)

    def _lookahead_window(self) -> int:
        window, rem = divmod(self.obs_dim - _OBS_EXTRA, GOAL_STEP_DIM)
        if rem != 0 or window < 1:
            raise InvalidRecordError(f"obs_dim {self.obs_dim} does not match the observation layout")
        return window

    def active_key_steps(self):
        """Per-step active-key sets decoded from the goal block (stats hook)."""
        for t in range(self.length):
            row = self.observations[t, :KEY_COUNT]
            yield frozenset(int(k) for k in np.flatnonzero(row > 0.5))

    def pressed_key_steps(self, threshold: float = 0.5):
        """Per-step pressed-key sets decoded from the key-joint block."""
        start, stop = observation_layout(self._lookahead_window())["key_joints"]
        for t in range(self.length):
            row = self.observations[t, start:stop]
            yield frozenset(int(k) for k in np.flatnonzero(row >= threshold))


def write_episode(rec: EpisodeRecord, sink) -> int:
    """Serialize a record to a binary file object; returns bytes written."""
    payload = b"".join(
        (
            rec.observations.tobytes(order="C"),
            rec.actions.tobytes(order="C"),
            rec.rewards.tobytes(order="C"),
        )
    )
    meta_bytes = json.dumps(rec.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = b"".join(
        (
            _HEADER.pack(MAGIC, FORMAT_VERSION, rec.length, rec.obs_dim, rec.act_dim),
            payload,
            _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF),
            _META_LEN.pack(len(meta_bytes)),
            meta_bytes,
        )
    )
    sink.write(out)
    return len(out)


def read_episode(source) -> EpisodeRecord:
    """Deserialize a record from a binary file object, verifying the CRC."""
    data = source.read()
    if len(data) < _HEADER.size:
        raise BadMagicError("source shorter than the container header")
    magic, version, T, obs_dim, act_dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"container version {version} not supported")
    if T == 0 or obs_dim == 0 or act_dim == 0:
        raise InvalidRecordError("header declares a zero dimension")
    payload_len = 4 * (T * obs_dim + T * act_dim + T)
    pos = _HEADER.size
    if len(data) < pos + payload_len + _CRC.size + _META_LEN.size:
        raise TruncatedPayloadError("payload or trailer missing")
    payload = data[pos : pos + payload_len]
    pos += payload_len
    (crc,) = _CRC.unpack_from(data, pos)
    pos += _CRC.size
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumMismatchError("payload CRC32 mismatch")
    (meta_len,) = _META_LEN.unpack_from(data, pos)
    pos += _META_LEN.size
    if len(data) < pos + meta_len:
        raise TruncatedPayloadError("metadata block truncated")
    meta = json.loads(data[pos : pos + meta_len].decode("utf-8"))

    obs_bytes = 4 * T * obs_dim
    act_bytes = 4 * T * act_dim
    observations = np.frombuffer(payload[:obs_bytes], dtype="<f4").reshape(T, obs_dim)
    actions = np.frombuffer(payload[obs_bytes : obs_bytes + act_bytes], dtype="<f4").reshape(T, act_dim)
    rewards = np.frombuffer(payload[obs_bytes + act_bytes :], dtype="<f4")
    return EpisodeRecord(observations=observations, actions=actions, rewards=rewards, meta=meta)


def save_episode(rec: EpisodeRecord, path) -> int:
    with open(path, "wb") as fh:
        return write_episode(rec, fh)


def load_episode(path) -> EpisodeRecord:
    with open(path, "rb") as fh:
        return read_episode(fh)


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------


def rewards_csv(records) -> str:
    """Per-step reward export with piece identity and F1 metadata."""
    lines = ["song,chunk,step,reward,f1"]
    for rec in records:
        song = rec.meta.get("song", "")
        chunk = rec.meta.get("chunk", "")
        f1_value = rec.meta.get("f1", "")
        for t in range(rec.length):
            lines.append(f"{song},{chunk},{t},{rec.rewards[t]!r},{f1_value}")
    return "\n".join(lines) + "\n"


def score_csv(breakdowns) -> str:
    """Per-step reward-component export (columns: step, ot, press, ...)."""
    lines = ["step,ot,press,sustain,collision,energy,total"]
    for t, row in enumerate(breakdowns):
        cells = ",".join(repr(v) for v in row.as_row())
        lines.append(f"{t},{cells}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Import adapters
# ---------------------------------------------------------------------------


class EpisodeImporter:
    """Adapter interface for foreign trajectory schemas.

    Subclasses convert some on-disk layout into EpisodeRecords; register a
    factory under a scheme name so tools can select it by flag once a
    published schema is known.
    """

    def episodes(self):
        raise NotImplementedError


class NativeImporter(EpisodeImporter):
    """Reads a directory of native container files, sorted by name."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def episodes(self):
        for path in sorted(self.directory.glob(f"*{EPISODE_SUFFIX}")):
            yield load_episode(path)


_IMPORTERS: dict = {"native": NativeImporter}


def register_importer(name: str, factory) -> None:
    _IMPORTERS[name] = factory


def get_importer(name: str):
    try:
        return _IMPORTERS[name]
    except KeyError:
        raise KeyError(f"no importer registered under {name!r}; known: {sorted(_IMPORTERS)}") from None


def episode_bytes(rec: EpisodeRecord) -> bytes:
    """Serialize to bytes in memory (for tests and hashing)."""
    buf = io.BytesIO()
    write_episode(rec, buf)
    return buf.getvalue()

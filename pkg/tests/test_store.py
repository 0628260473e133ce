from __future__ import annotations

import io

import numpy as np
import pytest

from otpiano.store import (
    BadMagicError,
    ChecksumMismatchError,
    EPISODE_SUFFIX,
    EpisodeRecord,
    InvalidRecordError,
    NativeImporter,
    TruncatedPayloadError,
    UnsupportedVersionError,
    episode_bytes,
    get_importer,
    load_episode,
    read_episode,
    register_importer,
    rewards_csv,
    save_episode,
    score_csv,
    write_episode,
)


def _random_record(rng, T=5, obs_dim=12, act_dim=3, meta=None):
    return EpisodeRecord(
        observations=rng.standard_normal((T, obs_dim)).astype(np.float32),
        actions=rng.standard_normal((T, act_dim)).astype(np.float32),
        rewards=rng.standard_normal(T).astype(np.float32),
        meta=meta or {"song": "demo", "chunk": 0, "f1": 0.9},
    )


def _round_trip(rec):
    return read_episode(io.BytesIO(episode_bytes(rec)))


def test_round_trip_exact():
    rng = np.random.default_rng(0)
    for _ in range(20):
        rec = _random_record(rng)
        back = _round_trip(rec)
        assert np.array_equal(back.observations, rec.observations)
        assert np.array_equal(back.actions, rec.actions)
        assert np.array_equal(back.rewards, rec.rewards)
        assert back.meta == rec.meta


def test_write_read_write_is_byte_identical():
    rec = _random_record(np.random.default_rng(1))
    first = episode_bytes(rec)
    second = episode_bytes(read_episode(io.BytesIO(first)))
    assert first == second


def test_header_declares_dimensions():
    rec = _random_record(np.random.default_rng(2), T=7, obs_dim=11, act_dim=4)
    data = episode_bytes(rec)
    assert data[:4] == b"RP1T"
    header = np.frombuffer(data[4:20], dtype="<u4")
    assert tuple(header) == (1, 7, 11, 4)


def test_canonical_flag():
    rng = np.random.default_rng(3)
    assert not _random_record(rng).is_canonical
    canonical = _random_record(rng, T=550, obs_dim=1144, act_dim=39)
    assert canonical.is_canonical


def test_zero_length_rejected():
    with pytest.raises(InvalidRecordError):
        EpisodeRecord(
            observations=np.zeros((0, 4), dtype=np.float32),
            actions=np.zeros((0, 2), dtype=np.float32),
            rewards=np.zeros(0, dtype=np.float32),
        )


def test_ragged_arrays_rejected():
    with pytest.raises(InvalidRecordError):
        EpisodeRecord(
            observations=np.zeros((3, 4), dtype=np.float32),
            actions=np.zeros((2, 2), dtype=np.float32),
            rewards=np.zeros(3, dtype=np.float32),
        )


def test_corruption_detection():
    rec = _random_record(np.random.default_rng(4))
    data = bytearray(episode_bytes(rec))

    bad_magic = bytearray(data)
    bad_magic[0] = ord("X")
    with pytest.raises(BadMagicError):
        read_episode(io.BytesIO(bytes(bad_magic)))

    bad_version = bytearray(data)
    bad_version[4] = 9
    with pytest.raises(UnsupportedVersionError):
        read_episode(io.BytesIO(bytes(bad_version)))

    with pytest.raises(TruncatedPayloadError):
        read_episode(io.BytesIO(bytes(data[:40])))

    flipped = bytearray(data)
    flipped[24] ^= 0xFF  # inside the payload
    with pytest.raises(ChecksumMismatchError):
        read_episode(io.BytesIO(bytes(flipped)))


def test_every_single_byte_payload_corruption_detected():
    rec = _random_record(np.random.default_rng(5), T=2, obs_dim=3, act_dim=2)
    data = bytearray(episode_bytes(rec))
    payload_start = 20
    payload_len = 4 * (2 * 3 + 2 * 2 + 2)
    for i in range(payload_start, payload_start + payload_len):
        corrupted = bytearray(data)
        corrupted[i] ^= 0x01
        with pytest.raises(ChecksumMismatchError):
            read_episode(io.BytesIO(bytes(corrupted)))


def test_float64_inputs_are_stored_as_float32():
    values = np.array([[0.1, 0.2, 0.3]])
    rec = EpisodeRecord(
        observations=values, actions=np.array([[1.0]]), rewards=np.array([2.0])
    )
    assert rec.observations.dtype == np.float32
    back = _round_trip(rec)
    assert np.array_equal(back.observations, values.astype(np.float32))


def test_save_load_files(tmp_path):
    rec = _random_record(np.random.default_rng(6))
    path = tmp_path / f"demo.ep000{EPISODE_SUFFIX}"
    n = save_episode(rec, path)
    assert path.stat().st_size == n
    back = load_episode(path)
    assert np.array_equal(back.rewards, rec.rewards)


def test_native_importer_reads_directory(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(3):
        save_episode(_random_record(rng, meta={"song": "s", "chunk": i}), tmp_path / f"s.ep{i:03d}{EPISODE_SUFFIX}")
    importer = get_importer("native")(tmp_path)
    records = list(importer.episodes())
    assert [r.meta["chunk"] for r in records] == [0, 1, 2]
    assert isinstance(importer, NativeImporter)


def test_importer_registry():
    class Dummy:
        def __init__(self, directory):
            self.directory = directory

        def episodes(self):
            return iter(())

    register_importer("dummy", Dummy)
    assert get_importer("dummy") is Dummy
    with pytest.raises(KeyError):
        get_importer("nope")


def test_goal_decoding_hooks():
    from otpiano.keyboard import KeyState
    from otpiano.midi import GoalSequence, GoalStep, assemble_observation, goal_vector

    seq = GoalSequence(steps=(GoalStep(active=frozenset({5, 17})),), dt=0.05)
    depths = [0.0] * 88
    depths[17] = 1.0
    obs = assemble_observation(
        goal_vector(seq, 0, 11), KeyState(depths=tuple(depths)), np.zeros((10, 3)), np.zeros(46)
    )
    rec = EpisodeRecord(
        observations=obs[None, :].astype(np.float32),
        actions=np.zeros((1, 39), dtype=np.float32),
        rewards=np.zeros(1, dtype=np.float32),
    )
    assert list(rec.active_key_steps()) == [frozenset({5, 17})]
    assert list(rec.pressed_key_steps()) == [frozenset({17})]


def test_csv_exports():
    rng = np.random.default_rng(8)
    rec = _random_record(rng, T=2)
    text = rewards_csv([rec])
    lines = text.strip().splitlines()
    assert lines[0] == "song,chunk,step,reward,f1"
    assert len(lines) == 3
    assert lines[1].startswith("demo,0,0,")

    from otpiano.reward import total_reward

    rows = [total_reward(1.0, 1.0, 1.0, 1.0, 0.0)]
    text = score_csv(rows)
    assert text.splitlines()[0] == "step,ot,press,sustain,collision,energy,total"
    assert text.splitlines()[1].endswith(",3.5")

import struct

import numpy as np
import pytest

from speechcloak.audio_io import AudioClip, WavError, read_wav, write_wav


def make_pcm16_wav(path, samples, sample_rate=16000, channels=1):
    payload = np.asarray(samples, dtype="<i2").tobytes()
    block = channels * 2
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<I", 16),
            struct.pack("<HHIIHH", 1, channels, sample_rate, sample_rate * block, block, 16),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    path.write_bytes(header + payload)


def test_pcm16_scaling(tmp_path):
    path = tmp_path / "pcm.wav"
    make_pcm16_wav(path, [16384, 0, -32768, 32767])
    clip = read_wav(path)
    assert clip.samples[0] == 16384 / 32768
    assert clip.samples[1] == 0.0
    assert clip.samples[2] == -1.0
    assert clip.sample_rate == 16000
    assert clip.id == "pcm"


def test_float_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    clip = AudioClip(rng.normal(size=1600) * 0.4, 16000, "x")
    first = tmp_path / "a.wav"
    second = tmp_path / "b.wav"
    write_wav(clip, first)
    loaded = read_wav(first)
    write_wav(loaded, second)
    again = read_wav(second)
    assert np.array_equal(loaded.samples, again.samples)


def test_write_preserves_length_and_headroom(tmp_path):
    clip = AudioClip([1.5, -2.0, 0.25], 8000, "hot")
    path = tmp_path / "hot.wav"
    write_wav(clip, path)
    loaded = read_wav(path)
    assert len(loaded) == 3
    assert loaded.samples[0] == 1.5  # no clipping on write
    assert loaded.samples[1] == -2.0


def test_data_chunk_holds_float32_payload(tmp_path):
    clip = AudioClip(np.zeros(1600) + 0.125, 16000, "z")
    path = tmp_path / "z.wav"
    write_wav(clip, path)
    raw = path.read_bytes()
    assert raw[:4] == b"RIFF" and raw[8:12] == b"WAVE"
    data_at = raw.index(b"data")
    (size,) = struct.unpack_from("<I", raw, data_at + 4)
    assert size == 1600 * 4


def test_multichannel_downmix_mean(tmp_path):
    mono = np.array([1000, -2000, 123], dtype=np.int16)
    stereo_path = tmp_path / "st.wav"
    interleaved = np.repeat(mono, 2)
    make_pcm16_wav(stereo_path, interleaved, channels=2)
    mono_path = tmp_path / "mono.wav"
    make_pcm16_wav(mono_path, mono)
    assert np.array_equal(read_wav(stereo_path).samples, read_wav(mono_path).samples)


def test_three_identical_channels_downmix(tmp_path):
    mono = np.array([300, -500, 12345], dtype=np.int16)
    path = tmp_path / "tri.wav"
    make_pcm16_wav(path, np.repeat(mono, 3), channels=3)
    np.testing.assert_allclose(
        read_wav(path).samples, mono.astype(np.float64) / 32768.0, rtol=0, atol=1e-15
    )


def test_zero_length_clip_rejected():
    with pytest.raises(ValueError):
        AudioClip(np.array([]), 16000, "empty")


def test_malformed_header(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFX" + b"\x00" * 40)
    with pytest.raises(WavError, match="not a RIFF/WAVE"):
        read_wav(path)


def test_unsupported_encoding_24bit(tmp_path):
    path = tmp_path / "b24.wav"
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + 6),
            b"WAVE",
            b"fmt ",
            struct.pack("<I", 16),
            struct.pack("<HHIIHH", 1, 1, 16000, 16000 * 3, 3, 24),
            b"data",
            struct.pack("<I", 6),
        ]
    )
    path.write_bytes(header + b"\x00" * 6)
    with pytest.raises(WavError, match="unsupported encoding"):
        read_wav(path)


def test_empty_data_chunk(tmp_path):
    path = tmp_path / "empty.wav"
    make_pcm16_wav(path, [])
    with pytest.raises(WavError, match="empty data chunk"):
        read_wav(path)


def test_missing_data_chunk(tmp_path):
    path = tmp_path / "nodata.wav"
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 24),
            b"WAVE",
            b"fmt ",
            struct.pack("<I", 16),
            struct.pack("<HHIIHH", 1, 1, 16000, 32000, 2, 16),
        ]
    )
    path.write_bytes(header)
    with pytest.raises(WavError, match="missing data chunk"):
        read_wav(path)


def test_nonfinite_samples_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        AudioClip(np.array([0.0, np.nan]), 16000, "nan")

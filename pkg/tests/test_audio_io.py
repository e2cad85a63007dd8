"""WAV reading and writing."""

import numpy as np
import pytest
from scipy.io import wavfile

from ancbench.audio_io import read_wav, read_wav_channels, write_multichannel, write_wav
from ancbench.errors import ConfigurationError
from ancbench.signal import Signal


def test_float32_round_trip(tmp_path, rng):
    x = Signal(0.5 * rng.standard_normal(1000), 16000)
    write_wav(tmp_path / "a.wav", x)
    y = read_wav(tmp_path / "a.wav")
    np.testing.assert_allclose(y.samples, x.samples, atol=1e-7)
    assert y.sample_rate_hz == 16000


def test_pcm16_round_trip(tmp_path):
    x = Signal(np.linspace(-0.9, 0.9, 200), 8000)
    write_wav(tmp_path / "b.wav", x, fmt="pcm16")
    y = read_wav(tmp_path / "b.wav")
    np.testing.assert_allclose(y.samples, x.samples, atol=1 / 32768)


def test_pcm16_clips(tmp_path):
    write_wav(tmp_path / "c.wav", Signal([2.0, -2.0], 16000), fmt="pcm16")
    _, raw = wavfile.read(tmp_path / "c.wav")
    assert raw.tolist() == [32767, -32768]


def test_multichannel_reads_first_channel_with_warning(tmp_path):
    data = np.stack([np.full(10, 0.25), np.full(10, -0.5)], axis=1).astype(np.float32)
    wavfile.write(tmp_path / "m.wav", 16000, data)
    with pytest.warns(UserWarning):
        x = read_wav(tmp_path / "m.wav")
    np.testing.assert_allclose(x.samples, 0.25)


def test_write_multichannel(tmp_path):
    a, b = Signal(np.ones(5), 16000), Signal(np.zeros(5), 16000)
    write_multichannel(tmp_path / "x.wav", [a, b])
    rate, data = read_wav_channels(tmp_path / "x.wav")
    assert rate == 16000 and data.shape == (2, 5)
    with pytest.raises(ConfigurationError):
        write_multichannel(tmp_path / "y.wav", [a, Signal(np.ones(4), 16000)])


def test_raw_array_needs_rate(tmp_path):
    with pytest.raises(ConfigurationError):
        write_wav(tmp_path / "z.wav", np.ones(3))


def test_unknown_format(tmp_path):
    with pytest.raises(ConfigurationError):
        write_wav(tmp_path / "z.wav", Signal([0.1], 16000), fmt="mp3")


def test_uint8(tmp_path):
    wavfile.write(tmp_path / "u.wav", 8000, np.array([0, 128, 255], dtype=np.uint8))
    np.testing.assert_allclose(read_wav(tmp_path / "u.wav").samples, [-1.0, 0.0, 127 / 128])

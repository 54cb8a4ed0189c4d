"""Offline generator for the STOI reference fixtures.

Writes deterministic WAV pairs under tests/data/v1/stoi/ and an
expected-values JSON produced by an independent transcription of the
published STOI reference algorithm (Taal et al., 2011; classic
non-extended form). The transcription below is deliberately
loop-structured and shares no code with speechcloak.metrics.stoi; it
uses scipy's polyphase resampler where the production code uses its own
windowed-sinc kernel.

If the `pystoi` reference package is available in your environment, pass
--use-pystoi to generate the expected values from it instead.

Usage: python scripts/make_stoi_fixtures.py [--use-pystoi]
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import scipy.signal

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from speechcloak.audio_io import AudioClip, write_wav  # noqa: E402
from speechcloak.synth import harmonic_voice  # noqa: E402


def oracle_stoi(x, y, fs):
    """Classic STOI, transcribed step by step from the reference algorithm."""
    n_frame = 256
    hop = 128
    nfft = 512
    num_bands = 15
    min_freq = 150.0
    n_segment = 30
    beta = -15.0
    dyn_range = 40.0
    eps = np.finfo(float).eps

    if fs != 10000:
        x = scipy.signal.resample_poly(x, 10000, fs)
        y = scipy.signal.resample_poly(y, 10000, fs)
        fs = 10000

    window = np.hanning(n_frame + 2)[1:-1]

    # silent frame removal based on the clean signal
    x_frames, y_frames = [], []
    for start in range(0, len(x) - n_frame + 1, hop):
        x_frames.append(window * x[start : start + n_frame])
        y_frames.append(window * y[start : start + n_frame])
    energies = [20 * np.log10(np.linalg.norm(f) + eps) for f in x_frames]
    threshold = max(energies) - dyn_range
    kept = [i for i, e in enumerate(energies) if e > threshold]
    x_sil = np.zeros(n_frame + hop * (len(kept) - 1))
    y_sil = np.zeros_like(x_sil)
    for out_i, i in enumerate(kept):
        x_sil[out_i * hop : out_i * hop + n_frame] += x_frames[i]
        y_sil[out_i * hop : out_i * hop + n_frame] += y_frames[i]

    # one-third octave band matrix
    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    band_matrix = np.zeros((num_bands, len(freqs)))
    for k in range(num_bands):
        f_low = min_freq * 2 ** ((2 * k - 1) / 6)
        f_high = min_freq * 2 ** ((2 * k + 1) / 6)
        lo = int(np.argmin(np.abs(freqs - f_low)))
        hi = int(np.argmin(np.abs(freqs - f_high)))
        band_matrix[k, lo:hi] = 1.0

    # band envelopes
    def envelopes(sig):
        rows = []
        for start in range(0, len(sig) - n_frame + 1, hop):
            spec = np.abs(np.fft.rfft(window * sig[start : start + n_frame], nfft)) ** 2
            rows.append(np.sqrt(band_matrix @ spec))
        return np.array(rows)

    ex = envelopes(x_sil)
    ey = envelopes(y_sil)

    clip_gain = 10 ** (-beta / 20)
    values = []
    for m in range(n_segment, len(ex) + 1):
        for j in range(num_bands):
            seg_x = ex[m - n_segment : m, j]
            seg_y = ey[m - n_segment : m, j]
            alpha = np.linalg.norm(seg_x) / (np.linalg.norm(seg_y) + eps)
            seg_y = np.minimum(alpha * seg_y, (1 + clip_gain) * seg_x)
            cx = seg_x - np.mean(seg_x)
            cy = seg_y - np.mean(seg_y)
            denom = np.linalg.norm(cx) * np.linalg.norm(cy) + eps
            values.append(float(np.dot(cx, cy) / denom))
    return float(np.mean(values))


def build_pairs():
    rng = np.random.default_rng(20240601)
    clean_a = harmonic_voice(4, duration=2.0, seed=21)
    clean_b = harmonic_voice(9, duration=1.6, seed=21)

    def noisy(clip, snr_db, tag):
        noise = rng.standard_normal(len(clip.samples))
        noise *= np.linalg.norm(clip.samples) / np.linalg.norm(noise) * 10 ** (-snr_db / 20)
        return AudioClip(clip.samples + noise, clip.sample_rate, tag)

    pairs = {
        "a_snr10": (clean_a, noisy(clean_a, 10, "a_snr10")),
        "a_snr0": (clean_a, noisy(clean_a, 0, "a_snr0")),
        "a_snr-5": (clean_a, noisy(clean_a, -5, "a_snr-5")),
        "b_snr5": (clean_b, noisy(clean_b, 5, "b_snr5")),
        "b_other_voice": (clean_b, clean_a.with_samples(clean_a.samples[: len(clean_b)], "b_other_voice")),
    }
    return pairs


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--use-pystoi", action="store_true")
    args = parser.parse_args()

    if args.use_pystoi:
        from pystoi import stoi as reference

        def oracle(x, y, fs):
            return float(reference(x, y, fs, extended=False))

    else:
        oracle = oracle_stoi

    out_dir = ROOT / "tests" / "data" / "v1" / "stoi"
    out_dir.mkdir(parents=True, exist_ok=True)
    expected = {}
    for name, (ref, deg) in build_pairs().items():
        write_wav(ref, out_dir / f"{name}_ref.wav")
        write_wav(deg, out_dir / f"{name}_deg.wav")
        expected[name] = oracle(ref.samples, deg.samples, ref.sample_rate)
        print(name, expected[name])
    (out_dir / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()

"""Objective evaluation suite: SNR, SDR, LSD, MCD, STOI, speaker
similarity, defense success rate, CER/WER, and report assembly.

Conventions shared by the distance metrics: the first argument is the
reference signal, the second the degraded/estimated one. Infinities are
capped at +/-120 dB so every value serializes to JSON. LSD and MCD use
the natural logarithm by default (a base-10 switch is provided for LSD).
"""

from __future__ import annotations

import json
import math
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.signal

from .audio_io import AudioClip
from .encoder import SurrogateEncoder, similarity
from .melspec import LOG_FLOOR_AMIN, MelConfig, mel_power_array, stft_magnitude_array
from .validation import as_float_vector, check_equal_length

DB_CAP = 120.0

LSD_CONFIG = MelConfig(n_fft=2048, hop_length=512)
MCD_CONFIG = MelConfig(n_fft=1024, hop_length=256)
MCD_COEFF_RANGE = slice(1, 14)  # 13 cepstral coefficients, 0th excluded


def _capped_db(numerator: float, denominator: float) -> float:
    if denominator <= 0.0:
        return DB_CAP
    if numerator <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * math.log10(numerator / denominator), -DB_CAP, DB_CAP))


def snr(ref, deg) -> float:
    """Signal-to-noise ratio in dB, noise = ref - deg."""
    ref = as_float_vector(ref, "ref")
    deg = as_float_vector(deg, "deg")
    check_equal_length(ref, deg)
    signal_power = float(np.sum(ref**2))
    if signal_power == 0.0:
        raise ValueError("reference signal has zero energy")
    return _capped_db(signal_power, float(np.sum((ref - deg) ** 2)))


def sdr(ref, est) -> float:
    """Scale-invariant single-source signal-to-distortion ratio in dB.

    The target component is the projection of the estimate onto the
    reference; everything orthogonal to it counts as distortion. This is
    the single-source reduction of the usual source-separation evaluator.
    """
    ref = as_float_vector(ref, "ref")
    est = as_float_vector(est, "est")
    check_equal_length(ref, est)
    ref_power = float(np.sum(ref**2))
    if ref_power == 0.0:
        raise ValueError("reference signal has zero energy")
    target = (np.dot(est, ref) / ref_power) * ref
    return _capped_db(float(np.sum(target**2)), float(np.sum((est - target) ** 2)))


def lsd(ref, deg, base10: bool = False) -> float:
    """Log-spectral distance: per-frame RMSE of log-magnitude spectra
    (2048/512 STFT), averaged over frames."""
    ref = as_float_vector(ref, "ref")
    deg = as_float_vector(deg, "deg")
    check_equal_length(ref, deg)
    if len(ref) < LSD_CONFIG.n_fft:
        raise ValueError(f"lsd needs at least {LSD_CONFIG.n_fft} samples")
    mag_ref = np.maximum(stft_magnitude_array(ref, LSD_CONFIG), LOG_FLOOR_AMIN)
    mag_deg = np.maximum(stft_magnitude_array(deg, LSD_CONFIG), LOG_FLOOR_AMIN)
    diff = np.log(mag_ref) - np.log(mag_deg)
    if base10:
        diff = diff / math.log(10.0)
    return float(np.mean(np.sqrt(np.mean(diff**2, axis=1))))


def mel_cepstra(x: np.ndarray, sample_rate: int) -> np.ndarray:
    """Per-frame cepstral coefficients 1..13 from an 80-band log-mel power
    spectrogram (1024/256), via an orthonormal DCT-II over the bands."""
    cfg = MelConfig(
        n_fft=MCD_CONFIG.n_fft, hop_length=MCD_CONFIG.hop_length, sample_rate=sample_rate
    )
    log_mel = np.log(np.maximum(mel_power_array(x, cfg), LOG_FLOOR_AMIN))
    return cepstra_from_log_mel(log_mel)


def cepstra_from_log_mel(log_mel: np.ndarray) -> np.ndarray:
    return scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, MCD_COEFF_RANGE]


def mcd(ref: AudioClip, deg: AudioClip) -> float:
    """Mel-cepstral distortion: mean per-frame Euclidean distance between
    cepstra, frames aligned by truncation to the shorter sequence."""
    if ref.sample_rate != deg.sample_rate:
        raise ValueError("mcd requires equal sample rates")
    c_ref = mel_cepstra(ref.samples, ref.sample_rate)
    c_deg = mel_cepstra(deg.samples, deg.sample_rate)
    frames = min(len(c_ref), len(c_deg))
    if frames == 0:
        raise ValueError("clip shorter than one analysis frame")
    distances = np.linalg.norm(c_ref[:frames] - c_deg[:frames], axis=1)
    return float(np.mean(distances))


# ---------------------------------------------------------------------------
# STOI


STOI_RATE = 10000
STOI_FRAME = 256
STOI_HOP = 128
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30
STOI_BETA = -15.0
STOI_DYN_RANGE = 40.0


def resample_windowed_sinc(x: np.ndarray, rate_in: int, rate_out: int, taps: int = 64) -> np.ndarray:
    """Polyphase rational-rate resampling with a Hann-windowed sinc kernel
    of ``taps`` zero crossings per output phase."""
    if rate_in == rate_out:
        return np.asarray(x, dtype=np.float64)
    g = math.gcd(rate_in, rate_out)
    up, down = rate_out // g, rate_in // g
    cutoff = min(1.0 / up, 1.0 / down)  # cycles/sample at the upsampled rate
    half = (taps * up) // 2
    n = np.arange(-half, half + 1)
    kernel = cutoff * np.sinc(cutoff * n)
    kernel *= np.hanning(len(kernel))
    kernel *= up
    stuffed = np.zeros(len(x) * up)
    stuffed[::up] = x
    filtered = scipy.signal.fftconvolve(stuffed, kernel, mode="full")
    aligned = filtered[half : half + len(stuffed)]
    return aligned[::down]


def _stoi_window(n: int) -> np.ndarray:
    # symmetric Hann without its zero endpoints
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(1, n + 1) / (n + 1)))


def _frame_signal(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    count = (len(x) - frame) // hop + 1
    if count < 1:
        return np.empty((0, frame))
    idx = np.arange(count)[:, None] * hop + np.arange(frame)[None, :]
    return x[idx]


def _remove_silent_frames(
    ref: np.ndarray, deg: np.ndarray, frame: int, hop: int, dyn_range: float
) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames more than dyn_range dB below the loudest reference frame,
    then overlap-add the kept (windowed) frames back into signals."""
    window = _stoi_window(frame)
    ref_frames = _frame_signal(ref, frame, hop) * window
    deg_frames = _frame_signal(deg, frame, hop) * window
    energies = 20.0 * np.log10(np.linalg.norm(ref_frames, axis=1) + np.finfo(float).eps)
    mask = energies > np.max(energies) - dyn_range
    ref_frames = ref_frames[mask]
    deg_frames = deg_frames[mask]

    def overlap_add(frames: np.ndarray) -> np.ndarray:
        total = frame + hop * max(0, len(frames) - 1)
        out = np.zeros(total)
        for i, f in enumerate(frames):
            out[i * hop : i * hop + frame] += f
        return out

    return overlap_add(ref_frames), overlap_add(deg_frames)


@lru_cache(maxsize=None)
def _third_octave_bands(rate: int, nfft: int, bands: int, min_freq: float) -> np.ndarray:
    freqs = np.arange(nfft // 2 + 1) * rate / nfft
    k = np.arange(bands)
    lows = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    highs = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    matrix = np.zeros((bands, len(freqs)))
    for band in range(bands):
        lo = int(np.argmin(np.abs(freqs - lows[band])))
        hi = int(np.argmin(np.abs(freqs - highs[band])))
        matrix[band, lo:hi] = 1.0
    return matrix


def stoi(ref: AudioClip, deg: AudioClip) -> float:
    """Short-time objective intelligibility (standard, non-extended form).

    Both signals are resampled to 10 kHz, silent frames are removed using
    the reference, one-third-octave band envelopes are compared over
    sliding 30-frame segments with per-band normalization and -15 dB
    clipping, and the correlations are averaged. Result clamped to [0, 1].
    """
    if ref.sample_rate != deg.sample_rate:
        raise ValueError("stoi requires equal sample rates")
    check_equal_length(ref.samples, deg.samples)
    x = resample_windowed_sinc(ref.samples, ref.sample_rate, STOI_RATE)
    y = resample_windowed_sinc(deg.samples, deg.sample_rate, STOI_RATE)
    x, y = _remove_silent_frames(x, y, STOI_FRAME, STOI_HOP, STOI_DYN_RANGE)

    window = _stoi_window(STOI_FRAME)
    x_frames = _frame_signal(x, STOI_FRAME, STOI_HOP) * window
    y_frames = _frame_signal(y, STOI_FRAME, STOI_HOP) * window
    if len(x_frames) < STOI_SEGMENT:
        raise ValueError(
            f"fewer than {STOI_SEGMENT} frames remain after silence removal"
        )
    x_spec = np.abs(np.fft.rfft(x_frames, n=STOI_NFFT, axis=1)) ** 2
    y_spec = np.abs(np.fft.rfft(y_frames, n=STOI_NFFT, axis=1)) ** 2
    bands = _third_octave_bands(STOI_RATE, STOI_NFFT, STOI_BANDS, STOI_MIN_FREQ)
    x_env = np.sqrt(x_spec @ bands.T)  # (frames, bands)
    y_env = np.sqrt(y_spec @ bands.T)

    eps = np.finfo(float).eps
    clip_gain = 10.0 ** (-STOI_BETA / 20.0)
    correlations = []
    for m in range(STOI_SEGMENT, len(x_env) + 1):
        seg_x = x_env[m - STOI_SEGMENT : m]  # (30, bands)
        seg_y = y_env[m - STOI_SEGMENT : m]
        scale = np.linalg.norm(seg_x, axis=0) / (np.linalg.norm(seg_y, axis=0) + eps)
        seg_y = np.minimum(seg_y * scale, seg_x * (1.0 + clip_gain))
        cx = seg_x - seg_x.mean(axis=0)
        cy = seg_y - seg_y.mean(axis=0)
        denom = np.linalg.norm(cx, axis=0) * np.linalg.norm(cy, axis=0) + eps
        correlations.append(np.sum(cx * cy, axis=0) / denom)
    return float(np.clip(np.mean(correlations), 0.0, 1.0))


# ---------------------------------------------------------------------------
# speaker similarity and defense success


def srs(a: AudioClip, b: AudioClip, encoder: SurrogateEncoder) -> float:
    """Cosine similarity between the speaker embeddings of two clips."""
    return similarity(encoder.embed(a), encoder.embed(b))


def dsr(srs_values, threshold: float = 0.5) -> float:
    """Fraction of similarity values below the threshold."""
    values = list(srs_values)
    if not values:
        raise ValueError("dsr needs at least one similarity value")
    return sum(1 for v in values if v < threshold) / len(values)


# ---------------------------------------------------------------------------
# transcript error rates


def _levenshtein(ref_tokens, hyp_tokens) -> int:
    """Edit distance with uniform substitution/deletion/insertion costs."""
    previous = list(range(len(hyp_tokens) + 1))
    for i, r in enumerate(ref_tokens, start=1):
        current = [i]
        for j, h in enumerate(hyp_tokens, start=1):
            current.append(
                min(
                    previous[j] + 1,  # deletion
                    current[j - 1] + 1,  # insertion
                    previous[j - 1] + (r != h),  # substitution
                )
            )
        previous = current
    return previous[-1]


def cer_wer(ref_text: str, hyp_text: str) -> tuple[float, float]:
    """(character error rate, word error rate) of a hypothesis transcript.

    CER runs over the raw character sequence (spaces included), WER over
    whitespace tokens; both normalize by the reference length.
    """
    if not ref_text:
        raise ValueError("reference transcript is empty")
    cer = _levenshtein(list(ref_text), list(hyp_text)) / len(ref_text)
    ref_words = ref_text.split()
    if not ref_words:
        raise ValueError("reference transcript has no words")
    wer = _levenshtein(ref_words, hyp_text.split()) / len(ref_words)
    return cer, wer


# ---------------------------------------------------------------------------
# report assembly


PER_CLIP_KEYS = (
    "id",
    "snr_db",
    "sdr_db",
    "lsd",
    "mcd",
    "stoi",
    "srs_input",
    "srs_output",
    "cer",
    "wer",
)


def build_report(
    originals,
    protected,
    outputs=None,
    transcripts=None,
    encoder: SurrogateEncoder | None = None,
    config_echo: dict | None = None,
    dsr_threshold: float = 0.5,
) -> dict:
    """Per-clip metrics plus aggregate means and the defense success rate.

    ``outputs`` are cloned outputs when a real synthesis backend produced
    them; without them the output-side similarity falls back to the
    original-vs-protected embedding similarity and the report is marked
    ``"proxy": true``. ``transcripts`` is an optional per-clip list of
    (reference, hypothesis) text pairs; missing inputs yield nulls, never
    failures.
    """
    originals = list(originals)
    protected = list(protected)
    if len(originals) != len(protected):
        raise ValueError("originals and protected lists differ in length")
    if outputs is not None and len(outputs) != len(originals):
        raise ValueError("outputs list does not match originals")
    if transcripts is not None and len(transcripts) != len(originals):
        raise ValueError("transcripts list does not match originals")
    encoder = encoder if encoder is not None else SurrogateEncoder()

    per_clip = []
    for i, (orig, prot) in enumerate(zip(originals, protected)):
        row = {
            "id": orig.id,
            "snr_db": snr(orig.samples, prot.samples),
            "sdr_db": sdr(orig.samples, prot.samples),
            "lsd": lsd(orig.samples, prot.samples),
            "mcd": mcd(orig, prot),
            "stoi": stoi(orig, prot),
            "srs_input": srs(orig, prot, encoder),
        }
        if outputs is not None:
            row["srs_output"] = srs(orig, outputs[i], encoder)
        else:
            row["srs_output"] = srs(orig, prot, encoder)
        if transcripts is not None and transcripts[i] is not None:
            ref_text, hyp_text = transcripts[i]
            row["cer"], row["wer"] = cer_wer(ref_text, hyp_text)
        else:
            row["cer"] = None
            row["wer"] = None
        per_clip.append(row)

    aggregate = {}
    for key in PER_CLIP_KEYS[1:]:
        values = [row[key] for row in per_clip if row[key] is not None]
        aggregate[key] = float(np.mean(values)) if values else None
    aggregate["dsr"] = dsr([row["srs_output"] for row in per_clip], dsr_threshold)

    return {
        "per_clip": per_clip,
        "aggregate": aggregate,
        "proxy": outputs is None,
        "config_echo": config_echo or {},
    }


def report_to_json(report: dict) -> str:
    """Deterministic serialization: fixed key order, repr floats."""
    return json.dumps(report, indent=2, sort_keys=False)

"""Regenerates the synthetic speech-like fixtures under tests/fixtures.

Voiced segments are a glottal pulse train with a drifting pitch passed
through formant resonators; unvoiced segments are high-passed noise bursts.
The output is deterministic for a given seed.
"""
import argparse
import pathlib

import numpy as np
from scipy import signal
from scipy.io import wavfile

FS = 48000
VOWELS = [(730, 1090, 2440), (270, 2290, 3010), (300, 870, 2240), (530, 1840, 2480), (570, 840, 2410)]


def resonator(freq, bw):
    r = np.exp(-np.pi * bw / FS)
    theta = 2 * np.pi * freq / FS
    return [1 - r], [1, -2 * r * np.cos(theta), r * r]


def speech_like(seconds, seed):
    rng = np.random.default_rng(seed)
    n = int(seconds * FS)
    out = np.zeros(n)
    pos = 0
    while pos < n:
        syl = int(rng.uniform(0.12, 0.3) * FS)
        seg = np.arange(min(syl, n - pos))
        if rng.random() < 0.75:
            f0 = rng.uniform(100, 220) * (1 + 0.1 * np.sin(2 * np.pi * seg / syl))
            phase = np.cumsum(f0 / FS)
            src = 2 * (phase - np.floor(phase)) - 1
            src = np.diff(np.concatenate([[0.0], src]))
            src[np.abs(src) > 1] = -1.0
            x = src
            for f, bw in zip(rng.choice(VOWELS, 1)[0], (80, 100, 120)):
                b, a = resonator(f, bw)
                x = signal.lfilter(b, a, x)
        else:
            b, a = signal.butter(4, 3000, "highpass", fs=FS)
            x = 0.3 * signal.lfilter(b, a, rng.standard_normal(len(seg)))
        env = np.sin(np.pi * seg / len(seg)) ** 2
        out[pos : pos + len(seg)] = x * env
        pos += len(seg) + int(rng.uniform(0.02, 0.12) * FS)
    return 0.5 * out / np.max(np.abs(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x = speech_like(10.0, seed=20231)
    wavfile.write(out / "speech_like_10s.wav", FS, np.round(x * 32767).astype(np.int16))


if __name__ == "__main__":
    main()

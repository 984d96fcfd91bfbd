"""Regenerates the MFCC test vector and its reference features.

The reference is computed here with numpy, independently of the Rust code,
so the golden test checks two implementations against each other.

    python3 make_mfcc_vector.py
"""

import wave
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
FS = 16000
FRAME, HOP, NFFT, NFILT, NCEP = 400, 160, 512, 26, 16


def test_vector():
    t = np.arange(FS) / FS
    f0 = 140.0 * (1.0 + 0.03 * np.sin(2 * np.pi * 3.0 * t))
    phase = 2 * np.pi * np.cumsum(f0) / FS
    x = np.zeros(FS)
    for k in range(1, 40):
        if k * 140.0 > 7000.0:
            break
        env = 1.0 / (1.0 + ((k * 140.0 - 700.0) / 250.0) ** 2) + 0.5 / (1.0 + ((k * 140.0 - 1800.0) / 300.0) ** 2)
        x += (env + 0.02) / k**0.5 * np.sin(k * phase + 0.7 * k)
    # Deterministic pseudo-noise (LCG) so the file needs no RNG library.
    state, noise = 12345, np.empty(FS)
    for i in range(FS):
        state = (1103515245 * state + 12345) % 2**31
        noise[i] = state / 2**31 - 0.5
    x += 0.05 * noise
    x[: FS // 10] *= np.linspace(0.0, 1.0, FS // 10)
    x *= 0.5 / np.max(np.abs(x))
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)


def mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def imel(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mfcc(x):
    edges = imel(np.linspace(mel(0.0), mel(8000.0), NFILT + 2))
    freqs = np.arange(NFFT // 2 + 1) * FS / NFFT
    fb = np.zeros((NFILT, freqs.size))
    for m in range(NFILT):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs > lo) & (freqs <= c)
        falling = (freqs > c) & (freqs < hi)
        fb[m, rising] = (freqs[rising] - lo) / (c - lo)
        fb[m, falling] = (hi - freqs[falling]) / (hi - c)
    window = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(FRAME) / (FRAME - 1))
    q = np.arange(1, NCEP + 1)[:, None]
    m = np.arange(NFILT)[None, :]
    dct = np.sqrt(2.0 / NFILT) * np.cos(np.pi * q * (m + 0.5) / NFILT)
    rows = []
    for start in range(0, len(x) - FRAME + 1, HOP):
        f = x[start : start + FRAME]
        e = np.concatenate([[f[0]], f[1:] - 0.97 * f[:-1]]) * window
        power = np.abs(np.fft.rfft(e, NFFT)) ** 2
        rows.append(dct @ np.log(np.maximum(fb @ power, 1e-10)))
    return np.array(rows)


def rust_exp(v):
    mantissa, exp = f"{v:.8e}".split("e")
    return f"{mantissa}e{int(exp)}"


def main():
    pcm = test_vector()
    with wave.open(str(HERE / "vector_1s.wav"), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(FS)
        w.writeframes(pcm.tobytes())
    feats = mfcc(pcm.astype(np.float64) / 32768.0)
    with open(HERE / "vector_1s_mfcc.csv", "w") as out:
        out.write(",".join(f"c{i}" for i in range(1, NCEP + 1)) + "\n")
        for row in feats:
            out.write(",".join(rust_exp(v) for v in row) + "\n")


if __name__ == "__main__":
    main()

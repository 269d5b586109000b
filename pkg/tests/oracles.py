"""Independent reference implementations used to check the package.

Nothing here imports drumscribe's DSP; spectra come from numpy.fft or from a
direct O(N^2) sum so a bug in the package FFT cannot hide itself.
"""

import numpy as np

TOM, KICK, SNARE, CLOSED_HAT, RIDE, CRASH, OPEN_HAT = range(7)


def naive_dft(x, inverse=False):
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    basis = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    out = x @ basis.T
    return out / n if inverse else out


def band_power_fraction(samples, rate, lo_hz, hi_hz):
    p = np.abs(np.fft.rfft(np.asarray(samples, dtype=np.float64))) ** 2
    f = np.fft.rfftfreq(len(samples), 1.0 / rate)
    return p[(f >= lo_hz) & (f < hi_hz)].sum() / p.sum()


def rms_envelope(samples, rate, win_s=0.01):
    w = max(1, int(round(win_s * rate)))
    n = len(samples) // w
    frames = np.asarray(samples[: n * w], dtype=np.float64).reshape(n, w)
    return np.sqrt((frames**2).mean(axis=1)), w / rate


def drum_features(samples, rate):
    """(spectral centroid Hz, power fraction below 3.5 kHz, peak Hz, decay s)."""
    x = np.asarray(samples, dtype=np.float64)
    p = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(len(x), 1.0 / rate)
    centroid = float((f * p).sum() / p.sum())
    low = float(p[f < 3500].sum() / p.sum())
    peak = float(f[np.argmax(p)])
    env, step = rms_envelope(x, rate)
    top = int(np.argmax(env))
    below = np.nonzero(env[top:] < 0.1 * env[top])[0]
    decay = (below[0] if below.size else len(env) - top) * step
    return centroid, low, peak, decay


def rule_classify(samples, rate):
    """Hand-written centroid + decay rule; returns a class code."""
    centroid, low, peak, decay = drum_features(samples, rate)
    if centroid < 600:
        return KICK if centroid < 100 or peak < 90 else TOM
    if centroid < 6000:
        return SNARE
    if decay < 0.3:
        return CLOSED_HAT
    if decay < 1.1:
        return OPEN_HAT
    return CRASH if low > 0.03 else RIDE


def param_count_vit(image_size, patch_size, d, depth, heads, mlp_ratio, classes):
    """Hand count of the ViT parameters (no Q/K/V biases)."""
    tokens = (image_size // patch_size) ** 2 + 1
    patch = patch_size * patch_size * d + d
    embed = d + tokens * d
    attn = 3 * d * d + d * d + d
    mlp = d * (mlp_ratio * d) + mlp_ratio * d + (mlp_ratio * d) * d + d
    norms = 2 * (2 * d)
    block = attn + mlp + norms
    return patch + embed + depth * block + 2 * d + d * classes + classes


def reference_gru_step(x, h, p):
    """One GRU step written out gate by gate from the textbook equations."""
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    r = sig(x @ p["w_ir"] + h @ p["w_hr"] + p["b_r"])
    z = sig(x @ p["w_iz"] + h @ p["w_hz"] + p["b_z"])
    n = np.tanh(x @ p["w_in"] + p["b_in"] + r * (h @ p["w_hn"] + p["b_hn"]))
    return (1 - z) * n + z * h

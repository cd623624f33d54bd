"""Mono WAV input/output.

Reads 8/16/32-bit PCM and 32/64-bit float files, returning float samples in
[-1, 1]. Writes 32-bit float WAV.
"""

import os

import numpy as np
from scipy.io import wavfile

from .errors import InputSizeError, ParameterError

_INT_SCALE = {np.dtype("int16"): 32768.0, np.dtype("int32"): 2147483648.0}


def read_wav(path):
    """Return ``(samples, sample_rate)`` for a mono WAV file."""
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ParameterError("cannot read {}: {}".format(path, exc)) from exc
    if data.ndim != 1:
        raise ParameterError("{} has {} channels; only mono is supported".format(
            path, data.shape[1]))
    if data.dtype in _INT_SCALE:
        x = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise ParameterError("unsupported WAV sample type {}".format(data.dtype))
    if x.size == 0:
        raise InputSizeError("{} contains no samples".format(path))
    return x, float(rate)


def write_wav(path, samples, sample_rate):
    """Write mono 32-bit float WAV."""
    x = np.asarray(samples, dtype=np.float32)
    if x.ndim != 1:
        raise ParameterError("only mono signals can be written")
    rate = int(round(sample_rate))
    if rate != sample_rate:
        raise ParameterError("WAV needs an integer sample rate, got {}".format(sample_rate))
    wavfile.write(path, rate, x)

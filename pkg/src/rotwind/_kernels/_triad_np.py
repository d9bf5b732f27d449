"""NumPy fallback for the triad accumulation kernel."""

import numpy as np


def triad_accumulate_np(out, coeff, ki, li, mi, w1, w2):
    """out[mi[t]] += coeff[t] * w1[ki[t]] * w2[li[t]], vectorized scatter-add."""
    if len(coeff) == 0:
        return out
    contrib = coeff * w1[ki] * w2[li]
    n = out.shape[0]
    out += np.bincount(mi, weights=contrib.real, minlength=n) + 1j * np.bincount(
        mi, weights=contrib.imag, minlength=n
    )
    return out

"""Hot kernels: compiled extension when available, NumPy fallback otherwise.

The triad accumulation out[m] += c[t] * w1[k[t]] * w2[l[t]] dominates the
runtime of every quadratic-form application inside the time steppers and
the Monte Carlo sweeps, so it gets a compiled implementation.  Import of
the extension is optional; `backend()` reports which one is active.
"""

from ._triad_np import triad_accumulate_np

try:  # compiled core built by setup.py; absent in source-only installs
    from ._triad_cy import triad_accumulate_cy as _triad_impl

    _BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    _triad_impl = triad_accumulate_np
    _BACKEND = "numpy"


def backend() -> str:
    return _BACKEND


def triad_accumulate(out, coeff, ki, li, mi, w1, w2):
    """out[mi[t]] += coeff[t] * w1[ki[t]] * w2[li[t]] for all t, in place."""
    return _triad_impl(out, coeff, ki, li, mi, w1, w2)

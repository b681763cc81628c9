"""Overflow-safe products of exponentials with erfc and Gaussians."""

import numpy as np
from scipy.special import erfc, erfcx

SQRT_PI = np.sqrt(np.pi)


def exp_erfc(a, z, shifted=None):
    """Return ``exp(a) * erfc(z)`` without forming either factor separately.

    For ``z >= 0`` the identity ``erfc(z) = exp(-z**2) erfcx(z)`` folds the
    Gaussian decay into the exponent, which keeps ``exp(a)`` from overflowing
    when ``a`` is large and ``erfc(z)`` is tiny. ``shifted``, if given, is
    ``a - z**2`` computed by the caller without cancellation.
    """
    a, z = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(z, dtype=float))
    e = a - z**2 if shifted is None else np.broadcast_to(np.asarray(shifted, dtype=float), a.shape)
    out = np.empty(a.shape)
    pos = z >= 0
    out[pos] = np.exp(e[pos]) * erfcx(z[pos])
    neg = ~pos
    out[neg] = np.exp(a[neg]) * erfc(z[neg])
    return out if out.ndim else float(out)


def exp_gauss(a, z):
    """Return ``exp(a) * exp(-z**2)``."""
    return np.exp(np.asarray(a, dtype=float) - np.asarray(z, dtype=float) ** 2)

"""Pure numpy versions of the compiled kernels (same signatures)."""
import numpy as np


def phase_kick(u, coef, half_power, dw=None):
    """In place ``u *= exp(-i*(coef*|u|**(2*half_power) + dw))``."""
    r2 = u.real * u.real + u.imag * u.imag
    if half_power == 1.0:
        phi = coef * r2
    else:
        phi = coef * r2**half_power
    if dw is not None:
        if dw.shape[0] != u.shape[0]:
            raise ValueError("dw length does not match u")
        phi += dw
    u *= np.exp(-1j * phi)


def abs_pow_sum(a, p):
    """Return ``sum(|a|**p)``."""
    r2 = a.real * a.real + a.imag * a.imag
    if p == 2.0:
        return float(r2.sum())
    return float((r2 ** (0.5 * p)).sum())


def abs_max(a):
    if a.size == 0:
        return 0.0
    return float(np.sqrt((a.real * a.real + a.imag * a.imag).max()))

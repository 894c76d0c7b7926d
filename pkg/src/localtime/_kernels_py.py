"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

# Bound on the temporary (times x pairs x terms) block held at once.
_CHUNK_ELEMS = 1 << 21


def schur_apply(rho, level_of, coeff):
    return coeff[np.ix_(level_of, level_of)] * rho


def phase_sum(times, freqs, weights):
    nt = times.shape[0]
    npair, nk = freqs.shape
    out = np.empty((nt, npair), dtype=np.complex128)
    step = max(1, _CHUNK_ELEMS // max(1, npair * nk))
    for start in range(0, nt, step):
        t = times[start:start + step, None, None]
        out[start:start + step] = np.sum(weights * np.exp(-1j * t * freqs), axis=-1)
    return out

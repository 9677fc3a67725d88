"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``flip_metric``, ``eigenbasis_residual``, ``min_gap_pair``)
resolve to the numba versions unless numba is missing or disabled through
``MBLPROP_DISABLE_NUMBA``. Both variants stay importable under ``NUMPY`` and
``NUMBA`` so tests and the benchmark can compare them side by side.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# Growth metric of a single-site flip under a diagonal Hamiltonian.
#
# Rows of the evolved flip are grouped as (s, c): s indexes configurations of
# the region S, c those of its complement. Inside group s every entry carries
# amplitude amp[s, c] * exp(i * delta[s, c] * t); the restriction replaces the
# group by its mean, and the residual is block-permutation times diagonal, so
# its operator norm is the largest entry modulus.
# ---------------------------------------------------------------------------


def _flip_metric_numpy(delta, amps, times, chunk=64):
    out = np.empty(len(times))
    for start in range(0, len(times), chunk):
        t = times[start:start + chunk, None, None]
        vals = amps[None] * np.exp(1j * delta[None] * t)
        mean = vals.mean(axis=2, keepdims=True)
        out[start:start + chunk] = np.abs(vals - mean).max(axis=(1, 2))
    return out


@njit(cache=True, nogil=True)
def _flip_metric_numba(delta, amps, times):
    n_s, n_c = delta.shape
    out = np.empty(times.shape[0])
    buf = np.empty(n_c, dtype=np.complex128)
    for it in range(times.shape[0]):
        t = times[it]
        best = 0.0
        for s in range(n_s):
            acc = 0.0 + 0.0j
            for c in range(n_c):
                ph = delta[s, c] * t
                v = amps[s, c] * (np.cos(ph) + 1j * np.sin(ph))
                buf[c] = v
                acc += v
            acc /= n_c
            for c in range(n_c):
                r = abs(buf[c] - acc)
                if r > best:
                    best = r
        out[it] = best
    return out


# ---------------------------------------------------------------------------
# Residual A_t - Gamma_S(A_t) written in the energy eigenbasis.
#
# a_eig      : W^dag A W
# blocks[m]  : W_s^dag W_s' for the flattened pair m = s * n_s + s', where
#              W_s are the rows of W whose S-configuration is s
# The restriction coefficients are g[s, s'] = <blocks[s, s'], M>_F / n_c, with
# M = a_eig evolved to time t, and the residual is M - sum g[s, s'] blocks[s, s'].
# ---------------------------------------------------------------------------


def _eigenbasis_residual_numpy(a_eig, energies, t, blocks, n_c):
    phase = np.exp(1j * energies * t)
    m = a_eig * np.outer(phase, phase.conj())
    flat = blocks.reshape(blocks.shape[0], -1)
    g = (flat @ m.ravel().conj()).conj() / n_c
    return m - (g @ flat).reshape(m.shape)


@njit(cache=True, nogil=True)
def _eigenbasis_residual_numba(a_eig, energies, t, blocks, n_c):
    dim = a_eig.shape[0]
    nb = blocks.shape[0]
    phase = np.empty(dim, dtype=np.complex128)
    for a in range(dim):
        phase[a] = np.cos(energies[a] * t) + 1j * np.sin(energies[a] * t)
    m = np.empty((dim, dim), dtype=np.complex128)
    for a in range(dim):
        pa = phase[a]
        for b in range(dim):
            m[a, b] = a_eig[a, b] * pa * np.conj(phase[b])
    # both contractions go through BLAS gemv
    flat = blocks.reshape(nb, dim * dim)
    mflat = m.reshape(dim * dim)
    g = np.conj(np.dot(flat, np.conj(mflat))) / n_c
    return (mflat - np.dot(g, flat)).reshape(dim, dim)


# ---------------------------------------------------------------------------
# Brute-force minimum |g_i - g_j| over all pairs i < j of a gap list: the
# O(D^4) reference scan for gap genericity.
# ---------------------------------------------------------------------------


def _min_gap_pair_numpy(gaps):
    best = np.inf
    for i in range(len(gaps) - 1):
        d = np.abs(gaps[i + 1:] - gaps[i]).min()
        if d < best:
            best = d
    return float(best)


@njit(cache=True, nogil=True)
def _min_gap_pair_numba(gaps):
    best = np.inf
    n = gaps.shape[0]
    for i in range(n - 1):
        gi = gaps[i]
        for j in range(i + 1, n):
            d = abs(gaps[j] - gi)
            if d < best:
                best = d
    return best


NUMPY = {
    "flip_metric": _flip_metric_numpy,
    "eigenbasis_residual": _eigenbasis_residual_numpy,
    "min_gap_pair": _min_gap_pair_numpy,
}

NUMBA = {
    "flip_metric": _flip_metric_numba,
    "eigenbasis_residual": _eigenbasis_residual_numba,
    "min_gap_pair": _min_gap_pair_numba,
}

BACKEND = "numba" if HAVE_NUMBA else "numpy"
_ACTIVE = NUMBA if HAVE_NUMBA else NUMPY

flip_metric = _ACTIVE["flip_metric"]
eigenbasis_residual = _ACTIVE["eigenbasis_residual"]
min_gap_pair = _ACTIVE["min_gap_pair"]

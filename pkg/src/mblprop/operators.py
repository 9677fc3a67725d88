"""Dense operator algebra on a chain of qudits.

Operators and states are plain numpy arrays. Basis order is lexicographic in
the tensor product with site 0 the slowest index, so ``kron(op_0, op_1, ...)``
acts with ``op_i`` on site ``i``. Lattice information travels with the
:class:`Region` objects that every locality-aware function takes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, InvalidShape

DEFAULT_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def generalized_x(d: int) -> np.ndarray:
    """Flip operator with entries ``(1 - delta_rs) / (d - 1)``; Pauli X for d=2."""
    return (np.ones((d, d)) - np.eye(d)).astype(complex) / (d - 1)


@dataclass(frozen=True)
class Lattice:
    """Open chain of ``num_sites`` qudits of dimension ``local_dim``.

    ``max_qubits`` caps ``num_sites * log2(local_dim)`` so that dense D x D
    matrices stay within memory.
    """

    num_sites: int
    local_dim: int = 2
    max_qubits: float = 14.0

    def __post_init__(self):
        if self.num_sites < 1:
            raise InvalidInput(f"num_sites must be positive, got {self.num_sites}")
        if self.local_dim < 2:
            raise InvalidInput(f"local_dim must be >= 2, got {self.local_dim}")
        size = self.num_sites * math.log2(self.local_dim)
        if size > self.max_qubits + 1e-12:
            raise InvalidInput(
                f"Hilbert space of {size:.1f} qubits exceeds the budget of "
                f"{self.max_qubits} (raise max_qubits to override)"
            )

    @property
    def dim(self) -> int:
        return self.local_dim ** self.num_sites

    def region(self, sites: Iterable[int]) -> "Region":
        return Region(sites, self)

    def full(self) -> "Region":
        return Region(range(self.num_sites), self)

    def empty(self) -> "Region":
        return Region((), self)


@dataclass(frozen=True, init=False)
class Region:
    """Sorted set of sites on a lattice."""

    sites: tuple
    lattice: Lattice = field(compare=True)

    def __init__(self, sites: Iterable[int], lattice: Lattice):
        s = tuple(sorted({int(i) for i in sites}))
        if s and (s[0] < 0 or s[-1] >= lattice.num_sites):
            raise InvalidInput(f"sites {s} outside lattice of {lattice.num_sites} sites")
        object.__setattr__(self, "sites", s)
        object.__setattr__(self, "lattice", lattice)

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site):
        return site in self.sites

    @property
    def dim(self) -> int:
        return self.lattice.local_dim ** len(self.sites)

    def enlarge(self, l: int) -> "Region":
        """Region plus every site within chain distance ``l``."""
        if l < 0:
            raise InvalidInput("enlargement must be non-negative")
        n = self.lattice.num_sites
        grown = {j for i in self.sites for j in range(max(0, i - l), min(n, i + l + 1))}
        return Region(grown, self.lattice)

    def complement(self) -> "Region":
        return Region(set(range(self.lattice.num_sites)) - set(self.sites), self.lattice)

    def union(self, other: "Region") -> "Region":
        return Region(set(self.sites) | set(other.sites), self.lattice)

    def intersection(self, other: "Region") -> "Region":
        return Region(set(self.sites) & set(other.sites), self.lattice)

    def issubset(self, other: "Region") -> bool:
        return set(self.sites) <= set(other.sites)

    def isdisjoint(self, other: "Region") -> bool:
        return not set(self.sites) & set(other.sites)

    def is_full(self) -> bool:
        return len(self.sites) == self.lattice.num_sites

    def __repr__(self):
        return f"Region({list(self.sites)}, N={self.lattice.num_sites})"


def as_region(sites, lattice: Lattice) -> Region:
    if isinstance(sites, Region):
        return sites
    if isinstance(sites, (int, np.integer)):
        sites = [sites]
    return Region(sites, lattice)


def _axes_front(region: Region) -> list:
    return list(region.sites) + list(region.complement().sites)


def embed_local(op: np.ndarray, sites: Region) -> np.ndarray:
    """Act with ``op`` on ``sites`` (in sorted order) and as identity elsewhere."""
    lat = sites.lattice
    d, n, k = lat.local_dim, lat.num_sites, len(sites)
    op = np.asarray(op, dtype=complex)
    if op.shape != (d ** k, d ** k):
        raise InvalidShape(f"operator of shape {op.shape} cannot act on {k} sites of dimension {d}")
    full = np.kron(op, np.eye(d ** (n - k)))
    order = _axes_front(sites)
    if order == list(range(n)):
        return full
    inv = np.argsort(order)
    t = full.reshape([d] * (2 * n)).transpose(list(inv) + [n + i for i in inv])
    return t.reshape(lat.dim, lat.dim)


def apply_local(op: np.ndarray, sites: Region, vectors: np.ndarray) -> np.ndarray:
    """Apply a local operator to a state vector or to the columns of a matrix."""
    lat = sites.lattice
    d, n, k = lat.local_dim, lat.num_sites, len(sites)
    vec = np.asarray(vectors)
    cols = vec.shape[1:] if vec.ndim > 1 else ()
    t = vec.reshape([d] * n + list(cols))
    t = np.moveaxis(t, list(sites.sites), list(range(k)))
    shape = t.shape
    t = (op @ t.reshape(d ** k, -1)).reshape(shape)
    t = np.moveaxis(t, list(range(k)), list(sites.sites))
    return t.reshape(vec.shape)


def partial_trace(a: np.ndarray, keep: Region) -> np.ndarray:
    """Trace out the complement of ``keep``; returns a d^|keep| square matrix."""
    lat = keep.lattice
    d, n = lat.local_dim, lat.num_sites
    a = np.asarray(a)
    if a.shape != (lat.dim, lat.dim):
        raise InvalidShape(f"expected a {lat.dim}x{lat.dim} operator, got {a.shape}")
    order = _axes_front(keep)
    t = a.reshape([d] * (2 * n)).transpose(order + [n + i for i in order])
    dk, dr = keep.dim, lat.dim // keep.dim
    return np.einsum("ibjb->ij", t.reshape(dk, dr, dk, dr))


def reduced_state(psi: np.ndarray, keep: Region) -> np.ndarray:
    """Reduced density matrix of a pure state without forming |psi><psi|."""
    lat = keep.lattice
    d, n = lat.local_dim, lat.num_sites
    t = np.asarray(psi).reshape([d] * n).transpose(_axes_front(keep))
    m = t.reshape(keep.dim, -1)
    return m @ m.conj().T


def restrict(a: np.ndarray, region: Region) -> np.ndarray:
    """Gamma_S: replace the action outside ``region`` by the normalised identity."""
    lat = region.lattice
    if region.is_full():
        return np.array(a, dtype=complex, copy=True)
    scale = lat.dim // region.dim
    if len(region) == 0:
        return np.trace(a) / lat.dim * np.eye(lat.dim, dtype=complex)
    return embed_local(partial_trace(a, region) / scale, region)


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value (max |eigenvalue| for Hermitian input)."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    if is_hermitian(a, 1e-13 * max(1.0, float(np.abs(a).max()))):
        return float(np.abs(np.linalg.eigvalsh(a)).max())
    return float(np.linalg.norm(a, 2))


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values."""
    a = np.asarray(a)
    if is_hermitian(a, 1e-13 * max(1.0, float(np.abs(a).max()))):
        return float(np.abs(np.linalg.eigvalsh(a)).sum())
    return float(np.linalg.svd(a, compute_uv=False).sum())


def is_hermitian(a: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(np.abs(a - a.conj().T).max() <= tol)


def is_unitary(u: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    u = np.asarray(u)
    return bool(np.abs(u @ u.conj().T - np.eye(u.shape[0])).max() <= tol)


def support(a: np.ndarray, lattice: Lattice, tol: float = 1e-12) -> Region:
    """Sites on which ``a`` acts differently from the identity."""
    full = lattice.full()
    sites = []
    for i in range(lattice.num_sites):
        rest = Region(set(full.sites) - {i}, lattice)
        if operator_norm(a - restrict(a, rest)) > tol:
            sites.append(i)
    return Region(sites, lattice)


def product_state(local: np.ndarray, lattice: Lattice) -> np.ndarray:
    psi = np.ones(1, dtype=complex)
    for _ in range(lattice.num_sites):
        psi = np.kron(psi, local)
    return psi


def plus_state(lattice: Lattice) -> np.ndarray:
    d = lattice.local_dim
    return product_state(np.ones(d, dtype=complex) / math.sqrt(d), lattice)


@dataclass
class LocalityProfile:
    """Truncation errors ``err_l = ||A - Gamma_{X_l}(A)||`` for l = 0..N."""

    base_region: Region
    samples: list
    envelope: list
    fitted_decay: tuple | None = None

    def error(self, l: int) -> float:
        """Measured error at enlargement ``l``; saturates at the last sample."""
        if l < 0:
            raise InvalidInput("l must be non-negative")
        return self.samples[min(l, len(self.samples) - 1)][1]

    def is_monotone(self, tol: float = 1e-12) -> bool:
        errs = [e for _, e in self.samples]
        return all(b <= a + tol for a, b in zip(errs, errs[1:]))

    def to_dict(self) -> dict:
        return {
            "base_region": list(self.base_region.sites),
            "samples": [[int(l), float(e)] for l, e in self.samples],
            "envelope": [float(e) for e in self.envelope],
            "fitted_decay": None if self.fitted_decay is None else [float(c) for c in self.fitted_decay],
        }


def fit_exponential_decay(samples: Sequence, floor: float = 1e-13):
    """Least-squares fit of ``err ~ c1 * exp(-c2 * l)`` on samples above ``floor``."""
    pts = [(l, e) for l, e in samples if e > floor]
    if len(pts) < 2:
        return None
    ls = np.array([p[0] for p in pts], dtype=float)
    logs = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(ls, logs, 1)
    return float(np.exp(intercept)), float(-slope)


def locality_profile(a: np.ndarray, base: Region, max_l: int | None = None) -> LocalityProfile:
    norm = operator_norm(a)
    if norm <= 0:
        raise InvalidInput("locality profile needs a non-zero operator")
    n = base.lattice.num_sites
    max_l = n if max_l is None else max_l
    samples = []
    for l in range(max_l + 1):
        region = base.enlarge(l)
        err = 0.0 if region.is_full() else operator_norm(a - restrict(a, region))
        samples.append((l, err))
    errs = [e for _, e in samples]
    envelope = list(np.maximum.accumulate(errs[::-1])[::-1])
    return LocalityProfile(base, samples, envelope, fit_exponential_decay(samples))


# -- serialization ------------------------------------------------------------
# Operators are stored row-major as a flat list of [re, im] pairs.


def operator_to_json(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=complex)
    pairs = [[float(z.real), float(z.imag)] for z in a.ravel()]
    return json.dumps({"shape": list(a.shape), "data": pairs})


def operator_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    data = np.array(obj["data"], dtype=float)
    return (data[:, 0] + 1j * data[:, 1]).reshape(obj["shape"])


def operator_to_bytes(a: np.ndarray) -> bytes:
    """Row-major little-endian float64 pairs (re, im)."""
    return np.ascontiguousarray(a, dtype="<c16").tobytes()


def operator_from_bytes(raw: bytes, dim: int) -> np.ndarray:
    return np.frombuffer(raw, dtype="<c16").reshape(dim, dim).copy()

"""Disordered spin-chain Hamiltonians, spectra and quasi-local dressing circuits."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from . import kernels
from .errors import InvalidInput, Unsupported
from .operators import (
    PAULI_X,
    Lattice,
    LocalityProfile,
    Region,
    apply_local,
    embed_local,
    generalized_x,
    is_hermitian,
    locality_profile,
)

# Independent random streams derived from one user seed.
STREAM_FIELDS = 0
STREAM_COUPLINGS = 1
STREAM_DRESSING = 2
STREAM_TIMES = 3
STREAM_HAAR = 4


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for a named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)]))


def spin_configurations(lattice: Lattice) -> np.ndarray:
    """(D, N) array of z-values, +1 for local state |0> and -1 for |1>."""
    n = lattice.num_sites
    idx = np.arange(lattice.dim)[:, None]
    bits = (idx >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1 - 2 * bits


@dataclass(frozen=True)
class DisorderSpec:
    """Disorder parameters: fields uniform on [-W, W], couplings
    ``J0 * u * exp(-|i - j| / xi)`` with u uniform on [-1, 1]."""

    seed: int = 0
    field_width: float = 1.0
    coupling_scale: float = 0.3
    decay_length: float = 1.0
    interaction_order: int = 2

    def __post_init__(self):
        if self.field_width <= 0:
            raise InvalidInput("field_width must be positive")
        if self.coupling_scale < 0:
            raise InvalidInput("coupling_scale must be non-negative")
        if self.decay_length <= 0:
            raise InvalidInput("decay_length must be positive")
        if self.interaction_order != 2:
            raise Unsupported("only two-body interactions are implemented")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigen-decomposition with energies in ascending order.

    ``eigenvectors[:, k]`` belongs to ``energies[k]``. For Hamiltonians that are
    diagonal in the computational basis ``basis_order`` holds the basis index
    of every eigenvector, which enables O(D) fast paths downstream.
    """

    energies: np.ndarray
    eigenvectors: np.ndarray
    basis_order: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def is_diagonal(self) -> bool:
        return self.basis_order is not None

    @property
    def norm(self) -> float:
        return float(np.abs(self.energies).max())

    @cached_property
    def min_gap(self) -> float:
        if self.dim < 2:
            return float("inf")
        return float(np.diff(self.energies).min())

    @cached_property
    def min_gap_of_gaps(self) -> float:
        return min_gap_of_gaps(self.energies)

    def energy_basis(self, a: np.ndarray) -> np.ndarray:
        """Matrix elements ``<E_a| A |E_b>``."""
        w = self.eigenvectors
        return w.conj().T @ a @ w

    def from_energy_basis(self, a: np.ndarray) -> np.ndarray:
        w = self.eigenvectors
        return w @ a @ w.conj().T

    def amplitudes(self, psi: np.ndarray) -> np.ndarray:
        return self.eigenvectors.conj().T @ psi


def spectrum_of(h: np.ndarray) -> Spectrum:
    """Dense Hermitian diagonalisation."""
    h = np.asarray(h)
    if not is_hermitian(h, 1e-10 * max(1.0, float(np.abs(h).max()))):
        raise InvalidInput("Hamiltonian is not Hermitian")
    evals, evecs = np.linalg.eigh(h)
    return Spectrum(evals, evecs)


def positive_gaps(energies: np.ndarray) -> np.ndarray:
    e = np.sort(np.asarray(energies, dtype=float))
    iu = np.triu_indices(len(e), 1)
    return (e[None, :] - e[:, None])[iu]


def min_gap_of_gaps(energies: np.ndarray, brute_force_max_dim: int = 256) -> float:
    """Smallest ``|(E_a - E_b) - (E_c - E_d)|`` over distinct positive gaps.

    Brute force over all gap pairs for small spectra; above
    ``brute_force_max_dim`` the gaps are sorted and only neighbours compared,
    which yields the same minimum.
    """
    if len(energies) < 3:
        return float("inf")
    gaps = positive_gaps(energies)
    if len(energies) <= brute_force_max_dim:
        return float(kernels.min_gap_pair(gaps))
    gaps.sort()
    return float(np.diff(gaps).min())


@dataclass
class GenericityReport:
    """Non-degeneracy of energies and of energy gaps."""

    dim: int
    min_gap: float
    min_gap_of_gaps: float
    tol: float
    method: str

    @property
    def energies_nondegenerate(self) -> bool:
        return self.min_gap > self.tol

    @property
    def gaps_nondegenerate(self) -> bool:
        return self.min_gap_of_gaps > self.tol

    @property
    def generic(self) -> bool:
        return self.energies_nondegenerate and self.gaps_nondegenerate

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "min_gap": self.min_gap,
            "min_gap_of_gaps": self.min_gap_of_gaps,
            "tol": self.tol,
            "method": self.method,
            "energies_nondegenerate": self.energies_nondegenerate,
            "gaps_nondegenerate": self.gaps_nondegenerate,
            "generic": self.generic,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class DiagonalMBLHamiltonian:
    """``H = sum_j h_j Z_j + sum_{i<j} J_ij Z_i Z_j``, stored as its diagonal."""

    fields: np.ndarray
    couplings: np.ndarray
    lattice: Lattice
    diagonal: np.ndarray
    spec: DisorderSpec | None = None

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal).astype(complex)

    @property
    def norm(self) -> float:
        return float(np.abs(self.diagonal).max())

    @cached_property
    def spectrum(self) -> Spectrum:
        order = np.argsort(self.diagonal, kind="stable")
        vecs = np.zeros((self.lattice.dim, self.lattice.dim), dtype=complex)
        vecs[order, np.arange(self.lattice.dim)] = 1.0
        return Spectrum(self.diagonal[order], vecs, basis_order=order)


def diagonal_mbl_from_arrays(fields, couplings, lattice: Lattice, spec=None) -> DiagonalMBLHamiltonian:
    """Assemble the energy vector from explicit fields and couplings (upper triangle used)."""
    if lattice.local_dim != 2:
        raise Unsupported("the diagonal spin model is defined for d = 2 only")
    n = lattice.num_sites
    h = np.asarray(fields, dtype=float)
    j = np.triu(np.asarray(couplings, dtype=float), 1)
    if h.shape != (n,) or j.shape != (n, n):
        raise InvalidInput(f"fields must have shape ({n},) and couplings ({n}, {n})")
    z = spin_configurations(lattice).astype(float)
    energies = z @ h + np.einsum("si,ij,sj->s", z, j, z)
    return DiagonalMBLHamiltonian(h, j, lattice, energies, spec)


def build_diagonal_mbl(spec: DisorderSpec, lattice: Lattice) -> DiagonalMBLHamiltonian:
    """Draw a disorder realisation and build the diagonal Hamiltonian."""
    if lattice.local_dim != 2:
        raise Unsupported("the diagonal spin model is defined for d = 2 only")
    n = lattice.num_sites
    h = stream_rng(spec.seed, STREAM_FIELDS).uniform(-spec.field_width, spec.field_width, n)
    u = stream_rng(spec.seed, STREAM_COUPLINGS).uniform(-1.0, 1.0, (n, n))
    dist = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    j = np.triu(spec.coupling_scale * u * np.exp(-dist / spec.decay_length), 1)
    return diagonal_mbl_from_arrays(h, j, lattice, spec)


def check_genericity(h, tol: float | None = None) -> GenericityReport:
    """Check non-degenerate energies and gaps.

    ``h`` may be a dense Hermitian matrix, a :class:`DiagonalMBLHamiltonian`
    or a :class:`Spectrum`. The default tolerance is ``1e-8 * ||H||``.
    """
    if isinstance(h, DiagonalMBLHamiltonian):
        energies = np.sort(h.diagonal)
    elif isinstance(h, Spectrum):
        energies = h.energies
    else:
        h = np.asarray(h)
        if not is_hermitian(h, 1e-10 * max(1.0, float(np.abs(h).max()))):
            raise InvalidInput("genericity check needs a Hermitian matrix")
        energies = np.linalg.eigvalsh(h)
    scale = float(np.abs(energies).max()) if len(energies) else 0.0
    tol = 1e-8 * scale if tol is None else float(tol)
    mg = float(np.diff(energies).min()) if len(energies) > 1 else float("inf")
    method = "brute_force" if len(energies) <= 256 else "sorted_differences"
    return GenericityReport(len(energies), mg, min_gap_of_gaps(energies), tol, method)


@dataclass(frozen=True, eq=False)
class DressingUnitary:
    """Brick-wall circuit of two-site gates with exponentially shrinking angles.

    ``profile`` is the measured locality profile of ``V X_mid V^dag``, i.e. the
    empirical f(l) of the circuit.
    """

    unitary: np.ndarray
    lattice: Lattice
    layers: int
    angle_decay: float
    theta0: float
    seed: int
    angles: tuple = field(repr=False)
    profile: LocalityProfile | None = field(default=None, repr=False)

    def f(self, l: int) -> float:
        return self.profile.error(l)

    def conjugate(self, a: np.ndarray) -> np.ndarray:
        v = self.unitary
        return v @ a @ v.conj().T


def _random_generator(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    g = g + g.conj().T
    return g / np.abs(np.linalg.eigvalsh(g)).max()


def local_flip(d: int) -> np.ndarray:
    """Pauli X for qubits, the generalised flip otherwise."""
    return PAULI_X if d == 2 else generalized_x(d)


def identity_dressing(lattice: Lattice) -> DressingUnitary:
    """Trivial dressing V = I with its (vanishing) profile."""
    v = np.eye(lattice.dim, dtype=complex)
    mid = lattice.region([lattice.num_sites // 2])
    prof = locality_profile(embed_local(local_flip(lattice.local_dim), mid), mid)
    return DressingUnitary(v, lattice, 0, 0.0, 0.0, 0, (), prof)


def build_dressing_unitary(
    lattice: Lattice,
    layers: int,
    angle_decay: float,
    seed: int,
    theta0: float = 1.0,
    measure_profile: bool = True,
) -> DressingUnitary:
    """Brick-wall circuit ``V = U_{layers-1} ... U_0``.

    Layer ``L`` holds gates ``exp(-i theta G)`` on bonds ``(b, b+1)`` with
    ``b = L mod 2``, stepping by two. ``G`` is a random Hermitian two-site
    generator with unit norm and ``theta`` is uniform on
    ``[-theta0 exp(-alpha L), theta0 exp(-alpha L)]``.
    """
    if layers < 1:
        raise InvalidInput("layers must be >= 1")
    if angle_decay <= 0:
        raise InvalidInput("angle_decay must be positive")
    rng = stream_rng(seed, STREAM_DRESSING)
    d, n = lattice.local_dim, lattice.num_sites
    v = np.eye(lattice.dim, dtype=complex)
    angles = []
    for layer in range(layers):
        width = theta0 * np.exp(-angle_decay * layer)
        row = []
        for b in range(layer % 2, n - 1, 2):
            gen = _random_generator(rng, d * d)
            theta = rng.uniform(-width, width)
            row.append(theta)
            v = apply_local(expm(-1j * theta * gen), Region((b, b + 1), lattice), v)
        angles.append(tuple(row))
    prof = None
    if measure_profile:
        mid = lattice.region([n // 2])
        a = embed_local(local_flip(d), mid)
        prof = locality_profile(v @ a @ v.conj().T, mid)
    return DressingUnitary(v, lattice, layers, float(angle_decay), float(theta0), int(seed), tuple(angles), prof)


def dress_hamiltonian(h: DiagonalMBLHamiltonian, v: DressingUnitary) -> np.ndarray:
    """``V H V^dag`` as a dense matrix."""
    if h.lattice != v.lattice:
        raise InvalidInput("Hamiltonian and dressing live on different lattices")
    u = v.unitary
    return (u * h.diagonal[None, :]) @ u.conj().T


def dressed_spectrum(h: DiagonalMBLHamiltonian, v: DressingUnitary) -> Spectrum:
    """Exact spectrum of ``V H V^dag``: same energies, eigenvectors ``V|s>``."""
    order = np.argsort(h.diagonal, kind="stable")
    return Spectrum(h.diagonal[order], v.unitary[:, order])

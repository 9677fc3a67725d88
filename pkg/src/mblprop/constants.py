"""Constants of motion: spectral data, truncation to regions, projector bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    AmbiguousSpectrum,
    ClusterMismatch,
    InvalidInput,
    NeedTwoEigenspaces,
    NotConserved,
)
from .models import DressingUnitary
from .operators import (
    PAULI_Z,
    LocalityProfile,
    Region,
    as_region,
    embed_local,
    is_hermitian,
    locality_profile,
    operator_norm,
    partial_trace,
)

CHECK_SLACK = 1e-9


@dataclass
class BoundCheck:
    """One evaluated inequality ``lhs <relation> rhs`` with additive slack.

    ``alarm`` marks checks whose failure is a scientific alarm (raised as
    :class:`~mblprop.errors.BoundViolation` by the experiment runners);
    non-alarm checks are recorded only.
    """

    name: str
    lhs: float
    rhs: float
    relation: str = "<="
    slack: float = CHECK_SLACK
    alarm: bool = True

    @property
    def holds(self) -> bool:
        if self.relation == "<=":
            return self.lhs <= self.rhs + self.slack
        if self.relation == ">=":
            return self.lhs >= self.rhs - self.slack
        if self.relation == "==":
            return abs(self.lhs - self.rhs) <= self.slack
        raise InvalidInput(f"unknown relation {self.relation!r}")

    @property
    def margin(self) -> float:
        """Positive when the inequality holds (ignoring slack)."""
        if self.relation == ">=":
            return self.lhs - self.rhs
        if self.relation == "<=":
            return self.rhs - self.lhs
        return -abs(self.lhs - self.rhs)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "relation": self.relation,
            "slack": self.slack,
            "holds": self.holds,
            "alarm": self.alarm,
        }


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column real and positive."""
    if vecs.size == 0:
        return vecs
    idx = np.abs(vecs).argmax(axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(ph) / ph)[None, :]


@dataclass
class SpectralDecomposition:
    """Clustered eigen-decomposition ``Z = sum_k lambda_k P_k`` (ascending lambda)."""

    eigenvalues: np.ndarray
    bases: list
    gap: float
    spread: float

    @property
    def dims(self) -> list:
        return [b.shape[1] for b in self.bases]

    @property
    def num_eigenspaces(self) -> int:
        return len(self.bases)

    @property
    def projectors(self) -> list:
        return [b @ b.conj().T for b in self.bases]


def spectral_decompose(z: np.ndarray, tol: float) -> SpectralDecomposition:
    """Group eigenvalues whose neighbour spacing is at most ``tol``.

    A spacing within a factor 10 of ``tol`` (either side) makes the grouping
    depend on the threshold and raises :class:`AmbiguousSpectrum`.
    """
    z = np.asarray(z)
    if not is_hermitian(z, 1e-10 * max(1.0, float(np.abs(z).max()))):
        raise InvalidInput("spectral decomposition needs a Hermitian operator")
    evals, evecs = np.linalg.eigh(z)
    spacing = np.diff(evals)
    ambiguous = (spacing > tol / 10) & (spacing < tol * 10)
    if ambiguous.any():
        i = int(np.argmax(ambiguous))
        raise AmbiguousSpectrum(
            f"eigenvalue spacing {spacing[i]:.3e} between {evals[i]:.6g} and "
            f"{evals[i + 1]:.6g} is within a factor 10 of tol={tol:.3e}"
        )
    cuts = np.flatnonzero(spacing > tol) + 1
    groups = np.split(np.arange(len(evals)), cuts)
    lams = np.array([evals[g].mean() for g in groups])
    bases = [_fix_phases(evecs[:, g]) for g in groups]
    gap = float(np.diff(lams).min()) if len(lams) > 1 else float("inf")
    spread = max(float(evals[g].max() - evals[g].min()) for g in groups)
    return SpectralDecomposition(lams, bases, gap, spread)


@dataclass(eq=False)
class ConstantOfMotion:
    """Conserved operator with clustered spectrum and measured locality.

    ``bases[k]`` is an orthonormal basis of eigenspace ``k`` (columns), and
    ``projectors[k] = bases[k] bases[k]^dag``.
    """

    operator: np.ndarray
    eigenvalues: np.ndarray
    bases: list
    base_region: Region
    locality: LocalityProfile
    commutator_norm: float | None = None

    def __post_init__(self):
        if len(self.eigenvalues) < 2:
            raise NeedTwoEigenspaces(
                f"a constant of motion needs at least two eigenspaces, got {len(self.eigenvalues)}"
            )

    @property
    def lattice(self):
        return self.base_region.lattice

    @property
    def num_eigenspaces(self) -> int:
        return len(self.eigenvalues)

    @property
    def gap(self) -> float:
        return float(np.diff(np.sort(self.eigenvalues)).min())

    @property
    def eigenspace_dims(self) -> list:
        return [b.shape[1] for b in self.bases]

    @property
    def projectors(self) -> list:
        return [b @ b.conj().T for b in self.bases]

    def g(self, l: int) -> float:
        """Measured truncation error ``||Z - Gamma_{X_l}(Z)||``."""
        return self.locality.error(l)

    @property
    def is_strictly_local(self) -> bool:
        return self.g(0) <= 1e-12

    def summary(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "gap": self.gap,
            "eigenspace_dims": self.eigenspace_dims,
            "base_region": list(self.base_region.sites),
            "g": [[int(l), float(e)] for l, e in self.locality.samples],
            "commutator_norm": self.commutator_norm,
        }


def _commutator_check(h, z, rel_tol):
    if h is None:
        return None
    h = np.asarray(h)
    c = operator_norm(h @ z - z @ h)
    scale = operator_norm(h) * operator_norm(z)
    if c > rel_tol * max(scale, 1e-300):
        raise NotConserved(f"||[H, Z]|| = {c:.3e} exceeds {rel_tol:g} * ||H|| ||Z|| = {rel_tol * scale:.3e}")
    return float(c)


def constant_from_operator(
    z: np.ndarray,
    base_region,
    tol: float,
    hamiltonian: np.ndarray | None = None,
    commute_tol: float = 1e-9,
) -> ConstantOfMotion:
    """Generic constructor: cluster the spectrum of ``z`` and profile its locality."""
    lattice = base_region.lattice
    base = as_region(base_region, lattice)
    comm = _commutator_check(hamiltonian, z, commute_tol)
    dec = spectral_decompose(z, tol)
    if dec.num_eigenspaces < 2:
        raise NeedTwoEigenspaces("operator has a single eigenvalue cluster")
    return ConstantOfMotion(np.asarray(z), dec.eigenvalues, dec.bases, base, locality_profile(z, base), comm)


def local_constant(z_local: np.ndarray, region: Region, tol: float = 1e-8, hamiltonian=None) -> ConstantOfMotion:
    """Strictly local constant ``z_local`` acting on ``region``."""
    return constant_from_operator(embed_local(z_local, region), region, tol, hamiltonian)


def extract_dressed_z(
    h_dressed: np.ndarray | None,
    v: DressingUnitary,
    site: int,
    commute_tol: float = 1e-9,
) -> ConstantOfMotion:
    """``Z = V Z_j V^dag`` with eigenvalues (-1, +1) and analytic eigenbases.

    The eigenbasis for eigenvalue -1 is formed by the columns ``V|s>`` with
    site ``site`` in state |1>, the +1 basis by the remaining columns.
    """
    lattice = v.lattice
    if lattice.local_dim != 2:
        raise InvalidInput("dressed Z constants are defined for qubits")
    region = lattice.region([site])
    u = v.unitary
    z = v.conjugate(embed_local(PAULI_Z, region))
    z = 0.5 * (z + z.conj().T)
    comm = _commutator_check(h_dressed, z, commute_tol)
    n = lattice.num_sites
    bit = (np.arange(lattice.dim) >> (n - 1 - site)) & 1
    bases = [u[:, bit == 1], u[:, bit == 0]]
    return ConstantOfMotion(z, np.array([-1.0, 1.0]), bases, region, locality_profile(z, region), comm)


@dataclass(eq=False)
class TruncatedConstant:
    """Truncation ``Z_l = Gamma_{X_l}(Z)`` with its eigenprojectors matched to the parent.

    The truncation is computed on ``X_l`` only: ``local_operator`` is the reduced
    operator on ``X_l`` and ``local_bases[k]`` spans its eigenspace matched to
    parent eigenvalue ``k``. Full-space projectors are ``P^l_k`` embedded.
    """

    parent: ConstantOfMotion
    l: int
    region: Region
    local_operator: np.ndarray
    local_eigenvalues: list
    local_bases: list
    perturbation_norm: float
    weak: bool
    checks: list = field(default_factory=list)
    projector_distance: list = field(default_factory=list)
    sin_theta: list = field(default_factory=list)

    @property
    def operator(self) -> np.ndarray:
        return embed_local(self.local_operator, self.region)

    @property
    def local_projectors(self) -> list:
        return [b @ b.conj().T for b in self.local_bases]

    @property
    def projectors(self) -> list:
        return [embed_local(p, self.region) for p in self.local_projectors]

    @property
    def ranks(self) -> list:
        rest = self.region.lattice.dim // self.region.dim
        return [b.shape[1] * rest for b in self.local_bases]

    @property
    def ranks_match(self) -> bool:
        return self.ranks == self.parent.eigenspace_dims

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "region": list(self.region.sites),
            "g": self.perturbation_norm,
            "weak": self.weak,
            "ranks": self.ranks,
            "parent_dims": self.parent.eigenspace_dims,
            "projector_distance": [float(x) for x in self.projector_distance],
            "sin_theta": [float(x) for x in self.sin_theta],
            "checks": [c.to_dict() for c in self.checks],
        }


def truncate_constant(z: ConstantOfMotion, l: int, midpoint_tol: float = 1e-9) -> TruncatedConstant:
    """Truncate ``z`` to ``X_l`` and verify the projector perturbation bounds.

    Local eigenvalues are matched to the nearest parent eigenvalue; one sitting
    on a midpoint between two parents raises :class:`ClusterMismatch`. When
    ``||V_l|| >= gamma / 2`` the data is still returned but flagged ``weak``.
    """
    if l < 0:
        raise InvalidInput("l must be non-negative")
    lattice = z.lattice
    region = z.base_region.enlarge(l)
    scale = lattice.dim // region.dim
    z_loc = partial_trace(z.operator, region) / scale
    z_loc = 0.5 * (z_loc + z_loc.conj().T)
    full = embed_local(z_loc, region)
    g = 0.0 if region.is_full() else operator_norm(z.operator - full)
    gamma = z.gap

    evals, evecs = np.linalg.eigh(z_loc)
    lams = np.asarray(z.eigenvalues)
    dist = np.abs(evals[:, None] - lams[None, :])
    nearest = dist.argmin(axis=1)
    srt = np.sort(dist, axis=1)
    if len(lams) > 1:
        tie = srt[:, 1] - srt[:, 0] <= midpoint_tol * max(1.0, gamma)
        if tie.any():
            i = int(np.argmax(tie))
            raise ClusterMismatch(f"truncated eigenvalue {evals[i]:.6g} is equidistant from two parent eigenvalues")
    weak = not g < gamma / 2
    local_bases = [_fix_phases(evecs[:, nearest == k]) for k in range(len(lams))]
    local_vals = [evals[nearest == k] for k in range(len(lams))]
    tc = TruncatedConstant(z, l, region, z_loc, local_vals, local_bases, g, weak)
    if not weak and not tc.ranks_match:
        raise ClusterMismatch(
            f"ranks {tc.ranks} differ from parent dims {z.eigenspace_dims} although ||V_l|| < gamma/2"
        )

    for k, (p, pl) in enumerate(zip(z.projectors, tc.projectors)):
        tc.projector_distance.append(operator_norm(p - pl))
        # ||P (1 - P^l)|| is the top singular value of (1 - P^l) B for an orthonormal basis B of P
        b = z.bases[k]
        c = b - pl @ b
        tc.sin_theta.append(float(np.linalg.svd(c, compute_uv=False)[0]) if c.size else 0.0)
    dmax, smax = max(tc.projector_distance), max(tc.sin_theta)
    tc.checks.append(BoundCheck("projector_distance: ||P_k - P^l_k|| <= 2 g/gamma", dmax, 2 * g / gamma))
    tc.checks.append(BoundCheck("projector_overlap: ||P_k (1 - P^l_k)|| <= g/gamma", smax, g / gamma, alarm=False))
    corrected = g / (gamma - g) if g < gamma else float("inf")
    tc.checks.append(BoundCheck("sin_theta: ||P_k (1 - P^l_k)|| <= g/(gamma - g)", smax, corrected))
    if not weak:
        tc.checks.append(
            BoundCheck("rank: rank P^l_k == rank P_k", float(tc.ranks_match), 1.0, relation="==", slack=0.0)
        )
    return tc


class EigenspaceDims(NamedTuple):
    d_min_tilde: int
    d_min_local: int | None
    factorized: int | None


def min_eigenspace_dim(z: ConstantOfMotion) -> EigenspaceDims:
    """Smallest eigenspace dimension, plus the local factorisation when Z is strictly local."""
    dmin = min(z.eigenspace_dims)
    if not z.is_strictly_local:
        return EigenspaceDims(dmin, None, None)
    x = z.base_region
    rest = z.lattice.dim // x.dim
    local = partial_trace(z.operator, x) / rest
    dec = spectral_decompose(local, tol=z.gap / 10)
    d_loc = min(dec.dims)
    return EigenspaceDims(dmin, d_loc, d_loc * rest)

"""Alice-Bob signalling: Haar averages over the complement and local-unitary witnesses.

Bob holds an observable ``A`` supported on ``S``; Alice applies a unitary ``V``
on a region disjoint from ``S``. The signal at time ``t`` is

    |<phi| V A_t V^dag |phi> - <phi| A_t |phi>| = |<phi| [V, A_t] V^dag |phi>|

with ``phi = psi_{-t} = exp(iHt) psi`` in the default co-moving frame (the
frame in which ``tr(A_t rho_{-t}) = tr(A rho)``) or ``phi = psi`` in the fixed
frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .errors import BoundViolation, InvalidInput, InvalidProtocol
from .models import STREAM_HAAR, Spectrum, stream_rng
from .operators import Region, apply_local, as_region, operator_norm, restrict, support
from .propagation import SamplingSpec, _map, evolve_state, heisenberg_evolve

IDENTITY_TOL = 1e-10


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a complex Gaussian matrix with phase fix)."""
    return unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.exp(2j * np.pi * rng.uniform()) * np.ones((1, 1))


def _conjugate_local(u: np.ndarray, region: Region, a: np.ndarray) -> np.ndarray:
    """``U A U^dag`` with ``U`` acting on ``region``."""
    ua = apply_local(u, region, a)
    return apply_local(u, region, ua.conj().T).conj().T


@dataclass
class HaarEstimate:
    average: np.ndarray
    distance: float
    num_unitaries: int


def haar_restriction_estimate(a: np.ndarray, region: Region, num_unitaries: int, seed: int = 0) -> HaarEstimate:
    """Monte Carlo average of ``U A U^dag`` over Haar ``U`` on the complement of ``region``.

    Converges to ``Gamma_S(A)``; ``distance`` is the operator-norm gap to it.
    """
    comp = region.complement()
    target = restrict(a, region)
    if len(comp) == 0:
        return HaarEstimate(np.array(a, dtype=complex, copy=True), operator_norm(a - target), num_unitaries)
    rng = stream_rng(seed, STREAM_HAAR)
    acc = np.zeros_like(a, dtype=complex)
    for _ in range(num_unitaries):
        acc += _conjugate_local(haar_unitary(comp.dim, rng), comp, a)
    avg = acc / num_unitaries
    return HaarEstimate(avg, operator_norm(avg - target), num_unitaries)


def haar_convergence(a, region, counts=(10, 100, 1000), batches: int = 4, seed: int = 0) -> list:
    """Mean Haar-estimate error for each sample count, averaged over independent batches."""
    out = []
    for i, n in enumerate(counts):
        errs = [haar_restriction_estimate(a, region, n, seed=seed * 1_000_003 + 97 * i + b).distance
                for b in range(batches)]
        out.append((int(n), float(np.mean(errs))))
    return out


@dataclass
class SignallingRun:
    """Time-resolved signal of one encoder ``V`` acting on ``alice``."""

    encoder: np.ndarray
    alice: Region
    psi: np.ndarray
    times: np.ndarray
    values: np.ndarray
    frame: str
    identity_discrepancy: float

    @property
    def signal(self) -> float:
        return float(self.values.mean())

    @property
    def stderr(self) -> float:
        return float(self.values.std(ddof=1) / math.sqrt(len(self.values))) if len(self.values) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "alice": list(self.alice.sites),
            "frame": self.frame,
            "signal": self.signal,
            "stderr": self.stderr,
            "num_samples": int(len(self.values)),
            "identity_discrepancy": self.identity_discrepancy,
        }


def _frame_state(psi, spectrum, t, frame):
    if frame == "comoving":
        return evolve_state(psi, spectrum, -t)
    if frame == "fixed":
        return psi
    raise InvalidInput(f"unknown frame {frame!r}")


def _check_disjoint(alice: Region, bob_support: Region):
    if not alice.isdisjoint(bob_support):
        raise InvalidProtocol(
            f"encoder region {list(alice.sites)} overlaps observable support {list(bob_support.sites)}"
        )


def signal_strength(
    spectrum: Spectrum,
    encoder: np.ndarray,
    alice,
    a: np.ndarray,
    psi: np.ndarray,
    sampling: SamplingSpec = SamplingSpec(),
    frame: str = "comoving",
    a_support: Region | None = None,
    times: np.ndarray | None = None,
) -> SignallingRun:
    """Time-averaged ``|<phi|V A_t V^dag|phi> - <phi|A_t|phi>|``.

    The commutator form ``<phi|[V, A_t] V^dag|phi>`` is evaluated as well and
    must agree to ``1e-10``.
    """
    lattice = alice.lattice
    alice = as_region(alice, lattice)
    if a_support is None:
        a_support = support(a, lattice)
    _check_disjoint(alice, a_support)
    if times is None:
        times = sampling.times(sampling.resolve_t_max(spectrum))
    v_dag = encoder.conj().T

    def one(t):
        phi = _frame_state(psi, spectrum, t, frame)
        at = heisenberg_evolve(a, spectrum, t)
        x = apply_local(v_dag, alice, phi)
        direct = np.vdot(x, at @ x) - np.vdot(phi, at @ phi)
        y = at @ x
        comm = np.vdot(phi, apply_local(encoder, alice, y)) - np.vdot(phi, at @ apply_local(encoder, alice, x))
        return abs(direct), abs(direct - comm)

    res = _map(one, times, sampling.workers)
    vals = np.array([r[0] for r in res])
    disc = float(max(r[1] for r in res))
    if disc > IDENTITY_TOL:
        raise BoundViolation("commutator_identity", f"signal forms disagree by {disc:.3e}")
    return SignallingRun(encoder, alice, psi, np.asarray(times), vals, frame, disc)


@dataclass
class WitnessResult:
    """Haar search for an encoder with a large time-averaged signal."""

    best_encoder: np.ndarray
    best_signal: float
    mean_signal: float
    signals: np.ndarray
    alice: Region
    state_mode: str
    frame: str
    psi: np.ndarray | None = field(default=None, repr=False)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.signals))

    def to_dict(self) -> dict:
        return {
            "alice": list(self.alice.sites),
            "state_mode": self.state_mode,
            "frame": self.frame,
            "num_candidates": int(len(self.signals)),
            "mean_signal": self.mean_signal,
            "best_signal": self.best_signal,
            "best_index": self.best_index,
            "signals": [float(s) for s in self.signals],
        }


def _top_residual_state(at: np.ndarray, region: Region) -> np.ndarray:
    b = at - restrict(at, region)
    b = 0.5 * (b + b.conj().T)
    w, u = np.linalg.eigh(b)
    return u[:, int(np.argmax(np.abs(w)))]


def find_witness(
    spectrum: Spectrum,
    a: np.ndarray,
    region,
    num_candidates: int = 64,
    sampling: SamplingSpec = SamplingSpec(),
    psi: np.ndarray | None = None,
    state_mode: str = "experiment",
    frame: str = "comoving",
    alice: Region | None = None,
    seed: int = 0,
    a_support: Region | None = None,
) -> WitnessResult:
    """Search Haar-random encoders on Alice's region (default: complement of ``S``).

    ``state_mode="experiment"`` uses the supplied ``psi`` in the chosen frame;
    ``"optimal"`` uses, at each time, the eigenvector of ``A_t - Gamma_S(A_t)``
    with largest modulus eigenvalue, the state that saturates the Haar-average
    argument.
    """
    lattice = region.lattice
    region = as_region(region, lattice)
    if a_support is None:
        a_support = support(a, lattice)
    if not a_support.issubset(region):
        raise InvalidProtocol(
            f"observable support {list(a_support.sites)} is not inside Bob's region {list(region.sites)}"
        )
    alice = region.complement() if alice is None else as_region(alice, lattice)
    _check_disjoint(alice, region)
    if len(alice) == 0:
        raise InvalidProtocol("Alice's region is empty")
    if state_mode == "experiment" and psi is None:
        raise InvalidInput("experiment state mode needs psi")
    if state_mode not in ("experiment", "optimal"):
        raise InvalidInput(f"unknown state mode {state_mode!r}")
    rng = stream_rng(seed, STREAM_HAAR)
    encoders = [haar_unitary(alice.dim, rng) for _ in range(num_candidates)]
    times = sampling.times(sampling.resolve_t_max(spectrum))

    def one(t):
        at = heisenberg_evolve(a, spectrum, t)
        if state_mode == "optimal":
            phi = _top_residual_state(at, region)
        else:
            phi = _frame_state(psi, spectrum, t, frame)
        base = np.vdot(phi, at @ phi)
        xs = np.stack([apply_local(u.conj().T, alice, phi) for u in encoders], axis=1)
        vals = np.einsum("ik,ik->k", xs.conj(), at @ xs)
        return np.abs(vals - base)

    sig = np.array(_map(one, times, sampling.workers)).mean(axis=0)
    k = int(np.argmax(sig))
    return WitnessResult(encoders[k], float(sig[k]), float(sig.mean()), sig, alice, state_mode, frame, psi)

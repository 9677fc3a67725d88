"""Heisenberg evolution, time averages and the information-propagation experiments.

The growth metric ``||A_t - Gamma_S(A_t)||`` has no closed-form time average, so
it is sampled on ``[0, T_max]``. Three evaluation paths give identical numbers:

``flip``
    Diagonal Hamiltonian and an operator with one non-zero entry per row
    (e.g. a single-site flip). The residual is itself monomial, so its norm is
    the largest entry modulus: O(D) per time sample.
``eigenbasis``
    Any Hamiltonian; works on ``W^dag A_t W`` with precomputed blocks
    ``W_s^dag W_s'`` and avoids two dense products per sample.
``dense``
    Direct evolution, restriction and norm. Used as the reference.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import eigsh

from . import kernels
from .constants import (
    BoundCheck,
    ConstantOfMotion,
    TruncatedConstant,
    min_eigenspace_dim,
    truncate_constant,
)
from .errors import (
    AssignmentAmbiguous,
    BoundViolation,
    DegenerateSpectrum,
    InvalidInput,
    NeedTwoEigenspaces,
)
from .models import (
    STREAM_TIMES,
    DiagonalMBLHamiltonian,
    DressingUnitary,
    Spectrum,
    check_genericity,
    dressed_spectrum,
    local_flip,
    spectrum_of,
    stream_rng,
)
from .operators import (
    Region,
    as_region,
    embed_local,
    is_hermitian,
    operator_norm,
    partial_trace,
    plus_state,
    reduced_state,
    restrict,
    trace_norm,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
EIGENBASIS_MEMORY_BUDGET = 512 * 2**20
EIGSH_MIN_DIM = 384


# -- evolution and time averages ---------------------------------------------


def heisenberg_evolve(a: np.ndarray, spectrum: Spectrum, t: float) -> np.ndarray:
    """``A_t = exp(iHt) A exp(-iHt)`` via the eigenbasis."""
    w = spectrum.eigenvectors
    ph = np.exp(1j * spectrum.energies * t)
    m = (w.conj().T @ a @ w) * np.outer(ph, ph.conj())
    return w @ m @ w.conj().T


def evolve_state(psi: np.ndarray, spectrum: Spectrum, t: float) -> np.ndarray:
    """``exp(-iHt) psi``; pass negative ``t`` for the inverse evolution."""
    w = spectrum.eigenvectors
    return w @ (np.exp(-1j * spectrum.energies * t) * (w.conj().T @ psi))


def evolve_density(rho: np.ndarray, spectrum: Spectrum, t: float) -> np.ndarray:
    """``exp(-iHt) rho exp(iHt)``."""
    return heisenberg_evolve(rho, spectrum, -t)


def require_nondegenerate(spectrum: Spectrum, tol: float | None = None) -> float:
    """Raise :class:`DegenerateSpectrum` unless all energies are separated by ``tol``."""
    tol = 1e-8 * spectrum.norm if tol is None else tol
    if spectrum.min_gap <= tol:
        raise DegenerateSpectrum(f"minimum level spacing {spectrum.min_gap:.3e} <= tolerance {tol:.3e}")
    return spectrum.min_gap


def _as_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def _populations(state: np.ndarray, spectrum: Spectrum) -> np.ndarray:
    state = np.asarray(state)
    if state.ndim == 1:
        return np.abs(spectrum.amplitudes(state)) ** 2
    w = spectrum.eigenvectors
    return np.real(np.einsum("ia,ij,ja->a", w.conj(), state, w))


def dephasing_average_state(state: np.ndarray, spectrum: Spectrum, tol: float | None = None) -> np.ndarray:
    """Infinite-time average ``omega = sum_k |k><k| <k|rho|k>``."""
    require_nondegenerate(spectrum, tol)
    p = _populations(state, spectrum)
    w = spectrum.eigenvectors
    return (w * p[None, :]) @ w.conj().T


def effective_dimension(state: np.ndarray, spectrum: Spectrum) -> float:
    """``1 / sum_k p_k^2`` with ``p_k`` the energy populations (equals ``1 / tr omega^2``)."""
    p = _populations(state, spectrum)
    return float(1.0 / np.sum(p**2))


# -- sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class SamplingSpec:
    """Time sampling on ``[0, T_max]`` with ``T_max = t_max_multiplier / min_gap``
    unless ``t_max`` is given explicitly."""

    num_samples: int = 500
    t_max_multiplier: float = 1e3
    kind: str = "uniform"
    seed: int = 0
    t_max: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.num_samples < 2:
            raise InvalidInput("need at least two time samples")
        if self.kind not in ("uniform", "golden"):
            raise InvalidInput(f"unknown sampler {self.kind!r}")

    def resolve_t_max(self, spectrum: Spectrum) -> float:
        if self.t_max is not None:
            return float(self.t_max)
        return float(self.t_max_multiplier / spectrum.min_gap)

    def times(self, t_max: float) -> np.ndarray:
        rng = stream_rng(self.seed, STREAM_TIMES)
        if self.kind == "uniform":
            return rng.uniform(0.0, t_max, self.num_samples)
        offset = rng.uniform()
        return t_max * np.mod(offset + GOLDEN * np.arange(self.num_samples), 1.0)


@dataclass
class TimeAverageEstimate:
    mean: float
    stderr: float
    t_max: float
    num_samples: int
    sampling: str
    times: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, times, values, t_max, sampling):
        values = np.asarray(values, dtype=float)
        n = len(values)
        std = float(values.std(ddof=1)) if n > 1 else 0.0
        return cls(float(values.mean()), std / math.sqrt(n), float(t_max), n, sampling, np.asarray(times), values)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "t_max": self.t_max,
            "num_samples": self.num_samples,
            "sampling": self.sampling,
        }


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- equilibration ----------------------------------------------------------


@dataclass
class EquilibrationResult:
    """Time-averaged local deviation from the dephased state.

    ``forward``/``backward`` use ``||.||_1``; the ``*_distance`` variants the
    trace distance ``||.||_1 / 2``.
    """

    forward: TimeAverageEstimate
    backward: TimeAverageEstimate
    rhs: float
    effective_dim: float
    region: Region

    @property
    def forward_distance(self) -> float:
        return self.forward.mean / 2

    @property
    def backward_distance(self) -> float:
        return self.backward.mean / 2

    @property
    def holds(self) -> bool:
        return self.forward.mean <= self.rhs and self.backward.mean <= self.rhs

    @property
    def holds_trace_distance(self) -> bool:
        return self.forward_distance <= self.rhs and self.backward_distance <= self.rhs

    def to_dict(self) -> dict:
        return {
            "region": list(self.region.sites),
            "rhs": self.rhs,
            "effective_dim": self.effective_dim,
            "forward": self.forward.to_dict(),
            "backward": self.backward.to_dict(),
            "forward_trace_distance": self.forward_distance,
            "backward_trace_distance": self.backward_distance,
            "holds": self.holds,
            "holds_trace_distance": self.holds_trace_distance,
        }


def equilibration_check(state, spectrum: Spectrum, region, sampling: SamplingSpec = SamplingSpec()):
    """Sample ``||tr_{S^c}(rho_t - omega)||_1`` forward and backward in time.

    The right-hand side is ``d^{|S|} / (2 sqrt(d_eff))``.
    """
    lattice = region.lattice
    region = as_region(region, lattice)
    state = np.asarray(state)
    omega = dephasing_average_state(state, spectrum)
    omega_s = partial_trace(omega, region)
    deff = effective_dimension(state, spectrum)
    rhs = region.dim / (2 * math.sqrt(deff))
    t_max = sampling.resolve_t_max(spectrum)
    times = sampling.times(t_max)

    def local(t):
        if state.ndim == 1:
            r = reduced_state(evolve_state(state, spectrum, t), region)
        else:
            r = partial_trace(evolve_density(state, spectrum, t), region)
        return trace_norm(r - omega_s)

    fwd = _map(local, times, sampling.workers)
    bwd = _map(lambda t: local(-t), times, sampling.workers)
    return EquilibrationResult(
        TimeAverageEstimate.from_samples(times, fwd, t_max, sampling.kind),
        TimeAverageEstimate.from_samples(-times, bwd, t_max, sampling.kind),
        rhs,
        deff,
        region,
    )


# -- growth metric ----------------------------------------------------------


def _region_index(region: Region) -> np.ndarray:
    """``idx[s, c]``: basis index of S-configuration ``s`` and complement configuration ``c``."""
    lat = region.lattice
    n = lat.num_sites
    order = list(region.sites) + list(region.complement().sites)
    return np.arange(lat.dim).reshape([lat.local_dim] * n).transpose(order).reshape(region.dim, -1)


def monomial_structure(a: np.ndarray, region: Region, tol: float = 1e-14):
    """Classify ``a`` for the O(D) flip path.

    Returns ``("inside", perm, amps)`` when ``a`` has one non-zero per row,
    acts trivially on the complement configuration and maps S-configurations
    consistently; ``("outside", perm, amps)`` when every row changes the
    complement configuration; ``None`` otherwise.
    """
    a = np.asarray(a)
    nz = np.abs(a) > tol
    if not (np.all(nz.sum(axis=1) == 1) and np.all(nz.sum(axis=0) == 1)):
        return None
    perm = nz.argmax(axis=1)
    amps = a[np.arange(len(a)), perm]
    idx = _region_index(region)
    n_s, n_c = idx.shape
    s_of = np.empty(len(a), dtype=int)
    c_of = np.empty(len(a), dtype=int)
    s_of[idx.ravel()] = np.repeat(np.arange(n_s), n_c)
    c_of[idx.ravel()] = np.tile(np.arange(n_c), n_s)
    same_c = c_of[perm] == c_of
    if np.all(~same_c):
        return "outside", perm, amps
    if not np.all(same_c):
        return None
    target = s_of[perm][idx]
    if not np.all(target == target[:, :1]):
        return None
    return "inside", perm, amps


class GrowthEvaluator:
    """Evaluates ``||A_t - Gamma_S(A_t)||`` at arbitrary times.

    ``method`` is ``"auto"``, ``"flip"``, ``"eigenbasis"`` or ``"dense"``.
    """

    def __init__(self, a, spectrum: Spectrum, region: Region, method: str = "auto",
                 memory_budget: int = EIGENBASIS_MEMORY_BUDGET):
        self.a = np.asarray(a)
        self.spectrum = spectrum
        self.region = region
        self.hermitian = is_hermitian(self.a, 1e-12)
        structure = None
        if method in ("auto", "flip") and spectrum.is_diagonal:
            structure = monomial_structure(self.a, region)
        if method == "flip" and structure is None:
            raise InvalidInput("flip path needs a diagonal Hamiltonian and a monomial operator")
        n_s = region.dim
        need = n_s * n_s * spectrum.dim**2 * 16
        if structure is not None:
            self.method = "flip"
            self._setup_flip(*structure)
        elif method == "dense" or not self.hermitian or region.is_full():
            self.method = "dense"
        elif method == "eigenbasis" or need <= memory_budget:
            self.method = "eigenbasis"
            self._setup_eigenbasis()
        else:
            self.method = "dense"

    def _setup_flip(self, kind, perm, amps):
        self.flip_kind = kind
        order = self.spectrum.basis_order
        energy = np.empty(self.spectrum.dim)
        energy[order] = self.spectrum.energies
        idx = _region_index(self.region)
        self.delta = np.ascontiguousarray((energy - energy[perm])[idx])
        self.amps = np.ascontiguousarray(amps[idx].astype(complex))

    def _setup_eigenbasis(self):
        w = self.spectrum.eigenvectors
        idx = _region_index(self.region)
        ws = w[idx]  # (n_s, n_c, D)
        n_s = ws.shape[0]
        self.n_c = ws.shape[1]
        self.a_eig = np.ascontiguousarray(w.conj().T @ self.a @ w)
        blocks = np.empty((n_s * n_s, w.shape[1], w.shape[1]), dtype=complex)
        for s in range(n_s):
            for s2 in range(n_s):
                blocks[s * n_s + s2] = ws[s].conj().T @ ws[s2]
        self.blocks = blocks

    def values(self, times, workers: int = 1) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.method == "flip":
            if self.flip_kind == "outside":
                return np.full(len(times), float(np.abs(self.amps).max()))
            return kernels.flip_metric(self.delta, self.amps, times)
        return np.array(_map(self.at, times, workers))

    def at(self, t: float) -> float:
        if self.method == "flip":
            return float(self.values(np.array([t]))[0])
        if self.method == "eigenbasis":
            b = kernels.eigenbasis_residual(self.a_eig, self.spectrum.energies, float(t), self.blocks, self.n_c)
            return _hermitian_norm(b)
        at = heisenberg_evolve(self.a, self.spectrum, t)
        return operator_norm(at - restrict(at, self.region))


def _hermitian_norm(b: np.ndarray) -> float:
    b = 0.5 * (b + b.conj().T)
    if b.shape[0] < EIGSH_MIN_DIM:
        return float(np.abs(np.linalg.eigvalsh(b)).max())
    v0 = np.ones(b.shape[0], dtype=complex) / math.sqrt(b.shape[0])
    vals = eigsh(b, k=1, which="LM", tol=1e-10, v0=v0, return_eigenvectors=False)
    return float(np.abs(vals).max())


def growth_metric(a, spectrum: Spectrum, region, sampling: SamplingSpec = SamplingSpec(), method: str = "auto"):
    """Time average of ``||A_t - Gamma_S(A_t)||`` over sampled ``t``."""
    ev = GrowthEvaluator(a, spectrum, region, method)
    t_max = sampling.resolve_t_max(spectrum)
    times = sampling.times(t_max)
    est = TimeAverageEstimate.from_samples(times, ev.values(times, sampling.workers), t_max, sampling.kind)
    return est, ev.method


# -- reports ----------------------------------------------------------------


@dataclass
class PropagationReport:
    """Measured growth metric against a bound, with every intermediate quantity."""

    kind: str
    measured: TimeAverageEstimate
    bound: float
    bound_terms: dict
    checks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.measured.mean - self.bound

    @property
    def verdict(self) -> bool:
        return self.measured.mean - 2 * self.measured.stderr >= self.bound

    @property
    def failed_alarms(self) -> list:
        return [c for c in self.checks if c.alarm and not c.holds]

    def check(self, name_prefix: str) -> BoundCheck:
        for c in self.checks:
            if c.name.startswith(name_prefix):
                return c
        raise KeyError(name_prefix)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "measured": self.measured.to_dict(),
            "bound": self.bound,
            "bound_terms": _jsonable(self.bound_terms),
            "margin": self.margin,
            "verdict": "pass" if self.verdict else "fail",
            "checks": [c.to_dict() for c in self.checks],
            "diagnostics": _jsonable(self.diagnostics),
            "config": _jsonable(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "metric"])
            for t, v in zip(self.measured.times, self.measured.values):
                w.writerow([repr(float(t)), repr(float(v))])


def _sampling_dict(sampling: SamplingSpec) -> dict:
    """Sampling parameters without the worker count, which never changes results."""
    d = asdict(sampling)
    d.pop("workers")
    return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Region):
        return list(obj.sites)
    return obj


def _raise_alarms(report: PropagationReport, raise_on_violation: bool) -> PropagationReport:
    bad = report.failed_alarms
    if bad and raise_on_violation:
        c = bad[0]
        raise BoundViolation(
            c.name, f"bound violated: {c.name} (lhs={c.lhs:.6g}, rhs={c.rhs:.6g})", report=report
        )
    return report


def _genericity_diagnostics(spectrum: Spectrum) -> dict:
    rep = check_genericity(spectrum)
    return rep.to_dict()


# -- flips under diagonal and dressed dynamics ------------------------------


def lemma1_bound(d: int, s_size: int, n: int) -> float:
    return 1.0 - float(d) ** (s_size - n / 2)


def run_lemma1(h: DiagonalMBLHamiltonian, site: int, region, sampling: SamplingSpec = SamplingSpec()):
    """Flip on ``site`` under a diagonal Hamiltonian, initial state |+>^N."""
    lattice = h.lattice
    region = as_region(region, lattice)
    spectrum = h.spectrum
    require_nondegenerate(spectrum)
    d, n = lattice.local_dim, lattice.num_sites
    a = embed_local(local_flip(d), lattice.region([site]))
    psi0 = plus_state(lattice)
    est, method = growth_metric(a, spectrum, region, sampling)
    bound = lemma1_bound(d, len(region), n)
    return PropagationReport(
        "lemma1",
        est,
        bound,
        {"d": d, "N": n, "S_size": len(region), "d_pow": float(d) ** (len(region) - n / 2)},
        diagnostics={
            "method": method,
            "initial_expectation": float(np.real(np.vdot(psi0, a @ psi0))),
            "effective_dim": effective_dimension(psi0, spectrum),
            "genericity": _genericity_diagnostics(spectrum),
        },
        config={"site": site, "S": region, "sampling": _sampling_dict(sampling)},
    )


def _is_identity(v: DressingUnitary) -> bool:
    return np.array_equal(v.unitary, np.eye(v.lattice.dim))


def run_corollary_flocal(
    h: DiagonalMBLHamiltonian,
    v: DressingUnitary,
    site: int,
    l: int,
    region,
    sampling: SamplingSpec = SamplingSpec(),
    raise_on_violation: bool = True,
):
    """Dressed flip ``A = V X_j V^dag``, truncated to ``X_l`` then evolved under ``V H V^dag``."""
    lattice = h.lattice
    region = as_region(region, lattice)
    d, n = lattice.local_dim, lattice.num_sites
    spectrum = h.spectrum if _is_identity(v) else dressed_spectrum(h, v)
    require_nondegenerate(spectrum)
    x = lattice.region([site])
    a = v.conjugate(embed_local(local_flip(d), x))
    a_l = restrict(a, x.enlarge(l))
    f_l = 0.0 if x.enlarge(l).is_full() else operator_norm(a - a_l)
    psi0 = v.unitary @ plus_state(lattice)
    init = abs(np.vdot(psi0, a_l @ psi0))
    est, method = growth_metric(a_l, spectrum, region, sampling)
    bound = 1.0 - float(d) ** (len(region) - n / 2) - 2 * f_l
    checks = [BoundCheck("initial: |tr(A^l rho_0)| >= 1 - f(l)", float(init), 1 - f_l, ">=")]
    report = PropagationReport(
        "corollary_flocal",
        est,
        bound,
        {"d": d, "N": n, "S_size": len(region), "f_l": f_l, "l": l},
        checks,
        diagnostics={
            "method": method,
            "norm_A_l": operator_norm(a_l),
            "initial_expectation": float(init),
            "genericity": _genericity_diagnostics(spectrum),
        },
        config={"site": site, "l": l, "S": region, "sampling": _sampling_dict(sampling)},
    )
    return _raise_alarms(report, raise_on_violation)


# -- flip observable and experiment state ----------------------------------


@dataclass(eq=False)
class FlipObservable:
    """``A = sum_r |0,r><1,r| + h.c.`` between two eigenspaces of a truncated constant.

    Built on the truncation region: ``local_operator`` acts on ``region`` and
    ``operator`` is its embedding. ``pair = (k0, k1)`` with ``k0`` the smaller
    eigenspace; the larger one is cut to ``d_trunc`` basis vectors.
    """

    local_operator: np.ndarray
    region: Region
    pair: tuple
    d_trunc: int
    basis0: np.ndarray
    basis1: np.ndarray
    truncation: TruncatedConstant
    checks: list = field(default_factory=list)

    @property
    def operator(self) -> np.ndarray:
        return embed_local(self.local_operator, self.region)

    @property
    def image_projector(self) -> np.ndarray:
        """``P^l_1`` restricted to the image of the flip."""
        return embed_local(self.basis1 @ self.basis1.conj().T, self.region)


def build_flip_observable(z, pair: tuple | None = None) -> FlipObservable:
    """Flip between two eigenspaces of a truncated (or strictly local) constant."""
    if isinstance(z, ConstantOfMotion):
        zt = truncate_constant(z, 0 if z.is_strictly_local else z.lattice.num_sites)
    elif isinstance(z, TruncatedConstant):
        zt = z
    else:
        raise InvalidInput("expected a ConstantOfMotion or TruncatedConstant")
    bases = zt.local_bases
    if len(bases) < 2:
        raise NeedTwoEigenspaces("flip observable needs two eigenspaces")
    if pair is None:
        dims = [b.shape[1] for b in bases]
        pair = tuple(sorted(sorted(range(len(dims)), key=lambda k: dims[k])[:2]))
    ka, kb = pair
    if bases[ka].shape[1] == 0 or bases[kb].shape[1] == 0:
        raise NeedTwoEigenspaces(f"truncated eigenspaces {pair} include an empty one")
    k0, k1 = (ka, kb) if bases[ka].shape[1] <= bases[kb].shape[1] else (kb, ka)
    d_loc = bases[k0].shape[1]
    b0 = bases[k0]
    b1 = bases[k1][:, :d_loc]
    a_loc = b0 @ b1.conj().T
    a_loc = a_loc + a_loc.conj().T
    rest = zt.region.lattice.dim // zt.region.dim
    flip = FlipObservable(a_loc, zt.region, (k0, k1), d_loc * rest, b0, b1, zt)

    p0 = b0 @ b0.conj().T
    p1 = bases[k1] @ bases[k1].conj().T
    sq_err = np.abs(a_loc @ a_loc - (p0 + b1 @ b1.conj().T)).max()
    off = max(operator_norm(p0 @ a_loc @ p0), operator_norm(p1 @ a_loc @ p1))
    flip.checks = [
        BoundCheck("flip_norm: ||A|| == 1", operator_norm(a_loc), 1.0, "==", 1e-10),
        BoundCheck("flip_square: A^2 == P^l_0 + P^l_1|_I", float(sq_err), 0.0, "==", 1e-10),
        BoundCheck("block_offdiag: ||P^l_k A P^l_k|| == 0", off, 0.0, "<=", 1e-12),
    ]
    return flip


@dataclass
class ExperimentState:
    """``psi = (v + A v)/sqrt 2`` with ``v`` the equal superposition of the
    energy eigenvectors in eigenspace ``eigenspace`` of the full constant."""

    v: np.ndarray
    psi: np.ndarray
    effective_dim: float
    eigenspace: int
    members: np.ndarray
    v_a_v: float
    psi_a_psi: float
    raw_norm: float

    @property
    def renormalization(self) -> float:
        """Deviation of ``||v + A v|| / sqrt 2`` from one."""
        return self.raw_norm / math.sqrt(2) - 1.0


def assign_eigenspaces(z: ConstantOfMotion, spectrum: Spectrum) -> np.ndarray:
    """Eigenspace index of every energy eigenvector from ``<k|Z|k>``."""
    w = spectrum.eigenvectors
    zexp = np.real(np.einsum("ia,ia->a", w.conj(), z.operator @ w))
    dist = np.abs(zexp[:, None] - np.asarray(z.eigenvalues)[None, :])
    label = dist.argmin(axis=1)
    worst = dist[np.arange(len(label)), label].max()
    if worst > z.gap / 4:
        raise AssignmentAmbiguous(f"eigenvector with |<k|Z|k> - lambda| = {worst:.3e} > gamma/4")
    return label


def build_experiment_state(z: ConstantOfMotion, flip: FlipObservable, spectrum: Spectrum) -> ExperimentState:
    labels = assign_eigenspaces(z, spectrum)
    k0 = flip.pair[0]
    members = np.flatnonzero(labels == k0)
    if len(members) == 0:
        raise NeedTwoEigenspaces(f"no energy eigenvector assigned to eigenspace {k0}")
    w = spectrum.eigenvectors
    v = w[:, members].sum(axis=1) / math.sqrt(len(members))
    a = flip.operator
    av = a @ v
    raw = v + av
    raw_norm = float(np.linalg.norm(raw)) if np.linalg.norm(raw) > 0 else 0.0
    psi = raw / raw_norm
    return ExperimentState(
        v,
        psi,
        effective_dimension(psi, spectrum),
        k0,
        members,
        float(np.real(np.vdot(v, av))),
        float(np.real(np.vdot(psi, a @ psi))),
        raw_norm,
    )


def corollary_strict_bound(d: int, s_size: int, x_size: int, d_min: int, n: int) -> float:
    return 1.0 - float(d) ** (s_size + x_size / 2) / math.sqrt(d_min) * float(d) ** (-n / 2)


def theorem1_bound(g: float, gamma: float, d_s: float, d_min_tilde: float) -> float:
    return 1.0 - 13 * g / gamma - d_s / (2 * math.sqrt(d_min_tilde))


def run_corollary_strict(
    h,
    z: ConstantOfMotion,
    region,
    sampling: SamplingSpec = SamplingSpec(),
    spectrum: Spectrum | None = None,
    raise_on_violation: bool = True,
):
    """Strictly local constant on ``X`` and ``S`` containing ``X``."""
    lattice = z.lattice
    region = as_region(region, lattice)
    if not z.is_strictly_local:
        raise InvalidInput("a strictly local constant of motion is required")
    x = z.base_region
    if not x.issubset(region):
        raise InvalidInput(f"S={list(region.sites)} must contain X={list(x.sites)}")
    if spectrum is None:
        spectrum = h.spectrum if isinstance(h, DiagonalMBLHamiltonian) else None
    if spectrum is None:
        spectrum = spectrum_of(h)
    require_nondegenerate(spectrum)
    d, n = lattice.local_dim, lattice.num_sites
    flip = build_flip_observable(z)
    state = build_experiment_state(z, flip, spectrum)
    dims = min_eigenspace_dim(z)
    a = flip.operator
    est, method = growth_metric(a, spectrum, region, sampling)
    bound = corollary_strict_bound(d, len(region), len(x), dims.d_min_local, n)
    checks = list(flip.checks) + [
        BoundCheck("eigenstate: ||A psi - psi|| == 0", float(np.linalg.norm(a @ state.psi - state.psi)), 0.0, "==", 1e-9),
        BoundCheck("deff: d_eff >= d_min d^(N-|X|)", state.effective_dim, float(dims.factorized), ">="),
    ]
    report = PropagationReport(
        "corollary_strict",
        est,
        bound,
        {"d": d, "N": n, "S_size": len(region), "X_size": len(x), "d_min": dims.d_min_local,
         "d_min_tilde": dims.factorized},
        checks,
        diagnostics={
            "method": method,
            "effective_dim": state.effective_dim,
            "psi_a_psi": state.psi_a_psi,
            "genericity": _genericity_diagnostics(spectrum),
        },
        config={"X": x, "S": region, "sampling": _sampling_dict(sampling)},
    )
    return _raise_alarms(report, raise_on_violation)


@dataclass
class Theorem1Setup:
    """Intermediate objects of the approximate-constant pipeline."""

    truncation: TruncatedConstant
    flip: FlipObservable
    state: ExperimentState
    checks: list
    omega_expectation: float


def theorem1_setup(z: ConstantOfMotion, l: int, spectrum: Spectrum) -> Theorem1Setup:
    """Truncate, build flip and state, and evaluate the intermediate inequality chain."""
    zt = truncate_constant(z, l)
    g, gamma = zt.perturbation_norm, z.gap
    flip = build_flip_observable(zt)
    state = build_experiment_state(z, flip, spectrum)
    a = flip.operator
    projs = z.projectors
    pap = max(operator_norm(projs[k] @ a @ projs[k]) for k in flip.pair)
    a_eig_diag = np.real(np.einsum("ia,ia->a", spectrum.eigenvectors.conj(), a @ spectrum.eigenvectors))
    pops = np.abs(spectrum.amplitudes(state.psi)) ** 2
    tr_aw = float(np.dot(pops, a_eig_diag))
    checks = list(zt.checks) + list(flip.checks) + [
        BoundCheck("block_leakage: ||P_k A P_k|| <= 2 g/gamma", pap, 2 * g / gamma),
        BoundCheck("v_expectation: |<v|A|v>| <= 2 g/gamma", abs(state.v_a_v), 2 * g / gamma),
        BoundCheck("omega_expectation: |tr(A omega)| <= 4 g/gamma", abs(tr_aw), 4 * g / gamma),
        BoundCheck("psi_expectation: <psi|A|psi> >= 1 - 9 g/gamma", state.psi_a_psi, 1 - 9 * g / gamma, ">="),
    ]
    return Theorem1Setup(zt, flip, state, checks, tr_aw)


def run_theorem1(
    z: ConstantOfMotion,
    l: int,
    region,
    spectrum: Spectrum,
    sampling: SamplingSpec = SamplingSpec(),
    equilibration: bool = True,
    raise_on_violation: bool = True,
):
    """Full pipeline for an approximately local constant of motion."""
    lattice = z.lattice
    region = as_region(region, lattice)
    require_nondegenerate(spectrum)
    d, n = lattice.local_dim, lattice.num_sites
    setup = theorem1_setup(z, l, spectrum)
    g, gamma = setup.truncation.perturbation_norm, z.gap
    d_s = float(d) ** len(region)
    d_min_tilde = min(z.eigenspace_dims)
    checks = list(setup.checks)
    diagnostics = {
        "tr_A_omega": setup.omega_expectation,
        "v_a_v": setup.state.v_a_v,
        "psi_a_psi": setup.state.psi_a_psi,
        "psi_renormalization": setup.state.renormalization,
        "effective_dim": setup.state.effective_dim,
        "truncation": setup.truncation.to_dict(),
        "genericity": _genericity_diagnostics(spectrum),
    }
    checks.append(
        BoundCheck("deff: d_eff >= d_min_tilde", setup.state.effective_dim, float(d_min_tilde), ">=", alarm=False)
    )
    if equilibration:
        eq = equilibration_check(setup.state.psi, spectrum, region, sampling)
        diagnostics["equilibration"] = eq.to_dict()
        checks.append(BoundCheck("equilibration: time-avg ||tr_Sc(rho_t - omega)||_1 <= d_s/(2 sqrt(d_eff))",
                                 max(eq.forward.mean, eq.backward.mean), eq.rhs, alarm=False))
    est, method = growth_metric(setup.flip.operator, spectrum, region, sampling)
    diagnostics["method"] = method
    bound = theorem1_bound(g, gamma, d_s, d_min_tilde)
    report = PropagationReport(
        "theorem1",
        est,
        bound,
        {"g_l": g, "gamma": gamma, "l": l, "d_s": d_s, "S_size": len(region), "d_min_tilde": d_min_tilde,
         "term_13g": 13 * g / gamma, "term_equil": d_s / (2 * math.sqrt(d_min_tilde))},
        checks,
        diagnostics,
        config={"X": z.base_region, "l": l, "S": region, "sampling": _sampling_dict(sampling)},
    )
    return _raise_alarms(report, raise_on_violation)

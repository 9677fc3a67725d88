"""Matrix-product operators for eigenprojectors of truncated constants of motion.

Site tensors have index order ``(left_bond, right_bond, d_out, d_in)``; the
boundary bonds have dimension one.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantOfMotion, TruncatedConstant, truncate_constant
from .errors import EmptyIntersection, InvalidInput, InvalidShape
from .operators import Lattice, operator_norm

MPO_SCHEMA_VERSION = 1


@dataclass
class MPO:
    site_tensors: list
    local_dim: int
    discarded: float = 0.0

    @property
    def num_sites(self) -> int:
        return len(self.site_tensors)

    @property
    def bond_dims(self) -> list:
        return [1] + [t.shape[1] for t in self.site_tensors]

    def to_dense(self) -> np.ndarray:
        d = self.local_dim
        acc = self.site_tensors[0][0]  # (right, out, in)
        out_dim = d
        for t in self.site_tensors[1:]:
            # acc: (bond, O, I) with O = I = out_dim; t: (bond, right, d, d)
            acc = np.einsum("aoi,abxy->boxiy", acc, t)
            out_dim *= d
            acc = acc.reshape(acc.shape[0], out_dim, out_dim)
        return acc[0]

    def to_json(self) -> str:
        tensors = []
        for t in self.site_tensors:
            raw = np.ascontiguousarray(t, dtype="<c16").tobytes()
            tensors.append({"shape": list(t.shape), "dtype": "complex128-le",
                            "data": base64.b64encode(raw).decode("ascii")})
        return json.dumps(
            {"schema_version": MPO_SCHEMA_VERSION, "local_dim": self.local_dim, "bond_dims": self.bond_dims,
             "discarded": self.discarded, "tensors": tensors},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MPO":
        obj = json.loads(text)
        tensors = [np.frombuffer(base64.b64decode(t["data"]), dtype="<c16").reshape(t["shape"]).copy()
                   for t in obj["tensors"]]
        return cls(tensors, obj["local_dim"], obj.get("discarded", 0.0))


def dense_to_mpo(a: np.ndarray, lattice: Lattice, svd_tol: float = 0.0) -> MPO:
    """Left-to-right SVD splitting, site 0 first.

    Singular values at or below ``svd_tol * sigma_max`` (and below the
    numerical rank threshold) are dropped at every cut. ``discarded`` sums the
    Frobenius weight dropped per cut, an upper bound on the reconstruction
    error in operator norm.
    """
    d, n = lattice.local_dim, lattice.num_sites
    a = np.asarray(a, dtype=complex)
    if a.shape != (lattice.dim, lattice.dim):
        raise InvalidShape(f"expected a {lattice.dim}x{lattice.dim} operator")
    # pair (out_k, in_k) per site
    t = a.reshape([d] * (2 * n)).transpose([x for k in range(n) for x in (k, n + k)])
    rest = t.reshape(1, -1)
    tensors = []
    discarded = 0.0
    eps = np.finfo(float).eps
    for k in range(n - 1):
        left = rest.shape[0]
        m = rest.reshape(left * d * d, -1)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        smax = s[0] if s.size else 0.0
        cut = max(svd_tol * smax, smax * max(m.shape) * eps)
        keep = max(1, int(np.sum(s > cut)))
        discarded += float(np.sqrt(np.sum(s[keep:] ** 2)))
        tensors.append(u[:, :keep].reshape(left, d, d, keep).transpose(0, 3, 1, 2))
        rest = s[:keep, None] * vh[:keep]
    left = rest.shape[0]
    tensors.append(rest.reshape(left, d, d, 1).transpose(0, 3, 1, 2))
    return MPO(tensors, d, discarded)


@dataclass
class ProjectorMPO:
    mpo: MPO
    k: int
    l: int
    svd_error: float
    error_vs_parent: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.error_vs_parent <= self.bound + 1e-10


def projector_mpo(zt: TruncatedConstant, k: int, svd_tol: float = 1e-12) -> ProjectorMPO:
    """MPO of ``P^l_k`` and its distance to the exact projector ``P_k``."""
    lattice = zt.region.lattice
    p_l = zt.projectors[k]
    mpo = dense_to_mpo(p_l, lattice, svd_tol)
    dense = mpo.to_dense()
    svd_err = operator_norm(dense - p_l)
    err = operator_norm(dense - zt.parent.projectors[k])
    bound = 2 * zt.perturbation_norm / zt.parent.gap + svd_err
    return ProjectorMPO(mpo, k, zt.l, svd_err, err, bound)


def bond_dimension_sweep(z: ConstantOfMotion, ls, k: int = 0, svd_tol: float = 1e-12) -> list:
    """Rows ``(l, max_bond, g(l), error_vs_parent)`` for each truncation radius."""
    rows = []
    for l in ls:
        zt = truncate_constant(z, l)
        pm = projector_mpo(zt, k, svd_tol)
        rows.append((int(l), int(max(pm.mpo.bond_dims)), zt.perturbation_norm, pm.error_vs_parent))
    return rows


@dataclass
class ProjectorChain:
    """Ordered factors ``P_{j, m_j}`` of commuting constants and their truncations."""

    constants: list
    l: int
    selection: list
    truncations: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.constants) != len(self.selection):
            raise InvalidInput("one eigenvalue selection per constant is required")
        if not self.truncations:
            self.truncations = [truncate_constant(z, self.l) for z in self.constants]

    @property
    def full_factors(self) -> list:
        return [z.projectors[m] for z, m in zip(self.constants, self.selection)]

    @property
    def truncated_factors(self) -> list:
        return [zt.projectors[m] for zt, m in zip(self.truncations, self.selection)]

    def commutation_error(self) -> float:
        f = self.full_factors
        return max((operator_norm(a @ b - b @ a) for i, a in enumerate(f) for b in f[i + 1:]), default=0.0)


def _product(mats):
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


@dataclass
class StabilityResult:
    measured: float
    bound_sum: float
    bound_uniform: float
    per_factor: list

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound_sum + 1e-10 and self.bound_sum <= self.bound_uniform + 1e-12

    def to_dict(self) -> dict:
        return {"measured": self.measured, "bound_sum": self.bound_sum, "bound_uniform": self.bound_uniform,
                "per_factor": self.per_factor, "holds": self.holds}


def stability_product(chain: ProjectorChain) -> StabilityResult:
    """``||prod P - prod P^l||`` against ``sum_k 2 g_k/gamma_k <= 2 N g/gamma``."""
    terms = [2 * zt.perturbation_norm / z.gap for z, zt in zip(chain.constants, chain.truncations)]
    g = max(zt.perturbation_norm for zt in chain.truncations)
    gamma = min(z.gap for z in chain.constants)
    measured = operator_norm(_product(chain.full_factors) - _product(chain.truncated_factors))
    return StabilityResult(measured, float(sum(terms)), 2 * len(terms) * g / gamma, terms)


@dataclass
class JointProjector:
    q: np.ndarray = field(repr=False)
    eigenvector: np.ndarray = field(repr=False)
    fidelity: float
    idempotency_error: float
    stability: StabilityResult

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    def to_dict(self) -> dict:
        return {"fidelity": self.fidelity, "infidelity": self.infidelity,
                "idempotency_error": self.idempotency_error, "stability": self.stability.to_dict()}


def joint_eigenprojector(chain: ProjectorChain) -> JointProjector:
    """Product of all truncated projectors and its overlap with the exact joint eigenvector."""
    exact = _product(chain.full_factors)
    exact = 0.5 * (exact + exact.conj().T)
    w, u = np.linalg.eigh(exact)
    if w[-1] < 0.5:
        raise EmptyIntersection(f"selection {chain.selection} has no common eigenvector")
    vec = u[:, -1]
    q = _product(chain.truncated_factors)
    fid = float(abs(np.vdot(vec, q @ vec)))
    idem = operator_norm(q @ q - q)
    return JointProjector(q, vec, fid, idem, stability_product(chain))

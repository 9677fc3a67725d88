import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_operator
from mblprop.constants import extract_dressed_z, local_constant, truncate_constant
from mblprop.errors import EmptyIntersection, InvalidShape
from mblprop.models import (
    DisorderSpec,
    build_diagonal_mbl,
    build_dressing_unitary,
    dress_hamiltonian,
    identity_dressing,
)
from mblprop.operators import PAULI_Z, Lattice, operator_norm
from mblprop.spectral_tn import (
    MPO,
    ProjectorChain,
    bond_dimension_sweep,
    dense_to_mpo,
    joint_eigenprojector,
    projector_mpo,
    stability_product,
)


def _family(n, layers, alpha, seed, dressing=True):
    lat = Lattice(n)
    h = build_diagonal_mbl(DisorderSpec(seed=seed), lat)
    v = build_dressing_unitary(lat, layers, alpha, seed) if dressing else identity_dressing(lat)
    hd = dress_hamiltonian(h, v)
    return [extract_dressed_z(hd, v, j) for j in range(n)]


class TestMPO:
    def test_product_operators(self):
        lat = Lattice(3)
        mpo = dense_to_mpo(np.kron(np.kron(PAULI_Z, PAULI_Z), np.eye(2)), lat)
        assert mpo.bond_dims == [1, 1, 1, 1]
        assert dense_to_mpo(np.eye(64), Lattice(6)).bond_dims == [1] * 7

    def test_rank_two_middle_cut(self, rng):
        lat = Lattice(4)
        b, b2 = random_operator(rng, 4), random_operator(rng, 4)
        b2 = b2 - np.vdot(b, b2) / np.vdot(b, b) * b  # Hilbert-Schmidt orthogonal
        c, c2 = random_operator(rng, 4), random_operator(rng, 4)
        c2 = c2 - np.vdot(c, c2) / np.vdot(c, c) * c
        a = np.kron(b, c) + np.kron(b2, c2)
        mpo = dense_to_mpo(a, lat, 1e-12)
        assert mpo.bond_dims[2] == 2
        np.testing.assert_allclose(mpo.to_dense(), a, atol=1e-10)

    @given(st.integers(1, 4), st.sampled_from([2, 3]), st.integers(0, 1000))
    def test_exact_round_trip(self, n, d, seed):
        if d == 3 and n > 3:
            n = 3
        lat = Lattice(n, d)
        a = random_operator(np.random.default_rng(seed), lat.dim)
        mpo = dense_to_mpo(a, lat, 0.0)
        assert operator_norm(mpo.to_dense() - a) <= 1e-10
        assert mpo.bond_dims[0] == mpo.bond_dims[-1] == 1

    def test_bond_dims_monotone_in_tolerance(self, rng):
        lat = Lattice(5)
        u, _ = np.linalg.qr(random_operator(rng, 32))
        a = u @ np.diag(np.exp(-np.arange(32.0))) @ u.conj().T
        loose = dense_to_mpo(a, lat, 1e-3).bond_dims
        tight = dense_to_mpo(a, lat, 1e-12).bond_dims
        assert all(t >= s for t, s in zip(tight, loose))

    def test_discarded_bounds_error(self, rng):
        lat = Lattice(4)
        a = random_operator(rng, 16)
        mpo = dense_to_mpo(a, lat, 0.2)
        assert operator_norm(mpo.to_dense() - a) <= mpo.discarded + 1e-12

    def test_json_manifest(self, rng):
        lat = Lattice(3)
        mpo = dense_to_mpo(random_operator(rng, 8), lat)
        doc = json.loads(mpo.to_json())
        assert doc["schema_version"] == 1 and doc["bond_dims"] == mpo.bond_dims
        back = MPO.from_json(mpo.to_json())
        for x, y in zip(back.site_tensors, mpo.site_tensors):
            np.testing.assert_array_equal(x, y)

    def test_shape_check(self):
        with pytest.raises(InvalidShape):
            dense_to_mpo(np.eye(4), Lattice(3))


class TestProjectorMPO:
    def test_strictly_local(self):
        lat = Lattice(5)
        z = local_constant(PAULI_Z, lat.region([2]))
        pm = projector_mpo(truncate_constant(z, 0), 0)
        assert pm.mpo.bond_dims == [1] * 6
        assert pm.error_vs_parent <= pm.svd_error + 1e-14

    def test_dressed_l2(self):
        zs = _family(6, 3, 1.0, seed=2)
        zt = truncate_constant(zs[3], 2)
        for k in (0, 1):
            pm = projector_mpo(zt, k)
            assert pm.error_vs_parent <= 2 * zt.perturbation_norm / 2.0 + 1e-10
            # bond dim across cut c is at most d^(2 * depth into X_l)
            sites = zt.region.sites
            for c, dim in enumerate(pm.mpo.bond_dims):
                depth = min(len([s for s in sites if s < c]), len([s for s in sites if s >= c]))
                assert dim <= 4**depth

    def test_sweep_rows(self):
        zs = _family(6, 3, 1.0, seed=2)
        rows = bond_dimension_sweep(zs[3], range(4))
        assert [r[0] for r in rows] == [0, 1, 2, 3]
        gs = [r[2] for r in rows]
        assert all(b <= a + 1e-12 for a, b in zip(gs, gs[1:]))


class TestStability:
    def test_strictly_local_family(self):
        zs = _family(4, 1, 1.0, seed=0, dressing=False)
        chain = ProjectorChain(zs, 0, [0, 1, 1, 0])
        res = stability_product(chain)
        assert res.measured <= 1e-14 and chain.commutation_error() <= 1e-14
        joint = joint_eigenprojector(chain)
        assert joint.fidelity == pytest.approx(1.0)
        # selection picks bit 1, 0, 0, 1 for eigenvalues -1, +1, +1, -1
        np.testing.assert_allclose(joint.q, np.diag(np.eye(16)[0b1001]), atol=1e-14)

    def test_single_factor_reduces_to_projector_distance(self):
        zs = _family(6, 3, 1.0, seed=1)
        chain = ProjectorChain([zs[2]], 1, [0])
        res = stability_product(chain)
        zt = chain.truncations[0]
        assert res.measured == pytest.approx(zt.projector_distance[0], abs=1e-12)
        assert res.bound_sum == pytest.approx(2 * zt.perturbation_norm / 2.0)

    def test_dressed_n6(self):
        zs = _family(6, 3, 1.5, seed=3)
        chain = ProjectorChain(zs, 2, [0, 1, 0, 0, 1, 1])
        assert chain.commutation_error() < 1e-9
        joint = joint_eigenprojector(chain)
        assert joint.stability.holds
        assert joint.infidelity <= joint.stability.bound_uniform
        assert joint.idempotency_error <= 3 * joint.stability.bound_uniform

    def test_full_truncation_exact(self):
        zs = _family(5, 3, 1.0, seed=4)
        joint = joint_eigenprojector(ProjectorChain(zs, 5, [1, 0, 1, 0, 1]))
        assert joint.infidelity <= 1e-10

    def test_empty_intersection(self):
        lat = Lattice(2)
        z = local_constant(PAULI_Z, lat.region([0]))
        with pytest.raises(EmptyIntersection):
            joint_eigenprojector(ProjectorChain([z, z], 0, [0, 1]))

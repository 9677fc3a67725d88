import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density, random_operator
from mblprop.constants import BoundCheck, extract_dressed_z, local_constant, truncate_constant
from mblprop.errors import BoundViolation, DegenerateSpectrum, InvalidInput
from mblprop.models import (
    DisorderSpec,
    build_diagonal_mbl,
    build_dressing_unitary,
    diagonal_mbl_from_arrays,
    dress_hamiltonian,
    dressed_spectrum,
    identity_dressing,
    spectrum_of,
)
from mblprop.operators import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    Lattice,
    embed_local,
    operator_norm,
    plus_state,
    trace_norm,
)
from mblprop.propagation import (
    GrowthEvaluator,
    PropagationReport,
    SamplingSpec,
    TimeAverageEstimate,
    _raise_alarms,
    build_experiment_state,
    build_flip_observable,
    corollary_strict_bound,
    dephasing_average_state,
    effective_dimension,
    equilibration_check,
    evolve_density,
    evolve_state,
    growth_metric,
    heisenberg_evolve,
    lemma1_bound,
    run_corollary_flocal,
    run_corollary_strict,
    run_lemma1,
    run_theorem1,
    theorem1_bound,
    theorem1_setup,
)
from oracles import heisenberg_expm, monte_carlo_time_average


def _diag(n, seed, **kw):
    return build_diagonal_mbl(DisorderSpec(seed=seed, **kw), Lattice(n))


def _dressed(n, layers, alpha, seed):
    lat = Lattice(n)
    h = build_diagonal_mbl(DisorderSpec(seed=seed), lat)
    v = build_dressing_unitary(lat, layers, alpha, seed)
    return h, v, dressed_spectrum(h, v), extract_dressed_z(dress_hamiltonian(h, v), v, n // 2)


class TestEvolution:
    def test_larmor_quarter_turn(self):
        omega = 1.7
        sp = spectrum_of(omega * PAULI_Z / 2)
        t = math.pi / (2 * omega)
        at = heisenberg_evolve(PAULI_X, sp, t)
        np.testing.assert_allclose(at, heisenberg_expm(PAULI_X, omega * PAULI_Z / 2, t), atol=1e-12)
        # exp(i w t Z/2) X exp(-i w t Z/2) = cos(wt) X - sin(wt) Y
        np.testing.assert_allclose(at, -PAULI_Y, atol=1e-12)

    @given(st.integers(1, 4), st.floats(-50, 50), st.integers(0, 500))
    def test_matches_matrix_exponential(self, n, t, seed):
        rng = np.random.default_rng(seed)
        d = 2**n
        h = random_operator(rng, d, hermitian=True)
        a = random_operator(rng, d)
        err = np.abs(heisenberg_evolve(a, spectrum_of(h), t) - heisenberg_expm(a, h, t)).max()
        assert err <= 1e-9

    def test_conserved_quantity(self, rng):
        h = random_operator(rng, 8, hermitian=True)
        np.testing.assert_allclose(heisenberg_evolve(h, spectrum_of(h), 3.3), h, atol=1e-12)

    @given(st.integers(0, 200))
    def test_norm_trace_and_insertion(self, seed):
        rng = np.random.default_rng(seed)
        h = random_operator(rng, 8, hermitian=True)
        a = random_operator(rng, 8)
        rho = random_density(rng, 8)
        sp = spectrum_of(h)
        for t in rng.uniform(-20, 20, 5):
            at = heisenberg_evolve(a, sp, t)
            assert abs(operator_norm(at) - operator_norm(a)) <= 1e-9
            assert abs(np.trace(at) - np.trace(a)) <= 1e-9
            # tr(A_t rho_{-t}) = tr(A rho)
            assert abs(np.trace(at @ evolve_density(rho, sp, -t)) - np.trace(a @ rho)) <= 1e-9

    def test_state_and_density_evolution_agree(self, rng):
        h = random_operator(rng, 8, hermitian=True)
        sp = spectrum_of(h)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        psi /= np.linalg.norm(psi)
        pt = evolve_state(psi, sp, 1.3)
        np.testing.assert_allclose(np.outer(pt, pt.conj()), evolve_density(np.outer(psi, psi.conj()), sp, 1.3),
                                   atol=1e-12)


class TestDephasing:
    def test_plus_state_dephases_to_identity(self):
        h = _diag(6, 0)
        omega = dephasing_average_state(plus_state(h.lattice), h.spectrum)
        np.testing.assert_allclose(omega, np.eye(64) / 64, atol=1e-14)
        assert effective_dimension(plus_state(h.lattice), h.spectrum) == pytest.approx(64)

    def test_diagonal_state_unchanged(self, rng):
        h = random_operator(rng, 8, hermitian=True)
        sp = spectrum_of(h)
        p = rng.uniform(size=8)
        rho = sp.eigenvectors @ np.diag(p / p.sum()) @ sp.eigenvectors.conj().T
        np.testing.assert_allclose(dephasing_average_state(rho, sp), rho, atol=1e-12)

    def test_eigenstate_effective_dimension(self):
        h = _diag(4, 1)
        assert effective_dimension(h.spectrum.eigenvectors[:, 3], h.spectrum) == pytest.approx(1.0)

    def test_degenerate(self):
        lat = Lattice(3)
        h = diagonal_mbl_from_arrays(np.ones(3), np.zeros((3, 3)), lat)
        with pytest.raises(DegenerateSpectrum):
            dephasing_average_state(plus_state(lat), h.spectrum)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(8)
        h = _diag(3, 5).matrix + 0.3 * random_operator(rng, 8, hermitian=True)
        sp = spectrum_of(h)
        rho = random_density(rng, 8)
        omega = dephasing_average_state(rho, sp)
        t_max = 1e4 / sp.min_gap
        mc, se = monte_carlo_time_average(rho, h, t_max, 2000, seed=1)
        assert 0.5 * trace_norm(mc - omega) < 0.02
        assert np.all(np.abs(mc - omega) <= 3 * se + 1e-12)


class TestSampling:
    def test_uniform_deterministic(self):
        s = SamplingSpec(10, seed=4)
        np.testing.assert_array_equal(s.times(5.0), SamplingSpec(10, seed=4).times(5.0))
        assert np.all((s.times(5.0) >= 0) & (s.times(5.0) <= 5.0))

    def test_golden_fills_interval(self):
        t = SamplingSpec(100, kind="golden", seed=0).times(1.0)
        # additive golden sequence: every bin of width 1/10 gets 10 +- 1 points
        counts = np.histogram(t, bins=10, range=(0, 1))[0]
        assert counts.min() >= 9 and counts.max() <= 11

    def test_t_max_default(self):
        h = _diag(4, 0)
        assert SamplingSpec(t_max_multiplier=10).resolve_t_max(h.spectrum) == pytest.approx(10 / h.spectrum.min_gap)

    def test_validation(self):
        with pytest.raises(InvalidInput):
            SamplingSpec(1)
        with pytest.raises(InvalidInput):
            SamplingSpec(kind="sobol")

    def test_stderr_uses_sample_variance(self):
        est = TimeAverageEstimate.from_samples([0, 1, 2], [1.0, 2.0, 3.0], 2.0, "uniform")
        assert est.mean == 2.0 and est.stderr == pytest.approx(1.0 / math.sqrt(3))


class TestGrowthMetric:
    @pytest.mark.parametrize("site,region", [(2, [1, 2, 3]), (0, [2, 3]), (4, [0, 1])])
    def test_paths_agree(self, site, region):
        h = _diag(5, 3)
        lat = h.lattice
        a = embed_local(PAULI_X, lat.region([site]))
        reg = lat.region(region)
        times = np.linspace(0.0, 40.0, 7)
        vals = {m: GrowthEvaluator(a, h.spectrum, reg, m).values(times) for m in ("flip", "eigenbasis", "dense")}
        np.testing.assert_allclose(vals["flip"], vals["dense"], atol=1e-10)
        np.testing.assert_allclose(vals["eigenbasis"], vals["dense"], atol=1e-10)

    def test_dressed_operator_uses_eigenbasis(self):
        _, v, sp, _ = _dressed(5, 2, 1.0, seed=2)
        lat = v.lattice
        a = v.conjugate(embed_local(PAULI_X, lat.region([2])))
        reg = lat.region([1, 2])
        ev = GrowthEvaluator(a, sp, reg)
        assert ev.method == "eigenbasis"
        dense = GrowthEvaluator(a, sp, reg, "dense")
        for t in (0.0, 2.5, 17.0):
            assert ev.at(t) == pytest.approx(dense.at(t), abs=1e-10)

    def test_outside_operator_free_evolution(self):
        lat = Lattice(3)
        sp = spectrum_of(np.zeros((8, 8)))
        a = embed_local(PAULI_X, lat.region([0]))
        est, _ = growth_metric(a, sp, lat.region([1, 2]), SamplingSpec(5, t_max=1.0))
        assert est.mean == pytest.approx(1.0) and est.stderr == pytest.approx(0.0, abs=1e-14)

    def test_identity_has_zero_metric(self):
        h = _diag(4, 0)
        est, _ = growth_metric(np.eye(16), h.spectrum, h.lattice.region([1]), SamplingSpec(5))
        assert est.mean == pytest.approx(0.0, abs=1e-12)

    def test_flip_path_rejects_dense_operator(self, rng):
        h = _diag(3, 0)
        with pytest.raises(InvalidInput):
            GrowthEvaluator(random_operator(rng, 8), h.spectrum, h.lattice.region([0]), "flip")


class TestLemma1:
    def test_bound_arithmetic(self):
        assert lemma1_bound(2, 3, 10) == 0.75
        assert lemma1_bound(2, 2, 8) == 0.75

    def test_n8_passes(self):
        h = _diag(8, 0)
        rep = run_lemma1(h, 4, h.lattice.region([4, 5]), SamplingSpec(200, seed=0))
        assert rep.bound == 0.75 and rep.verdict
        assert rep.diagnostics["method"] == "flip"
        assert rep.diagnostics["initial_expectation"] == pytest.approx(1.0)

    def test_non_interacting_contrast(self):
        h = _diag(8, 0, coupling_scale=0.0)
        rep = run_lemma1(h, 4, h.lattice.region([3, 4, 5]), SamplingSpec(100, t_max=1e3))
        assert rep.measured.mean < 1e-12 and not rep.verdict
        assert not rep.diagnostics["genericity"]["gaps_nondegenerate"]

    def test_degenerate_rejected(self):
        lat = Lattice(4)
        h = diagonal_mbl_from_arrays(np.ones(4), np.zeros((4, 4)), lat)
        with pytest.raises(DegenerateSpectrum):
            run_lemma1(h, 1, lat.region([1]), SamplingSpec(10))

    def test_report_serializes(self):
        import json
        h = _diag(6, 1)
        rep = run_lemma1(h, 3, h.lattice.region([2, 3]), SamplingSpec(20))
        doc = json.loads(rep.to_json())
        assert doc["kind"] == "lemma1" and doc["config"]["S"] == [2, 3]
        assert doc["margin"] == pytest.approx(doc["measured"]["mean"] - doc["bound"])


class TestFlocal:
    def test_identity_dressing_reduces_to_diagonal_run(self):
        h = _diag(6, 2)
        reg = h.lattice.region([2, 3, 4])
        smp = SamplingSpec(50, seed=3)
        a = run_corollary_flocal(h, identity_dressing(h.lattice), 3, 1, reg, smp)
        b = run_lemma1(h, 3, reg, smp)
        assert a.bound_terms["f_l"] == 0.0
        assert a.measured.mean == pytest.approx(b.measured.mean, abs=1e-12)

    def test_dressed_n8(self):
        lat = Lattice(8)
        h = build_diagonal_mbl(DisorderSpec(seed=0), lat)
        v = build_dressing_unitary(lat, 3, 1.5, 0)
        rep = run_corollary_flocal(h, v, 4, 2, lat.region([3, 4, 5]), SamplingSpec(60, seed=0))
        f2 = rep.bound_terms["f_l"]
        assert f2 == pytest.approx(v.f(2), rel=1e-9, abs=1e-14)
        assert rep.bound == pytest.approx(1 - 2**-1 - 2 * f2)
        assert rep.check("initial").holds and rep.verdict


class TestFlipAndState:
    def test_single_qubit_flip_is_pauli_x(self):
        z = local_constant(PAULI_Z, Lattice(1).region([0]))
        np.testing.assert_allclose(build_flip_observable(z).operator, PAULI_X, atol=1e-15)

    def test_two_qubit_invariants(self):
        z = local_constant(PAULI_Z, Lattice(2).region([0]))
        a = build_flip_observable(z).operator
        np.testing.assert_allclose(a @ a, np.eye(4), atol=1e-14)
        assert operator_norm(a) == pytest.approx(1.0)

    def test_dressed_flip_block_off_diagonal(self):
        _, _, _, z = _dressed(6, 3, 1.0, seed=1)
        flip = build_flip_observable(truncate_constant(z, 2))
        assert all(c.holds for c in flip.checks)
        for p in flip.truncation.projectors:
            assert np.abs(p @ flip.operator @ p).max() <= 1e-12

    def test_strictly_local_state_is_eigenstate(self):
        h = _diag(6, 4)
        lat = h.lattice
        z = local_constant(PAULI_Z, lat.region([2]), hamiltonian=h.matrix)
        flip = build_flip_observable(z)
        st_ = build_experiment_state(z, flip, h.spectrum)
        np.testing.assert_allclose(flip.operator @ st_.psi, st_.psi, atol=1e-12)
        assert st_.effective_dim >= 32 - 1e-9
        assert abs(np.linalg.norm(st_.psi) - 1) < 1e-12

    def test_dressed_state_expectation(self):
        _, _, sp, z = _dressed(8, 4, 1.5, seed=0)
        l = next(l for l, g in z.locality.samples if 9 * g / z.gap < 0.1)
        setup = theorem1_setup(z, l, sp)
        assert setup.state.psi_a_psi >= 0.9
        assert all(c.holds for c in setup.checks if c.alarm)


class TestStrictAndTheorem:
    def test_strict_bound_arithmetic(self):
        assert corollary_strict_bound(2, 3, 1, 1, 10) == pytest.approx(1 - 2**-1.5)
        assert corollary_strict_bound(2, 3, 1, 1, 10) == pytest.approx(0.6464, abs=1e-4)
        vals = [corollary_strict_bound(2, s, 1, 1, 10) for s in (1, 2, 3)]
        assert vals[0] > vals[1] > vals[2]
        assert corollary_strict_bound(2, 2, 1, 1, 8) < corollary_strict_bound(2, 2, 1, 1, 10)

    def test_theorem_bound_arithmetic(self):
        assert theorem1_bound(0.05 * 2 / 13, 2.0, 4.0, 2**9) == pytest.approx(1 - 0.05 - 4 / (2 * 2**4.5))
        assert theorem1_bound(0.0, 2.0, 4.0, 2**9) == pytest.approx(1 - 4 / (2 * math.sqrt(512)))

    def test_strict_run(self):
        h = _diag(8, 1)
        lat = h.lattice
        z = local_constant(PAULI_Z, lat.region([4]), hamiltonian=h.matrix)
        rep = run_corollary_strict(h, z, lat.region([3, 4, 5]), SamplingSpec(100))
        assert rep.verdict and not rep.failed_alarms
        assert rep.bound_terms["d_min_tilde"] == 128

    def test_strict_requires_x_in_s(self):
        h = _diag(4, 1)
        z = local_constant(PAULI_Z, h.lattice.region([0]))
        with pytest.raises(InvalidInput):
            run_corollary_strict(h, z, h.lattice.region([2, 3]), SamplingSpec(10))

    def test_theorem_run_small(self):
        _, _, sp, z = _dressed(6, 3, 1.5, seed=2)
        rep = run_theorem1(z, 2, z.lattice.region([3, 4]), sp, SamplingSpec(40, seed=2))
        assert rep.kind == "theorem1" and not rep.failed_alarms
        assert rep.bound_terms["d_min_tilde"] == 32
        assert rep.check("equilibration").alarm is False

    def test_alarm_raises_with_report(self):
        est = TimeAverageEstimate.from_samples([0.0, 1.0], [1.0, 1.0], 1.0, "uniform")
        rep = PropagationReport("theorem1", est, 0.5, {}, [BoundCheck("x: 1 <= 0", 1.0, 0.0)])
        with pytest.raises(BoundViolation) as info:
            _raise_alarms(rep, True)
        assert info.value.check.startswith("x") and info.value.report is rep
        assert _raise_alarms(rep, False) is rep


class TestEquilibration:
    def test_maximally_mixed_is_stationary(self):
        h = _diag(4, 0)
        eq = equilibration_check(np.eye(16) / 16, h.spectrum, h.lattice.region([1, 2]), SamplingSpec(10))
        assert eq.forward.mean == pytest.approx(0.0, abs=1e-13)
        assert eq.backward.mean == pytest.approx(0.0, abs=1e-13)

    def test_rhs_and_time_reversal(self):
        h = _diag(10, 3)
        eq = equilibration_check(plus_state(h.lattice), h.spectrum, h.lattice.region([4, 5]), SamplingSpec(200))
        assert eq.rhs == pytest.approx(0.0625)
        diff = abs(eq.forward.mean - eq.backward.mean)
        assert diff <= 2 * math.hypot(eq.forward.stderr, eq.backward.stderr) + 1e-3
        assert eq.holds_trace_distance

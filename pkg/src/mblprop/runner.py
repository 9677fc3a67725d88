"""Config-driven experiment execution shared by the CLI and the sweep driver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ExperimentConfig
from .constants import ConstantOfMotion, extract_dressed_z, local_constant
from .errors import BoundViolation, ConfigError, MBLPropError
from .models import (
    DisorderSpec,
    build_diagonal_mbl,
    build_dressing_unitary,
    diagonal_mbl_from_arrays,
    dress_hamiltonian,
    dressed_spectrum,
    identity_dressing,
)
from .operators import PAULI_Z, Lattice, Region, plus_state
from .propagation import (
    SamplingSpec,
    equilibration_check,
    growth_metric,
    run_corollary_flocal,
    run_corollary_strict,
    run_lemma1,
    run_theorem1,
    theorem1_setup,
)
from .signalling import find_witness
from .spectral_tn import ProjectorChain, bond_dimension_sweep, joint_eigenprojector


@dataclass
class Outcome:
    """Result of one configured run.

    ``margin`` is positive when the tested inequality holds.
    """

    kind: str
    result: dict
    passed: bool
    metric: float
    stderr: float
    bound: float
    margin: float
    curve_header: list = field(default_factory=list)
    curve_rows: list = field(default_factory=list)

    def document(self, cfg: ExperimentConfig) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "kind": self.kind,
            "passed": self.passed,
            "metric": self.metric,
            "stderr": self.stderr,
            "bound": self.bound,
            "margin": self.margin,
            "result": self.result,
            "config": cfg.to_dict(),
        }


# -- builders -----------------------------------------------------------------


def build_lattice(cfg: ExperimentConfig) -> Lattice:
    lat = cfg.section("lattice")
    try:
        return Lattice(lat["num_sites"], lat["local_dim"], lat["max_qubits"])
    except MBLPropError as exc:
        raise ConfigError(str(exc)) from exc


def build_hamiltonian(cfg: ExperimentConfig, lattice: Lattice):
    dis = cfg.section("disorder")
    n = lattice.num_sites
    spec = DisorderSpec(cfg.seed, dis["field_width"], dis["coupling_scale"], dis["decay_length"],
                        dis["interaction_order"])
    if dis["fields"] is None and dis["couplings"] is None:
        return build_diagonal_mbl(spec, lattice)
    base = build_diagonal_mbl(spec, lattice)
    fields = base.fields if dis["fields"] is None else np.asarray(dis["fields"], dtype=float)
    c = dis["couplings"]
    if c is None:
        couplings = base.couplings
    elif isinstance(c, (int, float)):
        couplings = np.triu(np.full((n, n), float(c)), 1)
    else:
        couplings = np.asarray(c, dtype=float)
    return diagonal_mbl_from_arrays(fields, couplings, lattice, spec)


def build_dressing(cfg: ExperimentConfig, lattice: Lattice):
    d = cfg.section("dressing")
    if d["layers"] == 0:
        return identity_dressing(lattice)
    seed = cfg.seed if d["seed"] is None else d["seed"]
    return build_dressing_unitary(lattice, d["layers"], d["angle_decay"], seed, d["theta0"])


def site_of(cfg: ExperimentConfig, lattice: Lattice) -> int:
    s = cfg.section("regions")["site"]
    return lattice.num_sites // 2 if s is None else s


def region_s(cfg: ExperimentConfig, lattice: Lattice, site: int) -> Region:
    """Explicit ``regions.S`` or a block of ``S_size`` sites containing ``site``."""
    reg = cfg.section("regions")
    if reg["S"] is not None:
        return lattice.region(reg["S"])
    size = reg["S_size"]
    start = min(max(0, site - (size - 1) // 2), lattice.num_sites - size)
    return lattice.region(range(start, start + size))


def sampling_of(cfg: ExperimentConfig, workers: int = 1) -> SamplingSpec:
    s = cfg.section("sampling")
    seed = cfg.seed if s["seed"] is None else s["seed"]
    return SamplingSpec(s["num_samples"], float(s["t_max_multiplier"]), s["kind"], seed, None, workers)


def choose_l(z: ConstantOfMotion, target: float, factor: float = 13.0) -> int:
    """Smallest ``l`` with ``factor * g(l) / gamma <= target`` (last sample if none)."""
    for l, g in z.locality.samples:
        if factor * g / z.gap <= target:
            return int(l)
    return int(z.locality.samples[-1][0])


def resolve_l(cfg: ExperimentConfig, z: ConstantOfMotion) -> int:
    reg = cfg.section("regions")
    return choose_l(z, reg["l_target"]) if reg["l"] == "auto" else int(reg["l"])


def _report_outcome(report) -> Outcome:
    est = report.measured
    passed = report.verdict and not report.failed_alarms
    rows = [[float(t), float(v)] for t, v in zip(est.times, est.values)]
    return Outcome(report.kind, report.to_dict(), passed, est.mean, est.stderr, report.bound, report.margin,
                   ["t", "metric"], rows)


# -- experiment kinds ---------------------------------------------------------


def _lemma1(cfg, workers):
    lat = build_lattice(cfg)
    h = build_hamiltonian(cfg, lat)
    site = site_of(cfg, lat)
    return _report_outcome(run_lemma1(h, site, region_s(cfg, lat, site), sampling_of(cfg, workers)))


def _corollary_flocal(cfg, workers):
    lat = build_lattice(cfg)
    h = build_hamiltonian(cfg, lat)
    v = build_dressing(cfg, lat)
    site = site_of(cfg, lat)
    reg = cfg.section("regions")
    l = v.profile.samples[-1][0] if reg["l"] == "auto" else int(reg["l"])
    rep = run_corollary_flocal(h, v, site, l, region_s(cfg, lat, site), sampling_of(cfg, workers))
    return _report_outcome(rep)


def _local_z(d: int) -> np.ndarray:
    return PAULI_Z if d == 2 else np.diag(np.arange(d, dtype=float)).astype(complex)


def _corollary_strict(cfg, workers):
    lat = build_lattice(cfg)
    h = build_hamiltonian(cfg, lat)
    site = site_of(cfg, lat)
    z = local_constant(_local_z(lat.local_dim), lat.region([site]), hamiltonian=h.matrix)
    rep = run_corollary_strict(h, z, region_s(cfg, lat, site), sampling_of(cfg, workers))
    return _report_outcome(rep)


def _dressed_setup(cfg, lattice):
    h = build_hamiltonian(cfg, lattice)
    v = build_dressing(cfg, lattice)
    spectrum = dressed_spectrum(h, v)
    z = extract_dressed_z(dress_hamiltonian(h, v), v, site_of(cfg, lattice))
    return h, v, spectrum, z


def _theorem1(cfg, workers):
    lat = build_lattice(cfg)
    _, _, spectrum, z = _dressed_setup(cfg, lat)
    site = site_of(cfg, lat)
    l = resolve_l(cfg, z)
    rep = run_theorem1(z, l, region_s(cfg, lat, site), spectrum, sampling_of(cfg, workers))
    return _report_outcome(rep)


def _signalling(cfg, workers):
    lat = build_lattice(cfg)
    _, _, spectrum, z = _dressed_setup(cfg, lat)
    l = resolve_l(cfg, z)
    setup = theorem1_setup(z, l, spectrum)
    bad = [c for c in setup.checks if c.alarm and not c.holds]
    if bad:
        raise BoundViolation(bad[0].name)
    reg, smp = cfg.section("regions"), cfg.section("sampling")
    bob = setup.flip.region
    shielded = bob.enlarge(reg["separation"])
    if shielded.is_full():
        raise ConfigError("separation leaves no sites for the encoder")
    sampling = sampling_of(cfg, workers)
    a = setup.flip.operator
    metric, method = growth_metric(a, spectrum, shielded, sampling)
    common = dict(num_candidates=smp["candidates"], sampling=sampling, alice=shielded.complement(),
                  seed=sampling.seed, a_support=bob)
    wit = find_witness(spectrum, a, shielded, psi=setup.state.psi, state_mode="experiment", **common)
    opt = find_witness(spectrum, a, shielded, state_mode="optimal", **common)
    tol = smp["signal_tolerance"]
    passed = wit.mean_signal >= metric.mean - tol and wit.best_signal >= wit.mean_signal
    result = {
        "l": l,
        "bob_region": list(bob.sites),
        "alice_region": list(wit.alice.sites),
        "separation": reg["separation"],
        "growth_metric": metric.to_dict(),
        "method": method,
        "tolerance": tol,
        "witness": wit.to_dict(),
        "optimal_state_witness": opt.to_dict(),
        "optimal_state_passes": bool(opt.mean_signal >= metric.mean - tol),
    }
    rows = [[k, float(s), float(o)] for k, (s, o) in enumerate(zip(wit.signals, opt.signals))]
    return Outcome("signalling", result, bool(passed), wit.mean_signal,
                   float(wit.signals.std(ddof=1) / math.sqrt(len(wit.signals))) if len(wit.signals) > 1 else 0.0,
                   metric.mean - tol, wit.mean_signal - (metric.mean - tol),
                   ["candidate", "signal_experiment_state", "signal_optimal_state"], rows)


def _spectral_tn(cfg, workers):
    lat = build_lattice(cfg)
    h = build_hamiltonian(cfg, lat)
    v = build_dressing(cfg, lat)
    hd = dress_hamiltonian(h, v)
    n = lat.num_sites
    zs = [extract_dressed_z(hd, v, j) for j in range(n)]
    reg = cfg.section("regions")
    l = choose_l(zs[n // 2], reg["l_target"]) if reg["l"] == "auto" else int(reg["l"])
    selection = reg["selection"] or [0] * n
    chain = ProjectorChain(zs, l, selection)
    joint = joint_eigenprojector(chain)
    stab = joint.stability
    bound = stab.bound_uniform
    passed = stab.holds and joint.infidelity <= bound + 1e-10 and joint.idempotency_error <= 3 * bound + 1e-10
    sweep = bond_dimension_sweep(zs[site_of(cfg, lat)], range(n + 1), 0, reg["svd_tol"])
    result = {
        "l": l,
        "selection": selection,
        "commutation_error": chain.commutation_error(),
        "joint": joint.to_dict(),
        "bond_sweep": [list(r) for r in sweep],
    }
    rows = [[int(r[0]), int(r[1]), float(r[2]), float(r[3])] for r in sweep]
    return Outcome("spectral_tn", result, bool(passed), stab.measured, 0.0, bound, bound - stab.measured,
                   ["l", "max_bond_dim", "g", "error_vs_exact"], rows)


def _equilibration(cfg, workers):
    lat = build_lattice(cfg)
    h = build_hamiltonian(cfg, lat)
    site = site_of(cfg, lat)
    s = region_s(cfg, lat, site)
    eq = equilibration_check(plus_state(lat), h.spectrum, s, sampling_of(cfg, workers))
    metric = max(eq.forward.mean, eq.backward.mean)
    stderr = max(eq.forward.stderr, eq.backward.stderr)
    rows = [[float(t), float(f), float(b)] for t, f, b in zip(eq.forward.times, eq.forward.values, eq.backward.values)]
    return Outcome("equilibration", eq.to_dict(), bool(eq.holds), metric, stderr, eq.rhs, eq.rhs - metric,
                   ["t", "forward", "backward"], rows)


RUNNERS = {
    "lemma1": _lemma1,
    "corollary_flocal": _corollary_flocal,
    "corollary_strict": _corollary_strict,
    "theorem1": _theorem1,
    "signalling": _signalling,
    "spectral_tn": _spectral_tn,
    "equilibration": _equilibration,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> Outcome:
    return RUNNERS[cfg.kind](cfg, workers)

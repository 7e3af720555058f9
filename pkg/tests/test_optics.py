import math

import numpy as np
import pytest

from wclass_sim.errors import ModeKindError, ProtocolSequencingError
from wclass_sim.fock import (
    FockState,
    ModeRegistry,
    create,
    equal_up_to_global_phase,
    normalize,
    superpose,
)
from wclass_sim.optics import (
    BeamSplitterSpec,
    LossSpec,
    PumpSpec,
    apply_beam_splitter,
    apply_loss,
    apply_phase,
    detect,
    detection_outcomes,
    loss_outcomes,
    pump_excite,
    repump_convert,
)

from oracle_helpers import bs_output_amplitudes, binomial_pmf, squeezer_amplitude


@pytest.fixture
def optics_registry():
    reg = ModeRegistry()
    reg.add_atomic("ens")
    reg.add_photonic("a")
    reg.add_photonic("b")
    return reg.seal()


def photon_pair_state(reg, na, nb):
    state = FockState.vacuum(reg, truncation_cap=6)
    a, b = reg.modes[1], reg.modes[2]
    for _ in range(na):
        state = create(state, a)
    for _ in range(nb):
        state = create(state, b)
    return normalize(state)


def test_beam_splitter_single_photon(optics_registry):
    reg = optics_registry
    bs = BeamSplitterSpec(reg.modes[1], reg.modes[2])
    out = apply_beam_splitter(photon_pair_state(reg, 1, 0), bs)
    assert out.amplitude((0, 1, 0)) == pytest.approx(1 / math.sqrt(2))
    assert out.amplitude((0, 0, 1)) == pytest.approx(1 / math.sqrt(2))


def test_beam_splitter_vacuum_invariance(optics_registry):
    reg = optics_registry
    bs = BeamSplitterSpec(reg.modes[1], reg.modes[2])
    vac = FockState.vacuum(reg)
    assert apply_beam_splitter(vac, bs).amplitude((0, 0, 0)) == pytest.approx(1.0)


def test_beam_splitter_hong_ou_mandel(optics_registry):
    reg = optics_registry
    bs = BeamSplitterSpec(reg.modes[1], reg.modes[2])
    out = apply_beam_splitter(photon_pair_state(reg, 1, 1), bs)
    assert out.amplitude((0, 2, 0)) == pytest.approx(1 / math.sqrt(2))
    assert out.amplitude((0, 0, 2)) == pytest.approx(-1 / math.sqrt(2))
    assert abs(out.amplitude((0, 1, 1))) < 1e-12


@pytest.mark.parametrize("na,nb", [(0, 1), (2, 0), (2, 1), (1, 2), (2, 2), (3, 1)])
def test_beam_splitter_matches_polynomial_oracle(optics_registry, na, nb):
    reg = optics_registry
    bs = BeamSplitterSpec(reg.modes[1], reg.modes[2])
    out = apply_beam_splitter(photon_pair_state(reg, na, nb), bs)
    for (p, q), amp in bs_output_amplitudes(na, nb).items():
        assert out.amplitude((0, p, q)) == pytest.approx(amp, abs=1e-12)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


def test_beam_splitter_is_an_involution(optics_registry):
    # [[1,1],[1,-1]]/sqrt(2) squares to the identity.
    reg = optics_registry
    bs = BeamSplitterSpec(reg.modes[1], reg.modes[2])
    rng = np.random.default_rng(5)
    for _ in range(20):
        terms = {}
        for _ in range(4):
            occ = (0, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
            terms[occ] = complex(rng.normal(), rng.normal())
        psi = normalize(FockState(reg, terms, 6))
        back = apply_beam_splitter(apply_beam_splitter(psi, bs), bs)
        assert equal_up_to_global_phase(back, psi, 1e-10)


def test_beam_splitter_rejects_atomic_modes(optics_registry):
    reg = optics_registry
    with pytest.raises(ModeKindError):
        BeamSplitterSpec(reg.modes[0], reg.modes[1])


def test_apply_phase_examples(optics_registry):
    reg = optics_registry
    one = photon_pair_state(reg, 1, 0)
    assert apply_phase(one, reg.modes[1], 0.0) is one
    flipped = apply_phase(one, reg.modes[1], math.pi)
    assert flipped.amplitude((0, 1, 0)) == pytest.approx(-1.0)
    rng = np.random.default_rng(1)
    psi = photon_pair_state(reg, 2, 1)
    for phi in rng.uniform(-3, 3, 5):
        roundtrip = apply_phase(apply_phase(psi, reg.modes[1], phi), reg.modes[1], -phi)
        assert equal_up_to_global_phase(roundtrip, psi, 1e-12)


def test_pump_first_order_amplitude(optics_registry):
    reg = optics_registry
    phi = 0.7
    pumped = pump_excite(
        FockState.vacuum(reg), PumpSpec(reg.modes[0], reg.modes[1], 0.01, phi)
    )
    expect = math.sqrt(0.01) * complex(math.cos(phi), math.sin(phi))
    assert pumped.amplitude((1, 1, 0)) == pytest.approx(expect, abs=1e-12)


def test_pump_double_pair_matches_squeezer_series(optics_registry):
    # Oracle: second-order expansion of exp(lam S+A+) puts lam^2 on |2,2>.
    reg = optics_registry
    phi = -0.4
    p_e = 0.02
    pumped = pump_excite(
        FockState.vacuum(reg), PumpSpec(reg.modes[0], reg.modes[1], p_e, phi)
    )
    assert pumped.amplitude((2, 2, 0)) == pytest.approx(
        squeezer_amplitude(p_e, phi, 2), abs=1e-12
    )
    assert pumped.amplitude((1, 1, 0)) == pytest.approx(
        squeezer_amplitude(p_e, phi, 1), abs=1e-12
    )


def test_pump_zero_photon_projection_returns_input(optics_registry):
    reg = optics_registry
    pumped = pump_excite(
        FockState.vacuum(reg), PumpSpec(reg.modes[0], reg.modes[1], 0.05, 0.3)
    )
    vac_sector = {
        occ: amp for occ, amp in pumped.items() if occ[1] == 0 and occ[0] == 0
    }
    assert vac_sector == {(0, 0, 0): 1.0 + 0j}


def test_pump_occupied_stokes_is_sequencing_error(optics_registry):
    reg = optics_registry
    occupied = photon_pair_state(reg, 1, 0)
    with pytest.raises(ProtocolSequencingError):
        pump_excite(occupied, PumpSpec(reg.modes[0], reg.modes[1], 0.01, 0.0))


def test_pump_warns_outside_weak_regime(optics_registry):
    reg = optics_registry
    with pytest.warns(UserWarning):
        PumpSpec(reg.modes[0], reg.modes[1], 0.2, 0.0)


def test_repump_convert_examples(optics_registry):
    reg = optics_registry
    ens, phot = reg.modes[0], reg.modes[1]
    vac = FockState.vacuum(reg)
    one = create(vac, ens)
    moved = repump_convert(one, ens, phot)
    assert moved.amplitude((0, 1, 0)) == pytest.approx(1.0)
    # empty ensemble terms pass through unchanged
    psi = superpose([0.6, 0.8], [one, create(vac, reg.modes[2])])
    moved = repump_convert(psi, ens, phot)
    assert moved.amplitude((0, 0, 1)) == pytest.approx(0.8)
    assert moved.norm() == pytest.approx(psi.norm(), abs=1e-12)
    with pytest.raises(ProtocolSequencingError):
        repump_convert(moved, ens, phot)


def test_repump_preserves_per_term_excitation(optics_registry):
    reg = optics_registry
    ens, phot = reg.modes[0], reg.modes[1]
    state = create(create(FockState.vacuum(reg), ens), ens)
    moved = repump_convert(state, ens, phot)
    assert moved.amplitude((0, 2, 0)) == pytest.approx(math.sqrt(2))


def test_loss_eta_zero_is_identity(optics_registry):
    reg = optics_registry
    psi = photon_pair_state(reg, 2, 0)
    rng = np.random.default_rng(0)
    assert apply_loss(psi, reg.modes[1], LossSpec(0.0), rng) is not None
    branches = loss_outcomes(psi, reg.modes[1], 0.0)
    assert len(branches) == 1 and branches[0].prob == 1.0


def test_loss_eta_one_empties_the_mode(optics_registry):
    reg = optics_registry
    one = photon_pair_state(reg, 1, 0)
    rng = np.random.default_rng(0)
    out = apply_loss(one, reg.modes[1], LossSpec(1.0), rng)
    assert out.amplitude((0, 0, 0)) == pytest.approx(1.0)


def test_loss_sampling_matches_binomial_oracle(optics_registry):
    reg = optics_registry
    one = photon_pair_state(reg, 1, 0)
    eta = 0.3
    rng = np.random.default_rng(123)
    n = 100_000
    log: list = []
    survived = 0
    for _ in range(n):
        out = apply_loss(one, reg.modes[1], LossSpec(eta), rng, log=log)
        survived += out.amplitude((0, 1, 0)) != 0
    p = binomial_pmf(1, 1, eta)  # P(photon lost) = eta
    assert p == eta
    se = math.sqrt(eta * (1 - eta) / n)
    assert survived / n == pytest.approx(1 - eta, abs=3 * se)
    assert sum(log) == n - survived


def test_loss_branches_are_coherent_within_fixed_loss_count(optics_registry):
    # |1> + |2> with one photon lost keeps the |0>,|1> superposition.
    reg = optics_registry
    a = reg.modes[1]
    vac = FockState.vacuum(reg)
    psi = normalize(
        superpose(
            [1.0, 1.0],
            [create(vac, a), normalize(create(create(vac, a), a))],
        )
    )
    branches = {b.lost: b for b in loss_outcomes(psi, a, 0.4)}
    one_lost = branches[1]
    amps = dict(one_lost.state.items())
    assert set(amps) == {(0, 0, 0), (0, 1, 0)}


def test_detect_on_single_photon_and_vacuum(optics_registry):
    reg = optics_registry
    rng = np.random.default_rng(2)
    outcome, post = detect(photon_pair_state(reg, 1, 0), reg.modes[1], rng, "D1")
    assert outcome.clicked and outcome.detector_id == "D1"
    assert post.amplitude((0, 0, 0)) == pytest.approx(1.0)
    outcome, post = detect(FockState.vacuum(reg), reg.modes[1], rng)
    assert not outcome.clicked


def test_detect_confuses_one_and_two_photons(optics_registry):
    # (|1> + |2>)/sqrt(2): always clicks; k collapses to 1 or 2 evenly.
    reg = optics_registry
    a = reg.modes[1]
    vac = FockState.vacuum(reg)
    psi = normalize(
        superpose(
            [1.0, 1.0],
            [create(vac, a), normalize(create(create(vac, a), a))],
        )
    )
    branches = detection_outcomes(psi, a)
    probs = {b.photons: b.prob for b in branches}
    assert probs[1] == pytest.approx(0.5, abs=1e-12)
    assert probs[2] == pytest.approx(0.5, abs=1e-12)
    rng = np.random.default_rng(8)
    clicks = sum(detect(psi, a, rng)[0].clicked for _ in range(500))
    assert clicks == 500


def test_detect_zero_state_is_normalization_error(optics_registry):
    from wclass_sim.errors import NormalizationError

    reg = optics_registry
    zero = superpose([0.0], [FockState.vacuum(reg)])
    with pytest.raises(NormalizationError):
        detect(zero, reg.modes[1], np.random.default_rng(0))


def test_click_frequency_after_loss(optics_registry):
    reg = optics_registry
    one = photon_pair_state(reg, 1, 0)
    eta = 0.25
    rng = np.random.default_rng(77)
    n = 20_000
    clicks = 0
    for _ in range(n):
        lossy = apply_loss(one, reg.modes[1], LossSpec(eta), rng)
        clicks += detect(lossy, reg.modes[1], rng)[0].clicked
    se = math.sqrt(eta * (1 - eta) / n)
    assert clicks / n == pytest.approx(1 - eta, abs=3 * se)

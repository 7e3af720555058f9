import math

import numpy as np
import pytest
from scipy import stats

from wclass_sim.errors import DomainError, InsufficientDataError, PreconditionError
from wclass_sim.fock import create
from wclass_sim.montecarlo import (
    NoisyStateMixture,
    estimate_vacuum_coefficient,
    fidelity_mixture,
    predicted_generation_time,
    run_batch,
    run_epr_batch,
    wilson_interval,
)
from wclass_sim.protocol import (
    ChainSimulator,
    ProtocolConfig,
    ideal_w_state,
    make_chain_layout,
)

from oracle_helpers import (
    chain_stage_probabilities,
    expected_rounds_with_restart,
)


def test_predicted_generation_time_examples():
    for n in (3, 5, 8):
        assert predicted_generation_time(n, 0.0, 1.0, 2.5) == pytest.approx(2.5)
    # consecutive-n ratio is exactly 1/((1-eta)^2 p_c)
    for eta, p_c in [(0.0, 0.02), (0.3, 0.01), (0.6, 0.4)]:
        r = predicted_generation_time(4, eta, p_c, 1.0) / predicted_generation_time(
            3, eta, p_c, 1.0
        )
        assert r == pytest.approx(1.0 / ((1 - eta) ** 2 * p_c), rel=1e-12)
    assert predicted_generation_time(3, 0.5, 0.01, 1.0) == pytest.approx(3.2e7)
    with pytest.raises(DomainError):
        predicted_generation_time(3, 0.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        predicted_generation_time(3, 1.0, 0.5, 1.0)


def test_wilson_interval_brackets_the_rate():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_run_batch_is_deterministic():
    cfg = ProtocolConfig(n=3, p_e=0.02, eta=0.1, seed=99)
    a = run_batch(cfg, 200)
    b = run_batch(cfg, 200)
    assert a.to_dict() == b.to_dict()
    assert [(r.rounds, r.fidelity) for r in a.records] == [
        (r.rounds, r.fidelity) for r in b.records
    ]
    single_a = run_batch(cfg, 1)
    single_b = run_batch(cfg, 1)
    assert single_a.to_dict() == single_b.to_dict()


def test_run_batch_worker_count_does_not_change_results():
    cfg = ProtocolConfig(n=3, p_e=0.02, eta=0.0, seed=5)
    serial = run_batch(cfg, 240, workers=1)
    parallel = run_batch(cfg, 240, workers=2)
    assert serial.to_dict() == parallel.to_dict()


def test_p_c_hat_matches_first_order_rate():
    cfg = ProtocolConfig(n=3, p_e=0.01, eta=0.0, seed=31)
    report = run_batch(cfg, 10_000)
    lo, hi = report.confidence["p_c_hat_wilson95"]
    se = (hi - lo) / 4
    # pooled attempts are dominated by the entangling stage: ~ 2 p_e
    assert abs(report.p_c_hat - 2 * cfg.p_e) < max(3 * se, 0.03 * 2 * cfg.p_e)


def test_mean_rounds_against_restart_model():
    cfg = ProtocolConfig(n=3, p_e=0.01, eta=0.2, seed=17)
    report = run_batch(cfg, 20_000)
    qs = chain_stage_probabilities(cfg.n, cfg.p_e, cfg.eta)
    expected = expected_rounds_with_restart(qs)
    got = report.mean_time_s / cfg.t0
    se = report.confidence["mean_time_s_se"] / cfg.t0
    # the analytic model follows the genuine path only; multi-pair branches
    # shift the truth by O(p_e)
    assert abs(got - expected) < 0.08 * expected + 4 * se


def test_scaling_ratio_against_restart_model():
    eta, p_e = 0.3, 0.01
    means, ses, oracle = {}, {}, {}
    for n in (3, 4, 5):
        cfg = ProtocolConfig(n=n, p_e=p_e, eta=eta, seed=53)
        report = run_batch(cfg, 20_000)
        means[n] = report.mean_time_s
        ses[n] = report.confidence["mean_time_s_se"]
        oracle[n] = expected_rounds_with_restart(
            chain_stage_probabilities(n, p_e, eta)
        ) * cfg.t0
    for n in (4, 5):
        got = means[n] / means[n - 1]
        want = oracle[n] / oracle[n - 1]
        rel_se = math.sqrt(
            (ses[n] / means[n]) ** 2 + (ses[n - 1] / means[n - 1]) ** 2
        )
        assert abs(got / want - 1.0) < 0.06 + 3 * rel_se


def test_predicted_time_brackets_measured_time_with_loss():
    cfg = ProtocolConfig(n=3, p_e=0.01, eta=0.3, seed=77)
    report = run_batch(cfg, 20_000)
    ratio = report.mean_time_s / report.predicted_time_s
    assert 0.5 <= ratio <= 2.0


def test_stage_attempts_are_geometric():
    # trace mode records attempts-to-first-success per stage; the entangling
    # stage is an iid Bernoulli round, so the count is geometric
    cfg = ProtocolConfig(n=3, p_e=0.09, eta=0.0, seed=41)
    report = run_batch(cfg, 1200, trace=True)
    firsts = np.array(
        [r.first_success_attempts[0] for r in report.records if r.succeeded]
    )
    sim = ChainSimulator(cfg)
    p_stage = sim.round_distribution(0, sim.initial_state()).p_accept
    mean = firsts.mean()
    se = firsts.std(ddof=1) / math.sqrt(len(firsts))
    assert abs(mean - 1.0 / p_stage) < 3 * se
    # chi-square goodness of fit against Geometric(p_hat) at the 1% level
    p_hat = 1.0 / mean
    bins = int(np.quantile(firsts, 0.9))
    observed = [np.sum(firsts == k) for k in range(1, bins)]
    observed.append(np.sum(firsts >= bins))
    expected = [len(firsts) * p_hat * (1 - p_hat) ** (k - 1) for k in range(1, bins)]
    expected.append(len(firsts) * (1 - p_hat) ** (bins - 1))
    chi2, pvalue = stats.chisquare(observed, expected, ddof=1)
    assert pvalue > 0.01


def test_trace_and_fast_paths_agree():
    cfg = ProtocolConfig(n=3, p_e=0.05, eta=0.1, seed=61)
    fast = run_batch(cfg, 4000)
    slow = run_batch(cfg, 4000, trace=True)
    se = math.hypot(
        fast.confidence["mean_time_s_se"], slow.confidence["mean_time_s_se"]
    )
    assert abs(fast.mean_time_s - slow.mean_time_s) < 4 * se
    assert fast.fidelity_mean == pytest.approx(slow.fidelity_mean, abs=0.02)


def test_standard_errors_shrink_like_root_trials():
    cfg = ProtocolConfig(n=3, p_e=0.03, eta=0.1, seed=71)
    small = run_batch(cfg, 2000)
    large = run_batch(cfg, 8000)
    ratio = small.confidence["mean_time_s_se"] / large.confidence["mean_time_s_se"]
    assert ratio == pytest.approx(2.0, abs=0.5)


def test_vacuum_coefficient_trivial_zero():
    cfg = ProtocolConfig(
        n=3, p_e=0.02, eta=0.0, seed=81, second_order_pump=False
    )
    c_hat, mixture = estimate_vacuum_coefficient(cfg, 2000)
    assert c_hat == 0.0
    assert len(mixture.components) == 2


def test_vacuum_coefficient_identity_and_trend():
    cfgs = {
        eta: ProtocolConfig(n=3, p_e=0.03, eta=eta, seed=91) for eta in (0.1, 0.5)
    }
    layout = make_chain_layout(cfgs[0.1])
    c_low, mix_low = estimate_vacuum_coefficient(cfgs[0.1], 12_000, layout=layout)
    c_high, _ = estimate_vacuum_coefficient(cfgs[0.5], 12_000)
    assert c_low > 0.0
    assert c_high > c_low
    target = ideal_w_state(3, cfgs[0.1].phases, layout)
    assert fidelity_mixture(mix_low, target) == pytest.approx(
        1.0 / (1.0 + c_low), abs=1e-10
    )


def test_vacuum_coefficient_preconditions():
    cfg = ProtocolConfig(n=3, p_e=0.02, eta=0.1, seed=1)
    with pytest.raises(PreconditionError):
        estimate_vacuum_coefficient(cfg, 100)
    starved = ProtocolConfig(n=3, p_e=0.005, eta=0.1, seed=1, max_attempts=50)
    with pytest.raises(InsufficientDataError):
        estimate_vacuum_coefficient(starved, 1000)


def test_fidelity_mixture_examples():
    layout = make_chain_layout(ProtocolConfig(n=3, p_e=0.01))
    w = ideal_w_state(3, (0.0, 0.0, 0.0), layout)
    pure = NoisyStateMixture([(1.0, w)])
    assert fidelity_mixture(pure, w) == pytest.approx(1.0)
    vac = layout.vacuum()
    orthogonal = NoisyStateMixture([(1.0, vac)])
    assert fidelity_mixture(orthogonal, w) == 0.0
    with pytest.raises(PreconditionError):
        NoisyStateMixture([(0.7, w), (0.2, vac)])
    with pytest.raises(PreconditionError):
        fidelity_mixture(pure, create(w, layout.ensembles[0]))


def test_reported_probabilities_lie_in_range():
    cfg = ProtocolConfig(n=3, p_e=0.03, eta=0.2, seed=3)
    report = run_batch(cfg, 500)
    lo, hi = report.confidence["p_c_hat_wilson95"]
    for value in (report.p_c_hat, report.w_fraction, report.vacuum_fraction, lo, hi):
        assert 0.0 <= value <= 1.0
    assert 0.0 <= report.fidelity_mean <= 1.0


def test_epr_batch_reports_high_fidelity():
    cfg = ProtocolConfig(n=2, p_e=0.005, eta=0.0, seed=13)
    report = run_epr_batch(cfg, 2000)
    assert report.successes == 2000
    assert report.fidelity_mean >= 0.99
    assert report.p_c_hat == pytest.approx(2 * cfg.p_e, rel=0.05)

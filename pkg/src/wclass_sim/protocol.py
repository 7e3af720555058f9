"""Preparation steps and teleportation as repeat-until-success machines.

Two code paths cover every protocol state:

* **Operator algebra** (``epr_state``, ``w_prime_state``,
  ``w_state_by_operators``, ``ideal_w_state``, ``teleport_target_state``):
  exact, noise-free construction by literal application of the
  creation/annihilation products, with the chain intermediate kept
  unnormalized (its squared norm is ``4n - 6``).

* **Sampled engine** (:class:`ChainSimulator` and the step functions):
  Monte Carlo trajectories over pump, beam splitter, loss, and detection,
  conditioned on single clicks.  Round outcomes are enumerated exactly and
  memoized, so trials reduce to categorical draws plus geometric /
  multinomial fast-forwarding of the repeat-until-success loop; simulated
  attempt counts stay exact while wall time stays flat.

Conditioning conventions (all fixed here, once):

* A connect round accepts exactly one click.  A click on the antisymmetric
  beam-splitter port heralds the ``s_i+ - e^{i phi} s_j+`` combination; when
  the newly pumped ensemble ``j`` is fresh this is repaired by a known
  feed-forward pi shift on ``j``, so either detector yields the same state.
  In the final (maximizing) connect both ensembles are already occupied and
  the antisymmetric click cancels the ``s_1+ s_n+`` cross term outright, so
  that round accepts the symmetric port only.

* A repump (merge) round registers one excitation: the click probability is
  the Born weight of at least one retrieved photon surviving loss, and the
  conditioned state is the annihilation ``s_i`` applied once, which is what
  turns double occupation into ``2 s_i+`` and keeps the residual excitation
  in the ensemble.

* The teleport round retrieves the sender's four ensembles and accepts
  exactly one click behind each beam splitter, with per-pattern feed-forward
  phase fixes.  Non-number-resolving detectors cannot reject bunched
  two-photon events, so a small vacuum-faking branch survives; each outcome
  records whether the clicks were backed by exactly one photon per pair.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import (
    AttemptsExhaustedError,
    PreconditionError,
    ProtocolSequencingError,
)
from .fock import (
    DEFAULT_TRUNCATION_CAP,
    CollectiveModeModel,
    FockState,
    Mode,
    ModeRegistry,
    annihilate,
    count_excitations,
    create,
    fidelity,
    normalize,
    superpose,
)
from .optics import (
    BeamSplitterSpec,
    PumpSpec,
    apply_beam_splitter,
    apply_phase,
    detection_outcomes,
    loss_outcomes,
    pump_excite,
    repump_convert,
)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of one chain-preparation experiment.

    ``phases[i]`` is the channel phase of ensemble ``i+1`` relative to
    ensemble 1 (so ``phases[0]`` must be zero); ``t0`` is the duration of one
    light-atom interaction attempt.
    """

    n: int
    p_e: float
    eta: float = 0.0
    phases: Tuple[float, ...] | None = None
    n_a: float = math.inf
    finite_size: bool = False
    t0: float = 1e-6
    truncation_cap: int = DEFAULT_TRUNCATION_CAP
    max_attempts: int = 10**15
    seed: int = 0
    second_order_pump: bool = True

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("need at least two ensembles")
        if not 0.0 <= self.p_e < 1.0:
            raise ValueError("p_e must lie in [0, 1)")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        phases = self.phases
        if phases is None:
            phases = (0.0,) * self.n
        phases = tuple(float(x) for x in phases)
        if len(phases) != self.n:
            raise ValueError(f"need one phase per ensemble ({self.n})")
        if phases[0] != 0.0:
            raise ValueError("the reference phase phi_11 must be zero")
        object.__setattr__(self, "phases", phases)
        if self.t0 <= 0.0:
            raise ValueError("t0 must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.truncation_cap < 2:
            raise ValueError("truncation_cap below 2 cannot hold the protocol")


@dataclass(frozen=True)
class TeleportConfig:
    """Teleportation of ``alpha s_L+ + beta s_R+`` over two 3-party W states."""

    alpha: complex
    beta: complex
    base: ProtocolConfig

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1.0) > 1e-12:
            raise PreconditionError("|alpha|^2 + |beta|^2 must equal 1")
        if self.base.n != 3:
            raise PreconditionError("teleportation uses two 3-party W states")


@dataclass
class StepOutcome:
    """Result of one conditioned protocol step (or a whole chain build)."""

    succeeded: bool
    attempts: int
    state: FockState
    click_log: Tuple[Tuple[str, bool], ...]
    stage_attempts: Dict[str, int] | None = None
    info: dict | None = None


class Holder(enum.Enum):
    THIS_RECEIVER = "this-receiver"
    OTHER_RECEIVER = "other-receiver"


# ---------------------------------------------------------------------------
# registries / layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainLayout:
    """Mode bookkeeping for an ``n``-ensemble chain inside some registry."""

    registry: ModeRegistry
    ensembles: Tuple[Mode, ...]  # party i (1-based) -> ensembles[i - 1]
    stokes: Tuple[Mode, ...]
    phases: Tuple[float, ...]
    truncation_cap: int

    def ensemble(self, party: int) -> Mode:
        return self.ensembles[party - 1]

    def stokes_of(self, party: int) -> Mode:
        return self.stokes[party - 1]

    def phase(self, party: int) -> float:
        return self.phases[party - 1]

    def vacuum(self) -> FockState:
        return FockState.vacuum(self.registry, self.truncation_cap)


def make_chain_layout(cfg: ProtocolConfig) -> ChainLayout:
    """Standard registry: one atomic + one Stokes mode per ensemble."""
    reg = ModeRegistry(CollectiveModeModel(cfg.n_a, cfg.finite_size))
    ens = tuple(reg.add_atomic(f"ens{i}") for i in range(1, cfg.n + 1))
    stokes = tuple(reg.add_photonic(f"st{i}") for i in range(1, cfg.n + 1))
    reg.seal()
    return ChainLayout(reg, ens, stokes, cfg.phases, cfg.truncation_cap)


@dataclass(frozen=True)
class TeleportLayout:
    """Registry for the three-party teleportation: sender pair L/R plus the
    six W-chain ensembles, each with a retrieval photon mode."""

    registry: ModeRegistry
    mode_l: Mode
    mode_r: Mode
    ensembles: Tuple[Mode, ...]  # ensembles 1..6
    phot_l: Mode
    phot_r: Mode
    phot: Tuple[Mode, ...]  # retrieval/stokes mode per ensemble 1..6
    phases: Tuple[float, ...]  # phi_11..phi_13 (chain phases, shared)
    truncation_cap: int

    def chain_layout(self, first_party: int) -> ChainLayout:
        k = first_party - 1
        return ChainLayout(
            self.registry,
            self.ensembles[k : k + 3],
            self.phot[k : k + 3],
            self.phases,
            self.truncation_cap,
        )

    def vacuum(self) -> FockState:
        return FockState.vacuum(self.registry, self.truncation_cap)


def make_teleport_layout(tcfg: TeleportConfig) -> TeleportLayout:
    cfg = tcfg.base
    reg = ModeRegistry(CollectiveModeModel(cfg.n_a, cfg.finite_size))
    mode_l = reg.add_atomic("ensL")
    mode_r = reg.add_atomic("ensR")
    ens = tuple(reg.add_atomic(f"ens{i}") for i in range(1, 7))
    phot_l = reg.add_photonic("aL")
    phot_r = reg.add_photonic("aR")
    phot = tuple(reg.add_photonic(f"a{i}") for i in range(1, 7))
    reg.seal()
    return TeleportLayout(
        reg, mode_l, mode_r, ens, phot_l, phot_r, phot, cfg.phases, cfg.truncation_cap
    )


# ---------------------------------------------------------------------------
# exact operator-algebra constructions
# ---------------------------------------------------------------------------


def ideal_w_state(
    n: int, phases: Sequence[float] | None = None, layout: ChainLayout | None = None
) -> FockState:
    """``(1/sqrt(n)) sum_i e^{i phi_1i} s_i+ |vac>``, exactly."""
    if n < 1:
        raise ValueError("n must be positive")
    if phases is None:
        phases = (0.0,) * n
    if layout is None:
        layout = make_chain_layout(ProtocolConfig(n=max(n, 2), p_e=0.0))
    vac = layout.vacuum()
    parts = [create(vac, layout.ensemble(i)) for i in range(1, n + 1)]
    coeffs = [
        complex(math.cos(ph), math.sin(ph)) / math.sqrt(n) for ph in phases[:n]
    ]
    return superpose(coeffs, parts)


def epr_state(layout: ChainLayout, i: int, j: int, phase_ij: float) -> FockState:
    """Two-ensemble entangled state ``(s_i+ + e^{i phi} s_j+)/sqrt(2)|vac>``."""
    vac = layout.vacuum()
    e = complex(math.cos(phase_ij), math.sin(phase_ij))
    return superpose(
        [1.0 / math.sqrt(2), e / math.sqrt(2)],
        [create(vac, layout.ensemble(i)), create(vac, layout.ensemble(j))],
    )


def connect_applied(
    state: FockState, layout: ChainLayout, i: int, j: int, rel_phase: float
) -> FockState:
    """Apply the heralded connect operator ``(s_i+ + e^{i phi} s_j+)/sqrt(2)``."""
    e = complex(math.cos(rel_phase), math.sin(rel_phase))
    return superpose(
        [1.0 / math.sqrt(2), e / math.sqrt(2)],
        [create(state, layout.ensemble(i)), create(state, layout.ensemble(j))],
    )


def w_prime_state(
    n: int, phases: Sequence[float] | None = None, layout: ChainLayout | None = None
) -> FockState:
    """Unnormalized chain intermediate built by the literal operator product.

    ``prod_{i=2}^{n-1} s_i (s_i+ + e^{i phi_{i,i+1}} s_{i+1}+)`` applied to
    the two-party entangled pair; equals
    ``s_1+ + 2 sum_{i=2}^{n-1} e^{i phi_1i} s_i+ + e^{i phi_1n} s_n+`` on the
    vacuum, squared norm ``4n - 6``.
    """
    if n < 3:
        raise ValueError("the chain intermediate needs n >= 3")
    if phases is None:
        phases = (0.0,) * n
    if layout is None:
        layout = make_chain_layout(ProtocolConfig(n=n, p_e=0.0))
    vac = layout.vacuum()
    e12 = complex(math.cos(phases[1]), math.sin(phases[1]))
    state = superpose(
        [1.0, e12],
        [create(vac, layout.ensemble(1)), create(vac, layout.ensemble(2))],
    )
    for i in range(2, n):
        rel = phases[i] - phases[i - 1]
        e = complex(math.cos(rel), math.sin(rel))
        state = superpose(
            [1.0, e],
            [create(state, layout.ensemble(i)), create(state, layout.ensemble(i + 1))],
        )
        state = annihilate(state, layout.ensemble(i))
    return state


def w_state_by_operators(
    n: int, phases: Sequence[float] | None = None, layout: ChainLayout | None = None
) -> FockState:
    """Maximized W state via ``(1/(2 sqrt(n))) s_1 (s_1+ + e^{i phi_1n} s_n+)``
    acting on the chain intermediate."""
    if phases is None:
        phases = (0.0,) * n
    if layout is None:
        layout = make_chain_layout(ProtocolConfig(n=n, p_e=0.0))
    wp = w_prime_state(n, phases, layout)
    rel = phases[n - 1]
    e = complex(math.cos(rel), math.sin(rel))
    state = superpose(
        [1.0, e],
        [create(wp, layout.ensemble(1)), create(wp, layout.ensemble(n))],
    )
    state = annihilate(state, layout.ensemble(1))
    return superpose([1.0 / (2.0 * math.sqrt(n))], [state])


def phase_compensate(
    state: FockState,
    phases: Sequence[float],
    ensembles: Sequence[Mode] | None = None,
) -> FockState:
    """Undo the channel phases: apply ``-phi_1i`` on each atomic mode.

    With the phases measured, this turns the prepared state into the
    all-positive-coefficient W form (up to a global phase).
    """
    if ensembles is None:
        from .fock import ModeKind

        ensembles = [m for m in state.registry.modes if m.kind is ModeKind.ATOMIC]
    for mode, ph in zip(ensembles, phases):
        state = apply_phase(state, mode, -ph)
    return state


def teleport_target_state(tcfg: TeleportConfig, layout: TeleportLayout) -> FockState:
    """Normalized receiver state
    ``[e^{i phi_13}(a s_3+ + b s_6+) + e^{i phi_12}(a s_2+ + b s_5+)]/sqrt(2)``."""
    vac = layout.vacuum()
    e12 = complex(math.cos(layout.phases[1]), math.sin(layout.phases[1]))
    e13 = complex(math.cos(layout.phases[2]), math.sin(layout.phases[2]))
    a, b = tcfg.alpha, tcfg.beta
    parts = [
        create(vac, layout.ensembles[2]),  # ensemble 3
        create(vac, layout.ensembles[5]),  # ensemble 6
        create(vac, layout.ensembles[1]),  # ensemble 2
        create(vac, layout.ensembles[4]),  # ensemble 5
    ]
    coeffs = [e13 * a, e13 * b, e12 * a, e12 * b]
    return normalize(superpose(coeffs, parts))


# ---------------------------------------------------------------------------
# round enumeration (shared by sampling and the trajectory tree)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundBranch:
    prob: float  # joint probability of this accepted outcome
    state: FockState  # normalized conditioned state, corrections applied
    clicks: Tuple[Tuple[str, bool], ...]
    detected: Tuple[int, ...]  # photons absorbed per detector
    lost: int  # photons lost to the channel this round


@dataclass(frozen=True)
class RoundDistribution:
    p_accept: float
    branches: Tuple[RoundBranch, ...]


_PROB_FLOOR = 1e-18


def _dedup(branches: List[RoundBranch]) -> Tuple[RoundBranch, ...]:
    merged: Dict[tuple, RoundBranch] = {}
    for br in branches:
        key = (br.state.key(), br.clicks, br.detected, br.lost)
        old = merged.get(key)
        if old is None:
            merged[key] = br
        else:
            merged[key] = RoundBranch(
                old.prob + br.prob, old.state, old.clicks, old.detected, old.lost
            )
    return tuple(merged.values())


def connect_round(
    state: FockState,
    layout: ChainLayout,
    i: int,
    j: int,
    cfg: ProtocolConfig,
    detector_ids: Tuple[str, str] = ("D1", "D2"),
    symmetric_port_only: bool = False,
) -> RoundDistribution:
    """Enumerate one pump-interfere-detect round on parties ``i`` and ``j``.

    Accepts exactly one click.  A click on the antisymmetric port is folded
    back onto the symmetric outcome by a pi feed-forward on ensemble ``j``
    unless ``symmetric_port_only`` rejects it (the maximizing round).
    """
    if cfg.p_e <= 0.0:
        return RoundDistribution(0.0, ())
    st_i, st_j = layout.stokes_of(i), layout.stokes_of(j)
    psi = pump_excite(
        state,
        PumpSpec(layout.ensemble(i), st_i, cfg.p_e, layout.phase(i)),
        cfg.second_order_pump,
    )
    psi = pump_excite(
        psi,
        PumpSpec(layout.ensemble(j), st_j, cfg.p_e, layout.phase(j)),
        cfg.second_order_pump,
    )
    psi = normalize(apply_beam_splitter(psi, BeamSplitterSpec(st_i, st_j)))
    accepted: List[RoundBranch] = []
    for lb1 in loss_outcomes(psi, st_i, cfg.eta):
        if lb1.prob < _PROB_FLOOR:
            continue
        s1 = normalize(lb1.state)
        for lb2 in loss_outcomes(s1, st_j, cfg.eta):
            p_loss = lb1.prob * lb2.prob
            if p_loss < _PROB_FLOOR:
                continue
            s2 = normalize(lb2.state)
            for d1 in detection_outcomes(s2, st_i):
                if d1.prob * p_loss < _PROB_FLOOR:
                    continue
                s3 = normalize(d1.state)
                for d2 in detection_outcomes(s3, st_j):
                    prob = p_loss * d1.prob * d2.prob
                    if prob < _PROB_FLOOR:
                        continue
                    c1, c2 = d1.photons >= 1, d2.photons >= 1
                    if c1 == c2:
                        continue  # zero or two clicks: rejected
                    if c2 and symmetric_port_only:
                        continue
                    post = normalize(d2.state)
                    if c2:
                        post = apply_phase(post, layout.ensemble(j), math.pi)
                    accepted.append(
                        RoundBranch(
                            prob,
                            post,
                            ((detector_ids[0], c1), (detector_ids[1], c2)),
                            (d1.photons, d2.photons),
                            lb1.lost + lb2.lost,
                        )
                    )
    branches = _dedup(accepted)
    return RoundDistribution(sum(b.prob for b in branches), branches)


def merge_round(
    state: FockState,
    layout: ChainLayout,
    i: int,
    cfg: ProtocolConfig,
    detector_id: str = "D3",
) -> RoundDistribution:
    """Enumerate one repump-readout round on party ``i``.

    Registering one excitation applies ``s_i`` once; the click probability is
    the Born weight of at least one retrieved photon reaching the detector,
    ``sum_k P(n_i = k) (1 - eta^k)``.
    """
    mode = layout.ensemble(i)
    dist = count_excitations(state, [mode])
    p_click = sum(p * (1.0 - cfg.eta**k) for k, p in dist.items() if k >= 1)
    if p_click <= 0.0:
        return RoundDistribution(0.0, ())
    post = normalize(annihilate(state, mode))
    branch = RoundBranch(p_click, post, ((detector_id, True),), (1,), 0)
    return RoundDistribution(p_click, (branch,))


def teleport_round(
    state: FockState, layout: TeleportLayout, cfg: ProtocolConfig
) -> RoundDistribution:
    """Enumerate the synchronous four-ensemble retrieval of the teleport step.

    Accepts exactly one click behind each beam splitter (one in D1/D2, one in
    D3/D4).  Feed-forward: a D2 click flips the sign of the component carried
    by ensembles 5 and 6, a D4 click the one carried by 2 and 3.  ``detected``
    records the true photon numbers so callers can tell bunched two-photon
    accepts from correct single-photon ones.
    """
    psi = repump_convert(state, layout.mode_l, layout.phot_l)
    psi = repump_convert(psi, layout.ensembles[0], layout.phot[0])
    psi = repump_convert(psi, layout.mode_r, layout.phot_r)
    psi = repump_convert(psi, layout.ensembles[3], layout.phot[3])
    psi = apply_beam_splitter(psi, BeamSplitterSpec(layout.phot_l, layout.phot[0]))
    psi = apply_beam_splitter(psi, BeamSplitterSpec(layout.phot_r, layout.phot[3]))
    psi = normalize(psi)
    ports = (layout.phot_l, layout.phot[0], layout.phot_r, layout.phot[3])
    names = ("D1", "D2", "D3", "D4")
    accepted: List[RoundBranch] = []

    def walk(k: int, s: FockState, prob: float, lost: int, ks: Tuple[int, ...]):
        if prob < _PROB_FLOOR:
            return
        if k == len(ports):
            clicks = tuple(x >= 1 for x in ks)
            if sum(clicks[:2]) != 1 or sum(clicks[2:]) != 1:
                return
            post = normalize(s)
            if clicks[1]:  # D2: photon came through the ensemble-1 port
                post = apply_phase(post, layout.ensembles[4], math.pi)
                post = apply_phase(post, layout.ensembles[5], math.pi)
            if clicks[3]:  # D4: photon came through the ensemble-4 port
                post = apply_phase(post, layout.ensembles[1], math.pi)
                post = apply_phase(post, layout.ensembles[2], math.pi)
            accepted.append(
                RoundBranch(
                    prob,
                    post,
                    tuple(zip(names, clicks)),
                    ks,
                    lost,
                )
            )
            return
        for lb in loss_outcomes(s, ports[k], cfg.eta):
            if lb.prob * prob < _PROB_FLOOR:
                continue
            sl = normalize(lb.state)
            for db in detection_outcomes(sl, ports[k]):
                walk(
                    k + 1,
                    normalize(db.state),
                    prob * lb.prob * db.prob,
                    lost + lb.lost,
                    ks + (db.photons,),
                )

    walk(0, psi, 1.0, 0, ())
    branches = _dedup(accepted)
    return RoundDistribution(sum(b.prob for b in branches), branches)


def correct_teleport_clicks(branch: RoundBranch) -> bool:
    """Whether the accepted clicks were backed by one photon per pair."""
    return (
        sum(branch.detected[:2]) == 1
        and sum(branch.detected[2:]) == 1
        and branch.lost == 0
    )


# ---------------------------------------------------------------------------
# chain simulator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageSpec:
    label: str
    kind: str  # "connect" or "merge"
    i: int
    j: int | None
    detectors: Tuple[str, ...]
    symmetric_port_only: bool = False


def chain_stages(n: int) -> Tuple[StageSpec, ...]:
    """EPR, then connect/merge pairs, then the maximizing pair."""
    if n < 3:
        raise PreconditionError("the W chain needs n >= 3 ensembles")
    stages = [StageSpec("epr(1,2)", "connect", 1, 2, ("D1", "D2"))]
    for i in range(2, n):
        stages.append(StageSpec(f"connect({i},{i + 1})", "connect", i, i + 1, ("D1", "D2")))
        stages.append(StageSpec(f"merge({i})", "merge", i, None, ("D3",)))
    stages.append(
        StageSpec(f"connect(1,{n})", "connect", 1, n, ("D4", "D5"), True)
    )
    stages.append(StageSpec("merge(1)", "merge", 1, None, ("D6",)))
    return tuple(stages)


@dataclass
class ChainTrialResult:
    succeeded: bool
    rounds: int
    stage_attempts: np.ndarray
    stage_successes: np.ndarray
    final_state: FockState | None
    click_log: Tuple[Tuple[str, bool], ...]
    first_success_attempts: Tuple[int, ...] | None = None


class ChainSimulator:
    """Repeat-until-success builder of the ``n``-party W state.

    Any failed conditioning restarts the whole chain from the EPR step, so a
    trial is a sequence of independent passes.  Round-outcome distributions
    and pass-completion probabilities are memoized per reached state; the
    default fast path samples the number of passes geometrically, allots the
    failed passes to their failure stages multinomially, and walks one
    success-conditioned pass for the final state.  ``trace=True`` instead
    simulates round by round (slower, used for distributional checks).
    """

    def __init__(self, cfg: ProtocolConfig, layout: ChainLayout | None = None):
        self.cfg = cfg
        self.layout = layout or make_chain_layout(cfg)
        self.stages = chain_stages(cfg.n)
        self._rounds: Dict[tuple, RoundDistribution] = {}
        self._completion: Dict[tuple, Tuple[float, Tuple[float, ...]]] = {}

    # -- exact per-round machinery ----------------------------------------

    def initial_state(self) -> FockState:
        return self.layout.vacuum()

    def round_distribution(self, stage_idx: int, state: FockState) -> RoundDistribution:
        spec = self.stages[stage_idx]
        key = (stage_idx, state.key())
        dist = self._rounds.get(key)
        if dist is None:
            if spec.kind == "connect":
                dist = connect_round(
                    state,
                    self.layout,
                    spec.i,
                    spec.j,
                    self.cfg,
                    spec.detectors,
                    spec.symmetric_port_only,
                )
            else:
                dist = merge_round(state, self.layout, spec.i, self.cfg, spec.detectors[0])
            self._rounds[key] = dist
        return dist

    def completion(self, stage_idx: int, state: FockState) -> Tuple[float, Tuple[float, ...]]:
        """``(P(pass completes from here), P(pass fails at stage k))``."""
        if stage_idx == len(self.stages):
            return 1.0, (0.0,) * len(self.stages)
        key = (stage_idx, state.key())
        cached = self._completion.get(key)
        if cached is not None:
            return cached
        dist = self.round_distribution(stage_idx, state)
        fail = [0.0] * len(self.stages)
        fail[stage_idx] = 1.0 - dist.p_accept
        p_complete = 0.0
        for br in dist.branches:
            pc, fv = self.completion(stage_idx + 1, br.state)
            p_complete += br.prob * pc
            for k, x in enumerate(fv):
                fail[k] += br.prob * x
        result = (p_complete, tuple(fail))
        self._completion[key] = result
        return result

    # -- trial sampling ----------------------------------------------------

    def _sample_success_pass(
        self, rng: np.random.Generator, state: FockState
    ) -> Tuple[FockState, Tuple[Tuple[str, bool], ...]]:
        log: List[Tuple[str, bool]] = []
        for idx in range(len(self.stages)):
            dist = self.round_distribution(idx, state)
            weights = [
                br.prob * self.completion(idx + 1, br.state)[0] for br in dist.branches
            ]
            total = sum(weights)
            u = rng.random() * total
            acc = 0.0
            chosen = dist.branches[-1]
            for br, w in zip(dist.branches, weights):
                acc += w
                if u < acc:
                    chosen = br
                    break
            log.extend(chosen.clicks)
            state = chosen.state
        return state, tuple(log)

    def run_trial(
        self,
        rng: np.random.Generator,
        initial_state: FockState | None = None,
        trace: bool = False,
    ) -> ChainTrialResult:
        state0 = initial_state if initial_state is not None else self.initial_state()
        if trace:
            return self._run_trial_trace(rng, state0)
        n_stages = len(self.stages)
        budget = self.cfg.max_attempts
        p_pass, fail_vec = self.completion(0, state0)
        attempts = np.zeros(n_stages, dtype=np.int64)
        if p_pass <= 0.0:
            # No completing path exists; the budget burns down on the
            # reachable prefix of the chain.
            per_pass = sum((k + 1) * f for k, f in enumerate(fail_vec))
            n_pass = max(1, int(budget / max(per_pass, 1.0)))
            counts = rng.multinomial(n_pass, np.asarray(fail_vec))
            for k in range(n_stages):
                attempts[k] = counts[k:].sum()
            return ChainTrialResult(
                False, budget, attempts, np.zeros(n_stages, dtype=np.int64), None, ()
            )
        passes = 1 if p_pass >= 1.0 else int(rng.geometric(p_pass))
        fails = passes - 1
        counts = np.zeros(n_stages, dtype=np.int64)
        if fails > 0:
            cond = np.asarray(fail_vec) / (1.0 - p_pass)
            cond = np.clip(cond, 0.0, None)
            cond[-1] = max(0.0, 1.0 - cond[:-1].sum())
            counts = rng.multinomial(fails, cond)
        suffix = counts[::-1].cumsum()[::-1]
        attempts = suffix + 1
        rounds = int(np.arange(1, n_stages + 1, dtype=np.int64) @ counts) + n_stages
        if rounds > budget:
            return ChainTrialResult(
                False,
                budget,
                attempts,
                attempts - counts,
                None,
                (),
            )
        final, log = self._sample_success_pass(rng, state0)
        return ChainTrialResult(
            True, rounds, attempts, attempts - counts, final, log
        )

    def _run_trial_trace(
        self, rng: np.random.Generator, state0: FockState
    ) -> ChainTrialResult:
        n_stages = len(self.stages)
        attempts = np.zeros(n_stages, dtype=np.int64)
        successes = np.zeros(n_stages, dtype=np.int64)
        first: List[int | None] = [None] * n_stages
        state = state0
        idx = 0
        rounds = 0
        log: List[Tuple[str, bool]] = []
        while True:
            if rounds >= self.cfg.max_attempts:
                return ChainTrialResult(
                    False, rounds, attempts, successes, None, tuple(log)
                )
            dist = self.round_distribution(idx, state)
            rounds += 1
            attempts[idx] += 1
            u = rng.random()
            if u < dist.p_accept:
                acc = 0.0
                chosen = dist.branches[-1]
                for br in dist.branches:
                    acc += br.prob
                    if u < acc:
                        chosen = br
                        break
                successes[idx] += 1
                if first[idx] is None:
                    first[idx] = int(attempts[idx])
                if idx == 0:
                    log = list(chosen.clicks)
                else:
                    log.extend(chosen.clicks)
                state = chosen.state
                idx += 1
                if idx == n_stages:
                    return ChainTrialResult(
                        True,
                        rounds,
                        attempts,
                        successes,
                        state,
                        tuple(log),
                        tuple(x if x is not None else 0 for x in first),
                    )
            else:
                idx = 0
                state = state0


# ---------------------------------------------------------------------------
# public protocol steps
# ---------------------------------------------------------------------------


def _sample_branch(
    dist: RoundDistribution, rng: np.random.Generator
) -> RoundBranch | None:
    """One conditioned round: returns the accepted branch or None on failure."""
    u = rng.random()
    if u >= dist.p_accept:
        return None
    acc = 0.0
    for br in dist.branches:
        acc += br.prob
        if u < acc:
            return br
    return dist.branches[-1]


def prepare_epr(
    cfg: ProtocolConfig,
    i: int,
    j: int,
    rng: np.random.Generator,
    layout: ChainLayout | None = None,
) -> StepOutcome:
    """Entangle ensembles ``i`` and ``j`` from the ground state.

    Pumps both, interferes the Stokes light, and conditions on exactly one
    click; failed attempts reset to the ground state and repeat, up to
    ``max_attempts``.
    """
    layout = layout or make_chain_layout(cfg)
    dist = connect_round(layout.vacuum(), layout, i, j, cfg, ("D1", "D2"))
    if dist.p_accept <= 0.0:
        raise AttemptsExhaustedError(
            "entangling round can never click (p_e = 0?)",
            stage=f"epr({i},{j})",
            attempts=cfg.max_attempts,
        )
    attempts = int(rng.geometric(dist.p_accept))
    if attempts > cfg.max_attempts:
        raise AttemptsExhaustedError(
            f"no click within {cfg.max_attempts} attempts",
            stage=f"epr({i},{j})",
            attempts=cfg.max_attempts,
        )
    u = rng.random() * dist.p_accept
    acc = 0.0
    chosen = dist.branches[-1]
    for br in dist.branches:
        acc += br.prob
        if u < acc:
            chosen = br
            break
    return StepOutcome(True, attempts, chosen.state, chosen.clicks)


def connect_step(
    cfg: ProtocolConfig,
    state: FockState,
    i: int,
    j: int,
    rng: np.random.Generator,
    layout: ChainLayout | None = None,
) -> StepOutcome:
    """One connect round on an existing state (single attempt).

    On failure the protocol prescribes repumping all involved ensembles to
    ground and restarting from the EPR step; that orchestration lives in
    :func:`build_w_chain`, so here a failed round reports ``succeeded=False``
    and hands back the input for the caller to discard.
    """
    layout = layout or make_chain_layout(cfg)
    dist = connect_round(state, layout, i, j, cfg, ("D1", "D2"))
    br = _sample_branch(dist, rng)
    if br is None:
        return StepOutcome(False, 1, state, ())
    return StepOutcome(True, 1, br.state, br.clicks)


def merge_repump(
    cfg: ProtocolConfig,
    state: FockState,
    i: int,
    rng: np.random.Generator,
    layout: ChainLayout | None = None,
    detector_id: str = "D3",
) -> StepOutcome:
    """One repump-readout round on ensemble ``i`` (single attempt)."""
    layout = layout or make_chain_layout(cfg)
    dist = merge_round(state, layout, i, cfg, detector_id)
    br = _sample_branch(dist, rng)
    if br is None:
        return StepOutcome(False, 1, state, ((detector_id, False),))
    return StepOutcome(True, 1, br.state, br.clicks)


def maximize_w(
    cfg: ProtocolConfig,
    state: FockState,
    rng: np.random.Generator,
    layout: ChainLayout | None = None,
) -> StepOutcome:
    """Turn the chain intermediate into the maximally entangled W state.

    Connects ensembles 1 and ``n`` (symmetric-port click, D4), then repumps
    ensemble 1 (D6).  Raises :class:`ProtocolSequencingError` when the input
    already looks like a maximized W state, which would mean the chain was
    sequenced wrongly.
    """
    layout = layout or make_chain_layout(cfg)
    n = cfg.n
    target_w = ideal_w_state(n, cfg.phases, layout)
    target_wp = normalize(w_prime_state(n, cfg.phases, layout))
    if not state.is_zero():
        if fidelity(state, target_w) > fidelity(state, target_wp):
            raise ProtocolSequencingError(
                "input is already W-like; the maximizing step expects the "
                "unmaximized chain state"
            )
    dist1 = connect_round(
        state, layout, 1, n, cfg, ("D4", "D5"), symmetric_port_only=True
    )
    br1 = _sample_branch(dist1, rng)
    if br1 is None:
        return StepOutcome(False, 1, state, ())
    dist2 = merge_round(br1.state, layout, 1, cfg, "D6")
    br2 = _sample_branch(dist2, rng)
    if br2 is None:
        return StepOutcome(False, 2, state, br1.clicks)
    return StepOutcome(True, 2, br2.state, br1.clicks + br2.clicks)


def build_w_chain(
    cfg: ProtocolConfig,
    rng: np.random.Generator,
    layout: ChainLayout | None = None,
    trace: bool = False,
) -> StepOutcome:
    """Build the ``n``-party W state, restarting the chain on any failure."""
    sim = ChainSimulator(cfg, layout)
    result = sim.run_trial(rng, trace=trace)
    stage_attempts = {
        spec.label: int(a) for spec, a in zip(sim.stages, result.stage_attempts)
    }
    if not result.succeeded:
        worst = max(stage_attempts, key=stage_attempts.get)
        raise AttemptsExhaustedError(
            f"chain build exhausted {cfg.max_attempts} attempts "
            f"(most spent at {worst})",
            stage=worst,
            attempts=cfg.max_attempts,
        )
    return StepOutcome(
        True,
        result.rounds,
        result.final_state,
        result.click_log,
        stage_attempts=stage_attempts,
    )


# ---------------------------------------------------------------------------
# teleportation
# ---------------------------------------------------------------------------


def _unknown_prepared(
    tcfg: TeleportConfig, layout: TeleportLayout, joint: FockState
) -> FockState:
    return normalize(
        superpose(
            [tcfg.alpha, tcfg.beta],
            [create(joint, layout.mode_l), create(joint, layout.mode_r)],
        )
    )


def exact_double_w_state(tcfg: TeleportConfig, layout: TeleportLayout) -> FockState:
    """Operator-algebra ``|W>_123 x |W>_456`` on the teleport registry."""
    w123 = w_state_by_operators(3, tcfg.base.phases, layout.chain_layout(1))
    return superpose(
        [
            complex(math.cos(ph), math.sin(ph)) / math.sqrt(3)
            for ph in tcfg.base.phases
        ],
        [create(w123, layout.ensembles[k]) for k in (3, 4, 5)],
    )


def teleport_from_states(
    tcfg: TeleportConfig,
    rng: np.random.Generator,
    layout: TeleportLayout,
    joint_w_state: FockState,
) -> StepOutcome:
    """One teleport round given already-prepared W states (single attempt)."""
    psi = _unknown_prepared(tcfg, layout, joint_w_state)
    dist = teleport_round(psi, layout, tcfg.base)
    br = _sample_branch(dist, rng)
    if br is None:
        return StepOutcome(False, 1, psi, ())
    return StepOutcome(
        True,
        1,
        br.state,
        br.clicks,
        info={"correct_clicks": correct_teleport_clicks(br)},
    )


def teleport(
    tcfg: TeleportConfig,
    rng: np.random.Generator,
    layout: TeleportLayout | None = None,
) -> StepOutcome:
    """Full pipeline: build both W states, retrieve, condition on two clicks.

    A failed conditioning round discards everything and re-prepares both W
    states, as the protocol prescribes; the attempt count accumulates across
    restarts.
    """
    layout = layout or make_teleport_layout(tcfg)
    cfg = tcfg.base
    sim123 = ChainSimulator(cfg, layout.chain_layout(1))
    sim456 = ChainSimulator(cfg, layout.chain_layout(4))
    budget = cfg.max_attempts
    rounds = 0
    while True:
        r1 = sim123.run_trial(rng)
        rounds += r1.rounds
        if not r1.succeeded or rounds >= budget:
            raise AttemptsExhaustedError(
                "W preparation exhausted the attempt budget",
                stage="w123",
                attempts=min(rounds, budget),
            )
        r2 = sim456.run_trial(rng, initial_state=r1.final_state)
        rounds += r2.rounds
        if not r2.succeeded or rounds >= budget:
            raise AttemptsExhaustedError(
                "W preparation exhausted the attempt budget",
                stage="w456",
                attempts=min(rounds, budget),
            )
        psi = _unknown_prepared(tcfg, layout, r2.final_state)
        dist = teleport_round(psi, layout, cfg)
        rounds += 1
        br = _sample_branch(dist, rng)
        if br is not None:
            return StepOutcome(
                True,
                rounds,
                br.state,
                br.clicks,
                info={"correct_clicks": correct_teleport_clicks(br)},
            )
        if rounds >= budget:
            raise AttemptsExhaustedError(
                "teleport conditioning exhausted the attempt budget",
                stage="teleport",
                attempts=budget,
            )


def receiver_localize(
    state: FockState,
    receiver_modes: Iterable[Mode],
    rng: np.random.Generator,
) -> Tuple[Holder, FockState]:
    """Projective measurement of the excitation number on one receiver's pair.

    Outcome 1 means this receiver holds the transmitted qubit and the
    residual is their pair's state; outcome 0 hands it to the other receiver.
    Inputs must carry exactly one excitation in total (vacuum components are
    flagged as a precondition violation).
    """
    modes = list(receiver_modes)
    for occ, _ in state.items():
        if sum(occ) != 1:
            raise PreconditionError(
                "localization needs a single shared excitation; the input has "
                "a vacuum or multi-excitation component"
            )
    idx = [state.registry.check_mode(m).index for m in modes]
    total = state.norm_squared()
    p_here = (
        sum(
            abs(a) ** 2
            for occ, a in state.items()
            if sum(occ[i] for i in idx) == 1
        )
        / total
    )
    here = rng.random() < p_here
    keep = {
        occ: a
        for occ, a in state.items()
        if (sum(occ[i] for i in idx) == 1) == here
    }
    residual = normalize(state.replace_terms(keep))
    return (Holder.THIS_RECEIVER if here else Holder.OTHER_RECEIVER, residual)

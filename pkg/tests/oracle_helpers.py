"""Independent oracles the tests check the library against.

Everything here is written directly from the closed forms: literal
amplitude dictionaries for the protocol states, a polynomial beam-splitter
expansion, the two-mode-squeezer power series, and the repeat-until-success
expected-round formula over analytically derived stage probabilities.
None of it calls back into the code paths it verifies.
"""

from __future__ import annotations

import cmath
import math

from wclass_sim.fock import FockState


# ---------------------------------------------------------------------------
# literal protocol states (amplitudes over atomic-party occupation)
# ---------------------------------------------------------------------------


def e(phi: float) -> complex:
    return cmath.exp(1j * phi)


def w_m_amplitudes(n: int, phases) -> dict:
    """Maximally entangled n-party state: amplitude e^{i phi_1i}/sqrt(n) on
    the single excitation of party i."""
    out = {}
    for i in range(n):
        occ = tuple(1 if k == i else 0 for k in range(n))
        out[occ] = e(phases[i]) / math.sqrt(n)
    return out


def w_prime_amplitudes(n: int, phases) -> dict:
    """Unnormalized chain intermediate: 1, 2 e^{i phi_1i} (middle), e^{i phi_1n}."""
    out = {}
    for i in range(n):
        occ = tuple(1 if k == i else 0 for k in range(n))
        if i == 0:
            out[occ] = 1.0 + 0j
        elif i == n - 1:
            out[occ] = e(phases[i])
        else:
            out[occ] = 2.0 * e(phases[i])
    return out


def epr_amplitudes(n: int, i: int, j: int, phi_ij: float) -> dict:
    """(s_i+ + e^{i phi} s_j+)/sqrt(2) over n parties (1-based i, j)."""
    occ_i = tuple(1 if k == i - 1 else 0 for k in range(n))
    occ_j = tuple(1 if k == j - 1 else 0 for k in range(n))
    return {occ_i: 1 / math.sqrt(2), occ_j: e(phi_ij) / math.sqrt(2)}


def step2_amplitudes(phi12: float, phi23: float) -> dict:
    """(s_2+ + e^{i phi_23} s_3+)/sqrt(2) applied to the 1-2 pair: the
    three-party state after the second step, normalized factor-by-factor."""
    return {
        (1, 1, 0): 0.5 + 0j,
        (0, 2, 0): math.sqrt(2) * e(phi12) / 2,
        (1, 0, 1): e(phi23) / 2,
        (0, 1, 1): e(phi12 + phi23) / 2,
    }


def merged_amplitudes(phi12: float, phi13: float) -> dict:
    """s_2 applied to the step-2 state (unnormalized): 1, 2e^{i phi12}, e^{i phi13}."""
    return {
        (1, 0, 0): 1.0 + 0j,
        (0, 1, 0): 2.0 * e(phi12),
        (0, 0, 1): e(phi13),
    }


def receiver_amplitudes(alpha: complex, beta: complex, phi12: float, phi13: float) -> dict:
    """Normalized post-teleport state on receiver parties (2, 3, 5, 6)."""
    r = 1 / math.sqrt(2)
    return {
        (1, 0, 0, 0): e(phi12) * alpha * r,  # party 2
        (0, 1, 0, 0): e(phi13) * alpha * r,  # party 3
        (0, 0, 1, 0): e(phi12) * beta * r,  # party 5
        (0, 0, 0, 1): e(phi13) * beta * r,  # party 6
    }


def as_state(layout, amplitudes: dict, parties=None) -> FockState:
    """Embed party-occupation amplitudes into the layout's full registry."""
    modes = layout.ensembles if parties is None else [
        layout.ensembles[p - 1] for p in parties
    ]
    width = layout.registry.n_modes
    terms = {}
    for occ, amp in amplitudes.items():
        full = [0] * width
        for mode, x in zip(modes, occ):
            full[mode.index] = x
        terms[tuple(full)] = amp
    return FockState(layout.registry, terms, layout.truncation_cap)


# ---------------------------------------------------------------------------
# beam splitter via explicit polynomial multiplication
# ---------------------------------------------------------------------------


def bs_output_amplitudes(na: int, nb: int) -> dict:
    """|na, nb> through a 50/50 splitter: expand (x+y)^na (x-y)^nb.

    Returns {(p, q): amplitude} with x = a+, y = b+ monomials multiplied out
    one factor at a time.
    """
    poly = {(0, 0): 1.0}
    for _ in range(na):
        nxt = {}
        for (j, k), c in poly.items():
            nxt[(j + 1, k)] = nxt.get((j + 1, k), 0.0) + c
            nxt[(j, k + 1)] = nxt.get((j, k + 1), 0.0) + c
        poly = nxt
    for _ in range(nb):
        nxt = {}
        for (j, k), c in poly.items():
            nxt[(j + 1, k)] = nxt.get((j + 1, k), 0.0) + c
            nxt[(j, k + 1)] = nxt.get((j, k + 1), 0.0) - c
        poly = nxt
    scale = 1.0 / math.sqrt(2.0 ** (na + nb) * math.factorial(na) * math.factorial(nb))
    return {
        (p, q): c * scale * math.sqrt(math.factorial(p) * math.factorial(q))
        for (p, q), c in poly.items()
        if c != 0.0
    }


def squeezer_amplitude(p_e: float, phi: float, pairs: int) -> complex:
    """|n, n> amplitude of exp(lam S+A+)|0,0> with lam = sqrt(p_e) e^{i phi}.

    (lam^n / n!) (S+A+)^n |0,0> = lam^n |n,n> since (a+)^n|0> = sqrt(n!)|n>.
    """
    lam = math.sqrt(p_e) * e(phi)
    return lam**pairs


def binomial_pmf(n: int, k: int, p: float) -> float:
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


# ---------------------------------------------------------------------------
# analytic repeat-until-success timing model
# ---------------------------------------------------------------------------


def _norm2(d: dict) -> float:
    return sum(abs(a) ** 2 for a in d.values())


def _normalized(d: dict) -> dict:
    s = math.sqrt(_norm2(d))
    return {k: a / s for k, a in d.items()}


def _created(d: dict, i: int) -> dict:
    out = {}
    for occ, a in d.items():
        n = occ[i]
        new = occ[:i] + (n + 1,) + occ[i + 1 :]
        out[new] = out.get(new, 0j) + a * math.sqrt(n + 1)
    return out


def _annihilated(d: dict, i: int) -> dict:
    out = {}
    for occ, a in d.items():
        n = occ[i]
        if n == 0:
            continue
        new = occ[:i] + (n - 1,) + occ[i + 1 :]
        out[new] = out.get(new, 0j) + a * math.sqrt(n)
    return out


def _summed(d1: dict, d2: dict) -> dict:
    out = dict(d1)
    for k, a in d2.items():
        out[k] = out.get(k, 0j) + a
    return out


def _mean_n_plus_1(d: dict, i: int) -> float:
    return sum(abs(a) ** 2 * (occ[i] + 1) for occ, a in d.items()) / _norm2(d)


def _merge_prob(d: dict, i: int, eta: float) -> float:
    out = 0.0
    norm = _norm2(d)
    for occ, a in d.items():
        if occ[i] >= 1:
            out += abs(a) ** 2 / norm * (1.0 - eta ** occ[i])
    return out


def chain_stage_probabilities(n: int, p_e: float, eta: float) -> list:
    """First-order stage success probabilities along the genuine path.

    The connect click rate carries the bosonic enhancement of the pumped
    modes, p (1-eta) (E[n_i + 1] + E[n_j + 1]); the maximizing connect keeps
    only the symmetric port; a merge clicks when at least one of the
    retrieved photons survives."""
    t = 1.0 - eta
    zero = (0,) * n
    state = {zero: 1.0 + 0j}
    qs = [2.0 * p_e * t]
    state = _normalized(_summed(_created(state, 0), _created(state, 1)))
    for i in range(2, n):  # parties i, i+1 -> indices i-1, i
        qs.append(p_e * t * (_mean_n_plus_1(state, i - 1) + _mean_n_plus_1(state, i)))
        state = _normalized(_summed(_created(state, i - 1), _created(state, i)))
        qs.append(_merge_prob(state, i - 1, eta))
        state = _normalized(_annihilated(state, i - 1))
    plus = _summed(_created(state, 0), _created(state, n - 1))
    qs.append(p_e * t * _norm2(plus) / 2.0)
    state = _normalized(plus)
    qs.append(_merge_prob(state, 0, eta))
    return qs


def expected_rounds_with_restart(qs) -> float:
    """Mean rounds to finish a chain that restarts at stage 1 on any failure:
    (sum_k prod_{j<k} q_j) / prod_j q_j."""
    numerator = 0.0
    prefix = 1.0
    for q in qs:
        numerator += prefix
        prefix *= q
    return numerator / prefix

"""Walk through the operator algebra behind the protocol states.

Builds every named state with bare creation/annihilation operators and
prints the amplitudes, norms, and identities the rest of the package
relies on.
"""

from wclass_sim import (
    CollectiveModeModel,
    FockState,
    ModeRegistry,
    annihilate,
    create,
    debug_serialize,
    inner_product,
)
from wclass_sim.protocol import (
    ProtocolConfig,
    epr_state,
    ideal_w_state,
    make_chain_layout,
    phase_compensate,
    w_prime_state,
    w_state_by_operators,
)

# -- the bosonic identity that powers the repump step -----------------------

reg = ModeRegistry()
s = reg.add_atomic("s")
reg.seal()
vac = FockState.vacuum(reg)

print("s s+ s+ |vac> =", annihilate(create(create(vac, s), s), s))
print("  (double occupation collapses to twice the single excitation)")

reg_f = ModeRegistry(CollectiveModeModel(n_a=1000, finite_size_enabled=True))
sf = reg_f.add_atomic("s")
reg_f.seal()
finite = annihilate(create(create(FockState.vacuum(reg_f), sf), sf), sf)
print("with N_a = 1000 atoms:", finite, "-> coefficient 2 (N_a - 1)/N_a")

# -- two ensembles: the entangled pair ---------------------------------------

cfg = ProtocolConfig(n=3, p_e=0.01, phases=(0.0, 0.35, -0.6))
layout = make_chain_layout(cfg)
pair = epr_state(layout, 1, 2, cfg.phases[1])
print("\nentangled pair of ensembles 1, 2 (phase 0.35):")
print(debug_serialize(pair))

# -- the chain intermediate and its norm -------------------------------------

print("\nchain intermediate (unnormalized) and its squared norm 4n - 6:")
for n in range(3, 9):
    lay = make_chain_layout(ProtocolConfig(n=n, p_e=0.01))
    wp = w_prime_state(n, (0.0,) * n, lay)
    print(f"  n={n}:  <W'|W'> = {inner_product(wp, wp).real:.12f}")

# -- maximization: the 1/(2 sqrt n) step -------------------------------------

w3 = w_state_by_operators(3, cfg.phases, layout)
ideal = ideal_w_state(3, cfg.phases, layout)
overlap = abs(inner_product(w3, ideal)) ** 2
print(f"\nmaximized 3-party state: norm {w3.norm():.12f}, overlap with the")
print(f"ideal W state {overlap:.12f}")

# -- phase compensation -------------------------------------------------------

flat = phase_compensate(w3, cfg.phases, layout.ensembles)
amps = sorted((amp for _, amp in flat.items()), key=lambda a: a.real)
print("\nafter the compensating phase shifters the coefficients are real")
print("and equal:", [f"{a.real:.6f}{a.imag:+.1e}j" for a in amps])

"""Amplified epsilon for common frequency oracles, with matching lower bounds.

For each local budget we report the shuffled eps at delta = 1e-6 and n = 10^4.
The upper value is certified (round-up lattice); the lower value comes from
one concrete neighbouring dataset, so the true optimum lies in between.
"""

from shuffle_amp import Kind, RandomizerSpec, Single, curve
from shuffle_amp.mechanisms import lower_family, upper_family

n, delta = 10_000, 1e-6
eps0_values = [1.0, 2.0, 4.0]
mechanisms = {
    "10-RR": Single(RandomizerSpec(Kind.KRR, 1.0, 10)),
    "BLH": Single(RandomizerSpec(Kind.BLH, 1.0)),
    "OUE": Single(RandomizerSpec(Kind.OUE, 1.0)),
    "HR (D=16)": Single(RandomizerSpec(Kind.HR, 1.0, 16)),
    "Laplace on {0,1}": Single(RandomizerSpec(Kind.LAPLACE01, 1.0)),
}

print(f"{'mechanism':<18}{'eps0':>6}{'upper':>9}{'lower':>9}")
for name, mech in mechanisms.items():
    for pt in curve(upper_family(mech), n, delta, eps0_values, lower_family(mech), tol=1e-3):
        low = "-" if pt.eps_lower is None else f"{pt.eps_lower:.4f}"
        print(f"{name:<18}{pt.eps0:>6.1f}{pt.eps_upper:>9.4f}{low:>9}")

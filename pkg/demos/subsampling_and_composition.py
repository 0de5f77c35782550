"""Subsampling and multi-attribute reports.

Two situations that change the decomposition but not the machinery:

* each user participates only with probability 0.2 (Poisson subsampling);
* each user reports two attributes, splitting the local budget, and the
  neighbouring datasets differ in one attribute or in both.
"""

from shuffle_amp import Joint, Kind, RandomizerSpec, Single, delta_bound, subsample

n, eps = 5000, 0.2
krr = Single(RandomizerSpec(Kind.KRR, 3.0, 10))

print("Subsampling 10-RR at eps0 = 3")
for rate in (1.0, 0.5, 0.2, 0.05):
    mech = krr if rate == 1.0 else subsample(krr, rate)
    d = delta_bound(mech.upper(eps), n).delta_upper
    print(f"  rate {rate:<5} delta(eps={eps}) = {d:.3e}")

print("\nTwo attributes, 4-RR each, total eps0 = 3")
parts = (Single(RandomizerSpec(Kind.KRR, 1.5, 4)),) * 2
for label, changed in (("both differ", (True, True)), ("one differs", (True, False))):
    d = delta_bound(Joint(parts, changed).upper(eps), n).delta_upper
    print(f"  {label:<12} delta(eps={eps}) = {d:.3e}")

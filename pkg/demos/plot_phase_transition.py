"""
Success probability versus sample size
======================================

Sweep the number of observed entries m in units of n r and count how often
the solver reaches relative error 1e-6. This is the smoke-sized grid; the
``full`` preset in ``imcflow.experiments.PRESETS`` is the d = 500 version.
"""

from imcflow.experiments import PRESETS, phase_transition

p = PRESETS["smoke"]
result = phase_transition(p["dims"], p["r"], ratios=(2, 3, 4, 6, 10), trials=10, seed=0)

for row in result.rows():
    bar = "#" * int(round(20 * row["success_rate"]))
    print(f"m/(nr) = {row['m_over_nr']:5.1f}  {row['successes']:2d}/{row['trials']}  "
          f"[{row['wilson_low']:.2f}, {row['wilson_high']:.2f}]  {bar}")

print("interpolated 50% crossing:", result.crossing(0.5))

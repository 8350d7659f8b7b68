"""Wiretap-channel simulations for approaching one-time-pad secrecy.

Modules: :mod:`metrics` (DoA/DoSA and min-entropy formulas, secrecy audit),
:mod:`channels` (seeded AWGN/BSC/Eve superposition), :mod:`nbkg`
(noise-based key generation), :mod:`shaping` (keyless randomness shaping)
and :mod:`harness` (experiment grids and reports, driven by :mod:`cli`).
"""

__version__ = "0.1.0"

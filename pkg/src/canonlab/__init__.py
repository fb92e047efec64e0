"""Desk-scale numerics for regularized canonical quantization of a scalar field.

Modules: gfcalc (scalar representatives), averaging (association by averaging),
fock (truncated Fock space), field (regularized free field), dynamics
(Hamiltonian, evolution, S-matrix, Dyson series), scattering (amplitudes) and
cli (config-driven runner).
"""

__version__ = "0.1.0"

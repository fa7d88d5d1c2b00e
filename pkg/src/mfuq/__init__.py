"""Cost-aware multi-fidelity Monte Carlo uncertainty quantification."""

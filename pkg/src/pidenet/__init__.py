"""Monte Carlo Feynman-Kac estimators for jump-diffusion PIDEs, realized as explicit ReLU networks."""

__version__ = "0.1.0"

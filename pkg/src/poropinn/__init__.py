"""Physics-informed neural networks for nonlinear diffusivity and
poroelasticity, in forward (field prediction) and inverse (coefficient
estimation) modes, with the experiment harness that reproduces the
reference error tables at desk scale."""

__version__ = "0.1.0"

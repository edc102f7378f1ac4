"""Label-noise channels over Gaussian mixtures.

Submodules
----------
mixture
    Gaussian class-conditional generative model, sampling, exact posteriors.
channels
    Uniform, class-dependent and feature-dependent noise channels.
theory
    Closed-form noisy/clean accuracy laws and tipping points.
bayes
    Plug-in classifiers from known posteriors and Monte Carlo accuracy.
learner
    Small tanh MLP trained with Adam (compiled kernel with numpy fallback).
embednoise
    Center-based noise injection for external feature datasets.
experiment
    Deterministic sweep engine producing tidy result tables.
"""

__version__ = "0.1.0"

from labelnoise.errors import (  # noqa: F401
    ConvergenceError,
    LabelNoiseError,
    NumericalError,
    ParameterError,
    ParseError,
    StateError,
)

"""Best-worst scaling pipeline: from free-text quantity descriptions to
continuous frequency scores, with agreement statistics and downstream
classifiers/regressors trained on the result."""

__version__ = "0.1.0"

"""Cough-audio screening toolkit: signal processing, statistics, classifiers, explanations and fairness audits."""

__version__ = "0.1.0"

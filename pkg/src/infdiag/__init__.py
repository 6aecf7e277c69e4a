"""Exact influence-diagram solver via rewriting to a multi-operator cluster DAG."""

__version__ = "0.1.0"

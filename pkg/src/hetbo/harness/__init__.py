"""Experiment orchestration and the ``hetbo`` command line."""

"""Heteroscedastic Bayesian optimisation of MPPI controller hyper-parameters."""

"""Canonical analysis of variational discrete systems with quadratic actions."""

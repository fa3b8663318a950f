"""Simulation and verification toolkit for fault-tolerant four-legged-cat
bosonic qubits controlled by noisy three-level ancillae."""

__version__ = "0.1.0"

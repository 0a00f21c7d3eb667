"""Pulse-level simulator and benchmarking toolkit for Rydberg-blockade CZ
gates on neutral-atom qubits: gate synthesis, randomized benchmarking with
erasure conversion, loss-resolved readout, Raman sideband cooling, and
multi-round sustainability studies."""

__version__ = "0.1.0"

"""Simulation backends: dense statevector, matrix product state, stabilizer tableau."""

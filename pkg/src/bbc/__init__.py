"""Biometric blockchain for intelligent-vehicle data sharing.

Biometric-bound block signing, a chain-derived credit ledger,
Proof-of-Driving leader election and a deterministic V2V/V2I simulator.
"""

__version__ = "0.1.0"

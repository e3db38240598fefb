"""chainverifier - numerical checks of irreducibility, aperiodicity and the T-chain
property for Markov chains driven by a deterministic control model."""

__version__ = "1.0.0"

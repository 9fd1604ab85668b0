"""kamkit: finite-truncation laboratory for KAM iterations on lattice
Hamiltonians with clustered frequencies."""

__version__ = "0.1.0"

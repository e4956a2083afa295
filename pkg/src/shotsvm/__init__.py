"""shotsvm: kernel SVMs learned from shot-budgeted noisy kernel measurements."""

__version__ = "0.1.0"

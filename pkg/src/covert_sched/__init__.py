"""Transmission scheduling for remote state estimation with an eavesdropper."""

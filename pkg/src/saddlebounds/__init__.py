"""Hard instances, resisting oracles and rate envelopes for affinely constrained
convex programs and bilinear saddle-point problems."""

__version__ = "0.1.0"

"""Audio-effect style transfer: a differentiable 6-band EQ + compressor
chain, gradient backends (exact, finite-difference, SPSA), an audio-domain
objective with loudness metrics, a rule-based baseline, and a
self-supervised data generator."""

__version__ = "0.1.0"

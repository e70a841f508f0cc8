"""Microphone characterization and listening-test toolkit.

Modules:
    signalio     WAV reading/writing and the mono sample-buffer type.
    sweptsine    Swept-sine excitation, inverse filters, measurement plans.
    irextract    Onset detection, deconvolution, averaging, octave smoothing.
    snranalysis  RMS-based signal-to-noise analysis.
    synthlab     Synthetic two-source scenario generator for ground truth.
    asrscore     Character-level recognition accuracy scoring.
    mushra       MUSHRA session definitions, screening, and statistics.
    service      HTTP service hosting MUSHRA sessions for the rating UI.
    cli          Command-line entry point covering the full pipeline.
"""

__version__ = "0.1.0"

"""Aircraft trajectory prediction: phase-aware deep models plus baselines.

Subpackages:
    neuralcore       reverse-mode tape, layers, Gaussian head, optimizer
    stgraph          spatio-temporal scene graphs over aircraft tracks
    structural_model attention LSTM over scene graphs, trivariate output
    constraints      flight-envelope fitting and rollout gating
    phase_id         fuzzy climb/cruise/descent segmentation
    enroute          dual-attention cruise forecaster with weather input
    data             track CSV ingest, resampling, plans, synthetic scenes
    evalcli          metrics, Kalman baselines, experiments, command line
"""

__version__ = "0.1.0"

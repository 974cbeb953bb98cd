"""Driver identification from steering-wheel time series.

Pipeline: ingest raw trips and resample to 10 Hz, pick the window length
from the autocorrelation of stationary trips, featurize windows with a
log-magnitude FFT, and classify 15-minute segments with a bidirectional
GRU that emits a vote every six windows.
"""

__version__ = "0.1.0"

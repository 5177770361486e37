"""Multi-object tracking by trajectory prediction.

Tracks are kept in an object pool. Detections are gated against each track's
short-term predicted position, and duplicate tracks are merged when their
long-term predictions agree in space and in attention context.
"""

__version__ = "0.1.0"

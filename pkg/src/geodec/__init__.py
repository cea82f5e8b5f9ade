"""Discrete-event simulation of a HotStuff validator network over
geographic latencies, with geospatial diversity metrics and a
jailing-exemption contract."""

__version__ = "0.1.0"

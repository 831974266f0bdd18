"""Simulated WSN-to-cloud testbed.

End Devices answer polls with XBee API I/O-sample frames, a Coordinator
converts and buffers the readings and uploads them on a timer to a mock
REST feed service with threshold alerts. A duty-cycle model estimates
node battery lifetime.
"""

__version__ = "0.1.0"

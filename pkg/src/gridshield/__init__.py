"""gridshield: a cyber-physical microgrid simulator.

Droop-controlled inverter agents under leader-follower consensus, measurement
channel attacks (scaling/additive/ramping), threshold-based anomaly
detection, and a battery-assisted isolate/support/black-start/reconnect
self-healing supervisor, plus Monte Carlo sensitivity sweeps.
"""

__version__ = "0.1.0"

from gridshield.kernel import IMPLEMENTATION as kernel_implementation

"""RFID checkpoint theft-detection and arresting system, simulated end to end.

Subpackages cover the serial tag frame codec, anti-collision singulation,
the check-post controller state machine, the central theft registry service,
and a deterministic discrete-event world tying them together.
"""

__version__ = "0.1.0"

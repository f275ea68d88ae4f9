"""Test-session setup for the sidecar suite."""

import os

# Checkpoint resolution must fail fast in tests, not retry against the hub.
# Set before anything imports transformers; its offline flags are read at
# import time.
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

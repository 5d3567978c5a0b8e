"""HTTP service exposing calibrated twins to clients (decision UI, scripts)."""

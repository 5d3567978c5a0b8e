"""Predictive digital-twin engine for tumor growth under radiotherapy.

Per-patient workflow: generate or ingest noisy tumor-burden observations,
calibrate the mechanistic growth model with MCMC, propagate posterior
uncertainty to time-to-progression, and optimize weekly radiotherapy dose
schedules against a superquantile (CVaR) risk measure. Cohort-level results
feed Kaplan-Meier survival analysis.
"""

from gliotwin.growth import (
    FixedParameters,
    PatientParameters,
    SimulationGrid,
    Trajectory,
    TreatmentRegimen,
    event_schedule,
    simulate,
    standard_of_care,
    surviving_fraction,
)
from gliotwin.truncated import TruncatedNormal

__version__ = "0.1.0"

__all__ = [
    "FixedParameters",
    "PatientParameters",
    "SimulationGrid",
    "Trajectory",
    "TreatmentRegimen",
    "TruncatedNormal",
    "event_schedule",
    "simulate",
    "standard_of_care",
    "surviving_fraction",
]

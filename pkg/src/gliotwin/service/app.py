"""FastAPI application over a completed run directory.

Read endpoints serve stored artifacts; the evaluate endpoint runs what-if
regimens synchronously against the stored posterior; optimize runs through
a background job when multiple restarts are requested. Posterior summaries
never include the oracle ground truth.
"""

from __future__ import annotations

import dataclasses
import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from gliotwin.calibration import PosteriorEnsemble
from gliotwin.growth import PARAMETER_NAMES, TreatmentRegimen
from gliotwin.optimizer import ParetoFront, ParetoPoint, optimize_regimen
from gliotwin.pipeline import ArtifactStore, RunConfig
from gliotwin.risk import RiskConfig, propagate, quantile, superquantile
from gliotwin.service import schemas

HISTOGRAM_MAX_DAY = 132


class JobRegistry:
    """In-memory async-job table; single-writer via one lock."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}

    def create(self) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {"status": "running", "result": None, "error": None}
        return job_id

    def finish(self, job_id: str, result=None, error: str | None = None) -> None:
        with self._lock:
            job = self._jobs[job_id]
            job["status"] = "failed" if error else "done"
            job["result"] = result
            job["error"] = error

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job else None


def _point_model(point: ParetoPoint) -> schemas.ParetoPointModel:
    return schemas.ParetoPointModel(
        d_max=point.d_max,
        regimen=schemas.RegimenModel(**point.regimen.to_dict()),
        total_dose=point.total_dose,
        objective=point.objective,
        ttp_superquantile=point.ttp_superquantile,
        ttp_quantile=point.ttp_quantile,
        alpha=point.alpha,
        report_seed=point.report_seed,
        report_n_mc=point.report_n_mc,
    )


def ttp_histogram(ttp_days: np.ndarray, max_day: int = HISTOGRAM_MAX_DAY) -> schemas.TTPHistogram:
    """1-day binning with the censored maximum split into its own bin."""
    censored = int(np.sum(ttp_days >= max_day))
    interior = ttp_days[ttp_days < max_day]
    counts, _ = np.histogram(interior, bins=np.arange(0, max_day + 1))
    return schemas.TTPHistogram(
        bin_start_days=list(range(max_day)),
        counts=[int(c) for c in counts],
        end_of_simulation_count=censored,
    )


def create_app(run_dir: Path | str, config: RunConfig) -> FastAPI:
    store = ArtifactStore(run_dir, config)
    app = FastAPI(title="gliotwin twin service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    jobs = JobRegistry()
    ensembles: dict[str, PosteriorEnsemble] = {}
    fronts: dict[str, ParetoFront] = {}
    cache_lock = threading.Lock()

    _ERROR_NAMES = {404: "not_found", 409: "non_converged", 422: "invalid_request", 503: "unavailable"}

    @app.exception_handler(HTTPException)
    async def _http_error(request: Request, exc: HTTPException):
        # error bodies follow the {error, detail} contract
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": _ERROR_NAMES.get(exc.status_code, "error"), "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"error": "invalid_request", "detail": jsonable_encoder(exc.errors())},
        )

    def patient_ids() -> list[str]:
        try:
            return [p.id for p in store.load_patients()]
        except FileNotFoundError:
            raise HTTPException(status_code=503, detail="run directory has no cohort artifact")

    def get_ensemble(patient_id: str) -> PosteriorEnsemble:
        with cache_lock:
            cached = ensembles.get(patient_id)
        if cached is not None:
            return cached
        if patient_id not in patient_ids():
            raise HTTPException(status_code=404, detail=f"unknown patient {patient_id}")
        try:
            ensemble = store.load_ensemble(patient_id)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"no posterior stored for {patient_id}")
        with cache_lock:
            ensembles[patient_id] = ensemble
        return ensemble

    def get_front(patient_id: str) -> ParetoFront:
        with cache_lock:
            cached = fronts.get(patient_id)
        if cached is not None:
            return cached
        if patient_id not in patient_ids():
            raise HTTPException(status_code=404, detail=f"unknown patient {patient_id}")
        try:
            front = store.load_front(patient_id)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"no pareto front stored for {patient_id}")
        with cache_lock:
            fronts[patient_id] = front
        return front

    def require_convergence(patient_id: str, force: bool) -> PosteriorEnsemble:
        ensemble = get_ensemble(patient_id)
        if not ensemble.diagnostics.converged and not force:
            raise HTTPException(
                status_code=409,
                detail={
                    "error": "posterior flagged non-converged",
                    "r_hat": ensemble.diagnostics.r_hat,
                    "hint": "retry with ?force=true to override",
                },
            )
        return ensemble

    @app.get("/patients", response_model=list[schemas.PatientSummary])
    def list_patients():
        out = []
        for p in store.load_patients():
            npy, meta = store.posterior_paths(p.id)
            has_posterior = npy.exists() and meta.exists()
            converged = None
            if has_posterior:
                # diagnostics sidecar only; the sample matrix loads lazily
                converged = bool(json.loads(meta.read_text())["converged"])
            out.append(
                schemas.PatientSummary(
                    id=p.id,
                    observation_days=p.observations.days(),
                    has_posterior=has_posterior,
                    has_pareto=store.front_path(p.id).exists(),
                    converged=converged,
                )
            )
        return out

    @app.get("/patients/{patient_id}/posterior", response_model=schemas.PosteriorSummary)
    def posterior_summary(patient_id: str, bins: int = Query(default=40, ge=5, le=200)):
        ensemble = get_ensemble(patient_id)
        marginals = []
        for j, name in enumerate(PARAMETER_NAMES):
            column = ensemble.samples[:, j]
            counts, edges = np.histogram(column, bins=bins)
            marginals.append(
                schemas.MarginalHistogram(
                    parameter=name,
                    bin_edges=[float(e) for e in edges],
                    counts=[int(c) for c in counts],
                    mean=float(column.mean()),
                    std=float(column.std(ddof=1)),
                )
            )
        diag = ensemble.diagnostics
        return schemas.PosteriorSummary(
            patient_id=patient_id,
            n_samples=len(ensemble),
            marginals=marginals,
            diagnostics=schemas.DiagnosticsModel(
                r_hat=diag.r_hat,
                ess=diag.ess,
                acceptance=list(diag.acceptance),
                converged=diag.converged,
            ),
        )

    @app.get("/patients/{patient_id}/pareto", response_model=schemas.ParetoFrontModel)
    def pareto_front(patient_id: str):
        front = get_front(patient_id)
        return schemas.ParetoFrontModel(
            patient_id=patient_id,
            points=[_point_model(p) for p in front.points],
            soc_reference=_point_model(front.soc_reference),
        )

    @app.post("/patients/{patient_id}/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(patient_id: str, request: schemas.EvaluateRequest, force: bool = Query(default=False)):
        ensemble = require_convergence(patient_id, force)
        regimen = TreatmentRegimen(
            weekly_doses=request.full_doses(),
            treatment_start_day=config.ttp.threshold_day,
        )
        samples = propagate(
            ensemble,
            config.fixed,
            regimen,
            config.ttp,
            RiskConfig(alpha=request.alpha, n_mc=request.n_mc),
            config.grid,
            seed=request.seed,
        )
        ttp_days = samples.ttp_days()
        return schemas.EvaluateResponse(
            patient_id=patient_id,
            ttp_samples_histogram=ttp_histogram(ttp_days),
            ttp_superquantile=-superquantile(samples.values, request.alpha),
            ttp_quantile=-quantile(samples.values, request.alpha),
            total_dose=regimen.total_dose(),
            alpha=request.alpha,
            n_mc=request.n_mc,
            seed=request.seed,
        )

    @app.post("/patients/{patient_id}/optimize")
    def optimize(patient_id: str, request: schemas.OptimizeRequest, force: bool = Query(default=False)):
        ensemble = require_convergence(patient_id, force)
        opt_cfg = dataclasses.replace(
            config.optimization,
            alpha=request.alpha,
            restarts=request.restarts if request.restarts is not None else config.optimization.restarts,
        )

        def run() -> ParetoPoint:
            return optimize_regimen(
                ensemble,
                request.d_max,
                opt_cfg,
                fixed=config.fixed,
                ttp_cfg=config.ttp,
                grid=config.grid,
                treatment_start_day=config.ttp.threshold_day,
            )

        if opt_cfg.restarts <= 1:
            return _point_model(run())
        job_id = jobs.create()

        def worker() -> None:
            try:
                jobs.finish(job_id, result=_point_model(run()).model_dump())
            except Exception as exc:  # surface the failure through the job record
                jobs.finish(job_id, error=str(exc))

        threading.Thread(target=worker, daemon=True).start()
        return schemas.JobHandle(job_id=job_id, status="running")

    @app.get("/jobs/{job_id}", response_model=schemas.JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return schemas.JobStatus(job_id=job_id, status=job["status"], result=job["result"], error=job["error"])

    ui_dir = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app

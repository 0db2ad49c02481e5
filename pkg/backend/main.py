"""
bsflab — FastAPI Backend
Surface catalog, validation and exact flow / curve-graph experiments as JSON endpoints.
"""

import io
import json
import logging
from typing import Any, Optional

from fastapi import Body, FastAPI, File, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from backend import config as settings
from backend.core.errors import ConfigError, LabError
from backend.core.surface_manager import SurfaceManager
from backend.metrics import experiments

logging.basicConfig(level=settings.log_level(), format='%(asctime)s %(levelname)s %(name)s: %(message)s')
log = logging.getLogger(__name__)

app = FastAPI(title="bsflab API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Global instance
manager = SurfaceManager(settings.data_dir())


# ─── Load shipped surfaces on startup ───────────────────────

@app.on_event("startup")
async def startup():
    loaded = manager.load_directory()
    log.info("loaded %d surfaces from %s", len(loaded), manager.data_dir)


@app.exception_handler(ConfigError)
async def config_error(request: Request, exc: ConfigError):
    return JSONResponse(status_code=422, content={**exc.to_dict(), "field": exc.field,
                                                  "location": exc.location})


@app.exception_handler(LabError)
async def lab_error(request: Request, exc: LabError):
    return JSONResponse(status_code=400, content=exc.to_dict())


# ─── Health & Catalog ──────────────────────────────────────

@app.get("/api/status")
async def get_status():
    return {
        "surfacesLoaded": len(manager.surfaces),
        "surfaces": sorted(manager.surfaces),
        "experiments": list(settings.EXPERIMENTS),
        "changes": len(manager.change_log),
    }


@app.get("/api/surfaces")
async def list_surfaces():
    return json.loads(manager.catalog().to_json(orient="records"))


@app.get("/api/surfaces/{name}")
async def get_surface(name: str):
    if name not in manager.surfaces:
        raise HTTPException(status_code=404, detail=f"unknown surface {name!r}")
    return manager.summary(name)


@app.post("/api/upload")
async def upload_surface(file: UploadFile = File(...)):
    """Upload a .surf document; it replaces any surface of the same name."""
    contents = await file.read()
    surface = manager.load_bytes(contents, file.filename or "<upload>")
    return {"success": True, "fileName": file.filename, **manager.summary(surface.name)}


@app.get("/api/export/surfaces")
async def export_catalog():
    if not manager.surfaces:
        raise HTTPException(status_code=404, detail="No surfaces to export")
    return StreamingResponse(
        io.BytesIO(manager.export_catalog()),
        media_type="text/csv",
        headers={"Content-Disposition": "attachment; filename=surfaces.csv"},
    )


# ─── Experiments ───────────────────────────────────────────

def _run(kind: str, params: Optional[dict[str, Any]]
         ) -> tuple[experiments.ExperimentResult, settings.ExperimentConfig]:
    if kind not in settings.EXPERIMENTS:
        raise HTTPException(status_code=404, detail=f"unknown experiment {kind!r}")
    params = dict(params or {})
    params.pop("out", None)
    cfg = settings.load_config({**params, "experiment": kind})
    return experiments.run(cfg, manager), cfg


@app.post("/api/experiments/{kind}")
async def run_experiment(kind: str, params: Optional[dict[str, Any]] = Body(None)):
    result, cfg = _run(kind, params)
    return {**json.loads(experiments.to_json(result, cfg)), "status": result.status}


@app.post("/api/experiments/{kind}/csv")
async def run_experiment_csv(kind: str, params: Optional[dict[str, Any]] = Body(None)):
    result, _ = _run(kind, params)
    return StreamingResponse(
        io.BytesIO(result.detail.to_csv(index=False).encode("utf-8")),
        media_type="text/csv",
        headers={"Content-Disposition": f"attachment; filename={kind}.csv"},
    )

"""HTTP surface: a FastAPI app wrapping the verification handlers."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..errors import CapExceeded, GnncertError
from . import handlers, schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="gnncert",
        description=(
            "Certified robustness verification of message-passing networks "
            "under budgeted edge perturbations"
        ),
        version="0.1.0",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify(req: schemas.VerifyRequest):
        return _run(handlers.handle_verify, req)

    @app.post("/bounds", response_model=schemas.BoundsResponse)
    def bounds(req: schemas.BoundsRequest):
        return _run(handlers.handle_bounds, req)

    @app.post("/export-mip", response_model=schemas.ExportMipResponse)
    def export_mip(req: schemas.ExportMipRequest):
        return _run(handlers.handle_export_mip, req)

    @app.post("/attack", response_model=schemas.AttackResponse)
    def attack(req: schemas.AttackRequest):
        return _run(handlers.handle_attack, req)

    @app.post("/oracle", response_model=schemas.OracleResponse)
    def oracle(req: schemas.OracleRequest):
        return _run(handlers.handle_oracle, req)

    @app.post("/sgm", response_model=schemas.SgmResponse)
    def sgm(req: schemas.SgmRequest):
        return _run(handlers.handle_sgm, req)

    return app


def _run(handler, req):
    try:
        return handler(req)
    except CapExceeded as exc:
        raise HTTPException(status_code=413, detail=str(exc))
    except GnncertError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


app = create_app()

"""
RiCL Simulator Service

HTTP surface over the experiment runner: runs, ablations, sweeps, corpus
generation and markdown reports.
"""

from fastapi import FastAPI, HTTPException, Header, Query
from fastapi.middleware.cors import CORSMiddleware
from typing import Any, Dict, List, Optional
import logging

from app.auth.verify import require_service_token
from app.config.loader import apply_overrides, parse_config
from app.config.settings import configure_logging, get_settings
from app.errors import ConfigError
from app.models.config import BUFFER_PROFILES, ExperimentConfig, Method
from app.models.health import HealthResponse, ServiceInfoResponse
from app.models.reports import AblationRow, RunSummary, SweepRow
from app.models.requests import (
    CorpusRequest,
    CorpusResponse,
    ExperimentRequest,
    ReportResponse,
    SweepRequest
)
from app.services.experiment_service import ExperimentService, report
from app.stream.corpus import generate_synthetic_corpus, write_corpus

configure_logging()
logger = logging.getLogger(__name__)

VERSION = "1.0.0"

app = FastAPI(
    title="RiCL Simulator Service",
    description="Interactive continual learning under noisy feedback: experiments and reports",
    version=VERSION
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=get_settings().cors_origins.split(","),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _resolve_config(config_path: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    """Config file (or defaults under RICL_OUTPUT_DIR) with overrides applied"""
    if config_path:
        cfg = parse_config(config_path)
    else:
        cfg = ExperimentConfig(output_dir=get_settings().output_dir)
    return apply_overrides(cfg, overrides) if overrides else cfg


@app.get("/", response_model=ServiceInfoResponse)
async def root():
    """Root endpoint - service info"""
    return {
        "service": "RiCL Simulator Service",
        "status": "running",
        "version": VERSION,
        "supported_methods": [m.value for m in Method],
        "supported_profiles": sorted(BUFFER_PROFILES),
        "output_dir": get_settings().output_dir
    }


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint for deployment platforms"""
    return {
        "service": "ricl-simulator",
        "status": "healthy",
        "version": VERSION
    }


# =====================================================
# EXPERIMENT ENDPOINTS
# =====================================================

@app.post("/experiments/run", response_model=RunSummary)
def run_experiment(
    request: ExperimentRequest,
    authorization: Optional[str] = Header(None)
):
    """
    Run one configured experiment over all of its seeds.

    Writes per-seed artifacts under the config's output_dir and returns the summary.
    """
    try:
        require_service_token(authorization)
        cfg = _resolve_config(request.config_path, request.overrides)
        logger.info(f"Experiment request received: method={cfg.method.value}, seeds={cfg.seeds}")

        summary = ExperimentService().run_experiment(cfg)

        logger.info(f"Experiment completed: {summary.summary}")
        return summary

    except HTTPException:
        raise
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Experiment failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Experiment failed: {str(e)}")


@app.post("/experiments/ablate", response_model=List[AblationRow])
def run_ablation(
    request: ExperimentRequest,
    authorization: Optional[str] = Header(None)
):
    """
    Run the component ablation grid (all-on, -IPO, -NCL, -TCP).
    """
    try:
        require_service_token(authorization)
        cfg = _resolve_config(request.config_path, request.overrides)
        logger.info(f"Ablation request received: seeds={cfg.seeds}")

        rows = ExperimentService().ablate(cfg)

        logger.info(f"Ablation completed: {len(rows)} rows")
        return rows

    except HTTPException:
        raise
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Ablation failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Ablation failed: {str(e)}")


@app.post("/experiments/sweep", response_model=List[SweepRow])
def run_sweep(
    request: SweepRequest,
    authorization: Optional[str] = Header(None)
):
    """
    Sweep noise rates and/or task orders.

    Without either axis, the default noise rates are swept.
    """
    try:
        require_service_token(authorization)
        cfg = _resolve_config(request.config_path, request.overrides)
        logger.info(f"Sweep request received: noise={request.noise_rates}, orders={request.task_orders}")

        rows = ExperimentService().sweep(cfg, request.noise_rates, request.task_orders)

        logger.info(f"Sweep completed: {len(rows)} rows")
        return rows

    except HTTPException:
        raise
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Sweep failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Sweep failed: {str(e)}")


@app.get("/experiments/report", response_model=ReportResponse)
def get_report(
    run_dir: str = Query(..., description="Directory holding run outputs"),
    authorization: Optional[str] = Header(None)
):
    """
    Markdown AP/AF and per-task accuracy tables for the runs under run_dir.
    """
    try:
        require_service_token(authorization)
        return ReportResponse(run_dir=run_dir, markdown=report(run_dir))

    except HTTPException:
        raise
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except Exception as e:
        logger.error(f"Report for {run_dir} failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Report failed: {str(e)}")


# =====================================================
# CORPUS ENDPOINTS
# =====================================================

@app.post("/corpus/generate", response_model=CorpusResponse)
def generate_corpus(
    request: CorpusRequest,
    authorization: Optional[str] = Header(None)
):
    """
    Write a synthetic keyword corpus (JSONL) and its synonym table.
    """
    try:
        require_service_token(authorization)
        corpus = generate_synthetic_corpus(
            num_classes=request.num_classes,
            docs_per_class=request.docs_per_class,
            vocab_size=request.vocab_size,
            seed=request.seed,
            doc_length=request.doc_length,
            keyword_rate=request.keyword_rate
        )
        corpus_path, synonyms_path = write_corpus(corpus, request.output_path)

        logger.info(f"Corpus written to {corpus_path}")
        return CorpusResponse(
            success=True,
            output_path=str(corpus_path),
            synonyms_path=str(synonyms_path),
            documents=len(corpus.documents),
            classes=request.num_classes,
            message=f"Generated {len(corpus.documents)} documents"
        )

    except HTTPException:
        raise
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Corpus generation failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Corpus generation failed: {str(e)}")


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=get_settings().port)

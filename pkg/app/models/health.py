"""
Health check models
"""
from pydantic import BaseModel
from typing import List


class HealthResponse(BaseModel):
    """Liveness probe response"""
    service: str
    status: str
    version: str


class ServiceInfoResponse(HealthResponse):
    """Root endpoint: what this deployment can run"""
    supported_methods: List[str]
    supported_profiles: List[str]
    output_dir: str

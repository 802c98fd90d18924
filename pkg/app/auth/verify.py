"""
Service Token Authentication

Bearer-token guard for the experiment endpoints. Runs write to disk and can
take minutes, so everything except the health endpoints requires the token
configured in RICL_SERVICE_TOKEN.
"""
import logging
import secrets
from typing import Optional

from fastapi import HTTPException

from app.config.settings import get_settings

logger = logging.getLogger(__name__)


def _bearer_token(authorization: Optional[str]) -> Optional[str]:
    """Token part of a "Bearer <token>" header, or None if malformed"""
    if not authorization:
        logger.warning("No authorization header provided")
        return None

    parts = authorization.split()
    if len(parts) != 2 or parts[0].lower() != "bearer":
        logger.warning("Invalid authorization header format")
        return None
    return parts[1]


def verify_service_token(authorization: Optional[str]) -> bool:
    """
    Verify the bearer token of an incoming request.

    Args:
        authorization: Authorization header value (e.g., "Bearer token123")

    Returns:
        True if token is valid, False otherwise
    """
    token = _bearer_token(authorization)
    if token is None:
        return False

    if not secrets.compare_digest(token.encode(), get_settings().service_token.encode()):
        logger.warning("Invalid service token provided")
        return False

    return True


def require_service_token(authorization: Optional[str]) -> None:
    """
    Reject the request with 401 unless the token verifies.

    Raises:
        HTTPException: 401 for a missing, malformed or wrong token
    """
    if not verify_service_token(authorization):
        raise HTTPException(status_code=401, detail="Invalid or missing authorization token")

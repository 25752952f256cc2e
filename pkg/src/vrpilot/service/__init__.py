from .app import build_gateway, create_app

__all__ = ["build_gateway", "create_app"]

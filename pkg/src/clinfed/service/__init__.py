from .app import EngineState, ServiceConfig, create_app

__all__ = ["EngineState", "ServiceConfig", "create_app"]

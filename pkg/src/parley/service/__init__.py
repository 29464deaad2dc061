from .app import MarketplaceState, app, create_app

__all__ = ["MarketplaceState", "app", "create_app"]

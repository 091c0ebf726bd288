# core package
from packages.core.settings import settings

__all__ = ["settings"]


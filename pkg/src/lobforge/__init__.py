"""Limit order book dynamics with order-matching clearing."""

from __future__ import annotations

from .book import BookProfile, BookState, ask_bid, is_admissible, profile
from .errors import LobError

__version__ = "0.1.0"

__all__ = ["BookProfile", "BookState", "LobError", "ask_bid", "is_admissible", "profile", "__version__"]

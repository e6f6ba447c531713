"""User-facing surface: CLI and websocket teleop service."""

from .cli import build_parser, cli, main
from .server import PROTOCOL_VERSION, TeleopService, create_app, serve

__all__ = ["build_parser", "cli", "main", "PROTOCOL_VERSION",
           "TeleopService", "create_app", "serve"]

"""`stir-service --config service.yaml [--host H] [--port P]`"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import BackendConfig
from .errors import ConfigError, ModelLoadError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stir-service",
        description="HTTP backend for the /embed + /score retrieval protocol.",
    )
    parser.add_argument("--config", required=True, help="YAML or JSON config file.")
    parser.add_argument("--host", default=None, help="Bind host (overrides config).")
    parser.add_argument("--port", type=int, default=None, help="Bind port (overrides config).")
    parser.add_argument("--log-level", default="info")
    args = parser.parse_args(argv)

    logging.basicConfig(level=args.log_level.upper())
    try:
        config = BackendConfig.from_file(args.config)
        from .app import create_app

        app = create_app(config)
    except (ConfigError, ModelLoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    uvicorn.run(app, host=args.host or config.host, port=args.port or config.port,
                log_level=args.log_level)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""CLI entry: serve the scorer protocol over stdio (default) or TCP."""

import argparse
import json
import sys

from .adapters import SUPPORTED_MODELS
from .server import SidecarConfig, selftest, serve, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ctrleval-sidecar",
        description="Text-infilling model sidecar for the ctrleval scorer protocol.",
    )
    parser.add_argument("--model", default="stub", choices=SUPPORTED_MODELS)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0,
                        help="Seed for the stub adapter's deterministic scores.")
    parser.add_argument("--port", type=int, default=None,
                        help="Listen on this TCP port instead of serving stdio.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--selftest", action="store_true",
                        help="Run one request of each kind and print a report.")
    args = parser.parse_args(argv)

    try:
        config = SidecarConfig(model=args.model, device=args.device,
                               batch_size=args.batch_size, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))

    if args.selftest:
        json.dump(selftest(config), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    if args.port is not None:
        serve_tcp(config, args.host, args.port)
        return 0
    serve(config, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Protocol loop: newline-delimited JSON requests on stdin, responses on
stdout, one at a time. Request errors (including out-of-memory) come back
as error responses; the process stays alive until EOF.
"""

from __future__ import annotations

import argparse
import json
import sys

from .service import AdapterError, build_service


def handle(service, request: dict) -> dict:
    rid = request.get("id")
    try:
        op = request.get("op")
        if op == "info":
            return {"id": rid, "dim": service.dim, "t": service.t}
        if op == "embed":
            return {"id": rid, "vector": service.embed(request["text"])}
        if op == "predict":
            payload = service.predict(request["question"], request["context"])
            return {"id": rid, **payload}
        if op == "fine_tune":
            payload = service.fine_tune(request["instances"])
            return {"id": rid, **payload}
        return {"id": rid, "error": f"unknown op: {op!r}"}
    except AdapterError as e:
        return {"id": rid, "error": str(e)}
    except Exception as e:  # keep serving after OOM or bad payloads
        return {"id": rid, "error": f"{type(e).__name__}: {e}"}


def serve(service, reader, writer) -> None:
    for line in reader:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as e:
            response = {"id": None, "error": f"bad request json: {e.msg}"}
        else:
            response = handle(service, request)
        writer.write(json.dumps(response) + "\n")
        writer.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="palqa-adapter",
        description="Span-prediction model adapter speaking the backend wire protocol on stdio",
    )
    parser.add_argument("--model", default="tiny:0",
                        help="tiny:<seed> or hf:<name-or-path>")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--epochs", type=int, default=2,
                        help="training epochs per fine_tune batch")
    parser.add_argument("--lr", type=float, default=3e-4)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--max-length", type=int, default=128,
                        help="encoder window in tokens")
    args = parser.parse_args(argv)

    try:
        service = build_service(
            args.model, args.device, args.epochs, args.lr,
            args.batch_size, args.max_length,
        )
    except AdapterError as e:
        print(f"palqa-adapter: {e}", file=sys.stderr)
        return 2
    print(
        f"palqa-adapter: serving {args.model} on {args.device} "
        f"(dim {service.dim}, epochs {service.epochs}, lr {args.lr})",
        file=sys.stderr,
    )
    serve(service, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())

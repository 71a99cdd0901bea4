"""Thin command-line client for the triplenet service.

Every subcommand talks to the service over HTTP.  Without --server the app is
mounted in-process through an ASGI transport, so no daemon is needed; with
--server URL the same requests go to a remote instance (`triplenet serve`).

Exit codes: 0 success, 1 usage error (bad flags or rejected preconditions),
2 runtime failure (server errors, diverged training, failed gradient checks).
Results go to stdout, errors to stderr.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from typing import Optional

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_POLL_SECONDS = 0.5


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; this CLI reserves 2
    for runtime failures, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _detail(resp: httpx.Response) -> str:
    try:
        payload = resp.json()
    except ValueError:
        return resp.text.strip()
    detail = payload.get("detail", payload)
    if isinstance(detail, list):  # pydantic validation errors
        return "; ".join(
            f"{'.'.join(str(p) for p in e.get('loc', []))}: {e.get('msg', '')}"
            for e in detail)
    return str(detail)


def _fail(resp: httpx.Response) -> int:
    print(f"error: {_detail(resp)}", file=sys.stderr)
    return EXIT_USAGE if resp.status_code < 500 else EXIT_RUNTIME


async def _summarize(client: httpx.AsyncClient, args) -> int:
    resp = await client.post("/summarize", json={
        "model": args.model, "input_size": args.input, "classes": args.classes})
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    print(f"triplenet-{body['variant']} @ {body['input_size']}x"
          f"{body['input_size']}, {body['classes']} classes "
          f"(final width {body['final_channels']})")
    print(body["table"], end="")
    return EXIT_OK


async def _analyze(client: httpx.AsyncClient, args) -> int:
    payload = {"model": args.model, "input_size": args.input,
               "classes": args.classes}
    if args.bottleneck is not None:
        try:
            payload["bottleneck"] = int(args.bottleneck)
        except ValueError:
            payload["bottleneck"] = args.bottleneck
    resp = await client.post("/analyze", json=payload)
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    print(body["csv" if args.format == "csv" else "text"], end="")
    return EXIT_OK


async def _bench(client: httpx.AsyncClient, args) -> int:
    resp = await client.post("/bench", json={
        "model": args.model, "input_size": args.input, "classes": args.classes,
        "images": args.images, "warmup": args.warmup,
        "weights": args.weights, "seed": args.seed})
    if resp.status_code != 200:
        return _fail(resp)
    b = resp.json()
    print(f"triplenet-{b['model']} @ {b['input_size']}x{b['input_size']}: "
          f"{b['images']} images ({b['warmup']} warmup)")
    print(f"mean {b['mean_ms']:.3f} ms/image  std {b['std_ms']:.3f} ms  "
          f"total {b['total_seconds']:.3f} s")
    return EXIT_OK


async def _gradcheck(client: httpx.AsyncClient, args) -> int:
    resp = await client.post("/gradcheck", json={
        "seed": args.seed, "instances": args.instances})
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    for row in body["checks"]:
        verdict = "PASS" if row["passed"] else "FAIL"
        print(f"{row['name']:<24} max_rel_err {row['max_rel_error']:.3e}  "
              f"tol {row['tolerance']:g}  {verdict}")
    if not body["passed"]:
        print("error: gradient check failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


async def _train(client: httpx.AsyncClient, args) -> int:
    resp = await client.post("/train", json={
        "dataset": args.dataset, "data_dir": args.data_dir, "model": args.model,
        "epochs": args.epochs, "batch_size": args.batch, "subset": args.subset,
        "seed": args.seed, "out_dir": args.out,
        "test_eval": not args.no_test_eval})
    if resp.status_code != 200:
        return _fail(resp)
    job_id = resp.json()["job_id"]
    print(f"training job {job_id} started")
    shown = 0
    while True:
        status = await client.get(f"/train/{job_id}")
        if status.status_code != 200:
            return _fail(status)
        body = status.json()
        for m in body["metrics"][shown:]:
            err = "-" if m["test_error"] is None else f"{m['test_error']:.4f}"
            print(f"epoch {m['epoch']}  lr {m['lr']:.8g}  "
                  f"train_loss {m['train_loss']:.6f}  test_error {err}")
        shown = len(body["metrics"])
        if body["state"] == "done":
            print(f"checkpoint: {body['checkpoint_path']}")
            print(f"log: {body['log_path']}")
            print(f"stats: {body['stats_path']}")
            return EXIT_OK
        if body["state"] == "error":
            print(f"error: {body['error']}", file=sys.stderr)
            return EXIT_RUNTIME
        await asyncio.sleep(_POLL_SECONDS)


async def _evaluate(client: httpx.AsyncClient, args) -> int:
    resp = await client.post("/evaluate", json={
        "model": args.model, "weights": args.weights, "dataset": args.dataset,
        "data_dir": args.data_dir, "split": args.split, "stats": args.stats})
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    print(f"error rate: {body['error_rate_pct']:.4f}% "
          f"over {body['examples']} examples")
    return EXIT_OK


def _run(server: Optional[str], handler, args) -> int:
    async def runner() -> int:
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=None) as client:
                return await handler(client, args)
        from .service.app import create_app
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, timeout=None,
                                     base_url="http://triplenet.internal") as client:
            return await handler(client, args)

    try:
        return asyncio.run(runner())
    except httpx.HTTPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def build_parser() -> _Parser:
    parser = _Parser(prog="triplenet",
                     description="TripleNet model summaries, cost analysis, "
                                 "training, evaluation and benchmarking")
    parser.add_argument("--server", default=None,
                        help="service URL (default: run the service in-process)")
    sub = parser.add_subparsers(dest="command")

    def model_flags(p, input_default):
        p.add_argument("--model", choices=("s", "b"), default="s")
        p.add_argument("--input", type=int, default=input_default,
                       help="square input size (multiple of 32)")
        p.add_argument("--classes", type=int, default=10)

    p = sub.add_parser("summarize", help="print the per-stage architecture table")
    model_flags(p, 224)

    p = sub.add_parser("analyze", help="print the static cost report")
    model_flags(p, 224)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--bottleneck", default=None,
                   help="block-5 3x3 width reading "
                        "(triple-growth|half|third|growth|<int>)")

    p = sub.add_parser("train", help="train on CIFAR-10 or converted SVHN")
    p.add_argument("--dataset", choices=("cifar10", "svhn"), required=True)
    p.add_argument("--data-dir", default=None,
                   help="dataset directory (default: $TRIPLENET_DATA_DIR)")
    p.add_argument("--model", choices=("s", "b"), default="s")
    p.add_argument("--epochs", type=int, default=None,
                   help="default: 200 for cifar10, 60 for svhn")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--subset", type=int, default=None,
                   help="train on the first N examples only")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory for "
                   "checkpoint, log and normalization stats")
    p.add_argument("--no-test-eval", action="store_true",
                   help="skip the per-epoch test-set evaluation")

    p = sub.add_parser("bench", help="time single-image eval-mode inference")
    p.add_argument("--model", choices=("s", "b"), default="s")
    p.add_argument("--input", type=int, default=32)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--weights", default=None, help="checkpoint to load")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=5)

    p = sub.add_parser("evaluate", help="error rate of a checkpoint on a dataset split")
    p.add_argument("--model", choices=("s", "b"), default="s")
    p.add_argument("--weights", required=True)
    p.add_argument("--dataset", choices=("cifar10", "svhn"), required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--stats", default=None, help="normalization sidecar file")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


_HANDLERS = {
    "summarize": _summarize,
    "analyze": _analyze,
    "train": _train,
    "bench": _bench,
    "gradcheck": _gradcheck,
    "evaluate": _evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == "serve":
        import uvicorn

        uvicorn.run("triplenet.service.app:app", host=args.host, port=args.port)
        return EXIT_OK
    return _run(args.server, _HANDLERS[args.command], args)


if __name__ == "__main__":
    sys.exit(main())

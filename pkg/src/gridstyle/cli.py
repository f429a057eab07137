"""Thin command-line client for the stylization service.

By default the request is sent to an in-process instance of the FastAPI
app (no server needed); ``--server URL`` targets a running instance
instead. Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import csv
import json
import sys

import click
import httpx

EXIT_CONFIG = 2
EXIT_DATA = 3


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # In-process mode: drive the ASGI app directly through the sync
    # test client so no server has to be running.
    from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app, raise_server_exceptions=False)


def _read_transition(path):
    schedule = []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                schedule.append((int(row[0]), float(row[1])))
    except (OSError, ValueError, IndexError) as exc:
        raise click.ClickException(f"bad transition file {path}: {exc}")
    return schedule


@click.command()
@click.option("--content", required=True, help="Directory of content frames.")
@click.option("--masks", required=True, help="Directory of object masks.")
@click.option("--style-fg", required=True, help="Foreground style image.")
@click.option("--style-bg", required=True, help="Background style image.")
@click.option("--weights", default=None, help="Weight bundle file "
              "(omit to use seeded weights).")
@click.option("--out", required=True, help="Output directory.")
@click.option("--flow", default=None, help="Directory of .flo flow files.")
@click.option("--grid-rate", default=1, type=int,
              help="Predict grids every R frames, interpolate between.")
@click.option("--alpha", default=0.5, type=float,
              help="Temporal statistics blend weight in [0, 1].")
@click.option("--transition", default=None,
              help="CSV of frame,weight pairs for style transitions.")
@click.option("--style-fg2", default=None, help="Alternate foreground style.")
@click.option("--style-bg2", default=None, help="Alternate background style.")
@click.option("--metrics", is_flag=True, help="Evaluate losses and warping "
              "error on the outputs (requires --flow).")
@click.option("--bench", default=None, help="Comma-separated square "
              "resolutions to benchmark, e.g. 512,1024.")
@click.option("--seed", default=42, type=int, help="Seed for generated weights.")
@click.option("--dump-grids", is_flag=True, help="Write per-keyframe grids.")
@click.option("--server", default=None, help="URL of a running service "
              "(default: run in-process).")
def main(content, masks, style_fg, style_bg, weights, out, flow, grid_rate,
         alpha, transition, style_fg2, style_bg2, metrics, bench, seed,
         dump_grids, server):
    """Localized photorealistic video stylization."""
    body = {
        "content_dir": content, "mask_dir": masks,
        "style_fg": style_fg, "style_bg": style_bg,
        "out_dir": out, "weights": weights, "flow_dir": flow,
        "grid_rate": grid_rate, "alpha": alpha, "seed": seed,
        "dump_grids": dump_grids,
        "style_fg2": style_fg2, "style_bg2": style_bg2,
    }
    if transition:
        try:
            body["transition"] = _read_transition(transition)
        except click.ClickException as exc:
            click.echo(f"error: {exc.message}", err=True)
            sys.exit(EXIT_CONFIG)
    if bench:
        try:
            body["resolutions"] = [int(s) for s in bench.split(",") if s]
        except ValueError:
            click.echo(f"error: bad --bench value {bench!r}", err=True)
            sys.exit(EXIT_CONFIG)
        endpoint = "/benchmark"
    elif metrics:
        endpoint = "/metrics"
    else:
        endpoint = "/stylize"
    with _client(server) as client:
        try:
            resp = client.post(endpoint, json=body)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
    if resp.status_code == 200:
        click.echo(json.dumps(resp.json(), indent=2))
        sys.exit(0)
    try:
        payload = resp.json()
    except ValueError:
        payload = {"error": "config", "detail": resp.text}
    detail = payload.get("detail", resp.text)
    click.echo(f"error: {detail}", err=True)
    # Pydantic validation failures (HTTP 422 with a list detail) are
    # malformed configuration, not data problems.
    if resp.status_code == 422 and payload.get("error") == "data":
        sys.exit(EXIT_DATA)
    sys.exit(EXIT_CONFIG)


if __name__ == "__main__":
    main()

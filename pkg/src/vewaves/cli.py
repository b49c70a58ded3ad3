"""Command-line client.

Each subcommand builds the same request model the HTTP service accepts and
either executes it in-process or, with --url, POSTs it to a running server.
Outputs are written as CSV (17 significant digits) and JSON summaries.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .snapshots import parse_config_text, write_json, write_kernel_dump_csv, write_norms_csv
from .spectral import set_fft_workers


def _load_config(path):
    if path is None:
        return {}
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _post_or_call(url, route, payload, local):
    if url:
        import httpx

        resp = httpx.post(url.rstrip("/") + route, json=payload, timeout=None)
        if resp.status_code != 200:
            raise click.ClickException(f"server returned {resp.status_code}: {resp.text}")
        return resp.json()
    return local(payload)


def _outdir(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _as_list(payload, *keys):
    """Single config values for list-typed fields become one-element lists."""
    for key in keys:
        if key in payload and not isinstance(payload[key], list):
            payload[key] = [payload[key]]
    return payload


_COMMON = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="key=value or JSON config file"),
    click.option("--out", default="out", show_default=True, help="output directory"),
    click.option("--seed", default=0, show_default=True, type=int),
    click.option("--threads", default=1, show_default=True, type=int),
    click.option("--url", default=None, help="POST to a running service instead of running in-process"),
]


def _common(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Spectral decay toolkit for compressible viscoelastic flow."""


@main.command()
@_common
@click.option("--suite", "suites", multiple=True, help="restrict to named suites")
def verify(config_path, out, seed, threads, url, suites):
    """Run the identity/property verification suites."""
    set_fft_workers(threads)
    cfg = _load_config(config_path)
    payload = {
        "params": cfg.get("params", {}),
        "seed": cfg.get("seed", seed),
        "grid_n": cfg.get("grid_n", 32),
    }
    if suites:
        payload["suites"] = list(suites)

    def local(body):
        from .service import VerifyRequest, post_verify

        return post_verify(VerifyRequest(**body))

    report = _post_or_call(url, "/verify", payload, local)
    path = write_json(_outdir(out) / "verify.json", report)
    for suite in report["suites"]:
        mark = "pass" if suite["passed"] else "FAIL"
        click.echo(f"{mark}  {suite['name']:22s} residual={suite['residual']:.3e} tol={suite['tolerance']:g}")
    click.echo(f"report: {path}")
    if not report["passed"]:
        raise SystemExit(1)


@main.command("linear-decay")
@_common
def linear_decay(config_path, out, seed, threads, url):
    """Radial-instrument linear decay experiment with exponent fits."""
    set_fft_workers(threads)
    cfg = _load_config(config_path)
    payload = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    payload.setdefault("seed", seed)
    if "params" in cfg:
        payload["params"] = cfg["params"]
    _as_list(payload, "p_values")

    def local(body):
        from .service import LinearDecayRequest, post_linear_decay

        return post_linear_decay(LinearDecayRequest(**body)).model_dump()

    series = _post_or_call(url, "/experiments/linear-decay", payload, local)
    outdir = _outdir(out)
    write_norms_csv(outdir / "norms.csv", series["times"], series["norms"])
    write_json(outdir / "summary.json", series)
    for p, fit in series["exponents"].items():
        target = series["targets"].get(p)
        click.echo(f"L^{p}: exponent {fit['exponent']:.4f} +- {fit['stderr']:.4f} (target {target})")
    click.echo(f"outputs in {outdir}")


@main.command("nonlinear-decay")
@_common
def nonlinear_decay(config_path, out, seed, threads, url):
    """Grid-based nonlinear run with invariants and norm series."""
    set_fft_workers(threads)
    cfg = _load_config(config_path)
    payload = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    payload.setdefault("seed", seed)
    if "params" in cfg:
        payload["params"] = cfg["params"]
    _as_list(payload, "p_values")
    outdir = _outdir(out)

    def local(body):
        # in-process runs also emit state snapshot binaries
        from .harness import run_experiment
        from .service import NonlinearDecayRequest, nonlinear_config

        config = nonlinear_config(NonlinearDecayRequest(**body))
        return run_experiment(config, snapshot_dir=outdir / "snapshots").as_dict()

    series = _post_or_call(url, "/experiments/nonlinear-decay", payload, local)
    write_norms_csv(outdir / "norms.csv", series["times"], series["norms"])
    write_json(outdir / "summary.json", series)
    meta = series["meta"]
    click.echo(f"constraint max: {meta['constraint_max']:.3e}")
    click.echo(f"invariant residual max: {meta['invariant_max_l2']:.3e}")
    click.echo(f"outputs in {outdir}")


@main.command("kernel-dump")
@_common
def kernel_dump(config_path, out, seed, threads, url):
    """Emit the six kernel time factors over (k, t) as CSV."""
    set_fft_workers(threads)
    cfg = _load_config(config_path)
    payload = _as_list({
        "params": cfg.get("params", {}),
        "k_values": cfg.get("k_values", [0.1, 0.5, 1.0, 2.0, 5.0]),
        "t_values": cfg.get("t_values", [0.0, 0.5, 1.0, 2.0, 5.0]),
    }, "k_values", "t_values")

    def local(body):
        from .service import KernelDumpRequest, post_kernel_dump

        return post_kernel_dump(KernelDumpRequest(**body))

    result = _post_or_call(url, "/kernel/dump", payload, local)
    path = write_kernel_dump_csv(_outdir(out) / "kernel_factors.csv", result["rows"])
    click.echo(f"{len(result['rows'])} rows -> {path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--threads", default=1, show_default=True, type=int)
def serve(host, port, threads):
    """Run the HTTP service."""
    import uvicorn

    set_fft_workers(threads)
    uvicorn.run("vewaves.service:app", host=host, port=port)


if __name__ == "__main__":
    main()

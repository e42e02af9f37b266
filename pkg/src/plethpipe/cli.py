"""Command line client for the analysis service.

Commands post to the HTTP API. By default an in-process application
instance handles the request, so no server needs to be running; pass
--server to talk to a deployed one instead. Failures carry a kind that
maps onto the exit codes: 2 usage, 3 data, 4 insufficient, 1 anything
else.
"""

import sys

import click
import httpx

from . import __version__
from .errors import EXIT_CODES
from .segmentation import DURATION_MIN_S
from .sigh_analysis import N_CONTEXT, SIGH_DURATION_MIN_S


class Client:
    def __init__(self, server=None):
        if server:
            self._http = httpx.Client(base_url=server, timeout=None)
        else:
            # in-process: the service runs inside this very command
            from fastapi.testclient import TestClient

            from .service import create_app
            self._http = TestClient(create_app())

    def post(self, path, payload):
        try:
            resp = self._http.post(path, json=payload)
        except httpx.HTTPError as e:
            _fail("error", f"cannot reach service: {e}")
        if resp.status_code == 200:
            return resp.json()
        if resp.status_code == 422:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
                for err in resp.json().get("detail", [])
            )
            _fail("usage", problems or "invalid request")
        detail = resp.json().get("detail")
        if isinstance(detail, dict) and "kind" in detail:
            _fail(detail["kind"], detail["message"])
        _fail("error", resp.text)


def _fail(kind, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_CODES.get(kind, 1))


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; default is in-process.")
@click.version_option(version=__version__)
@click.pass_context
def main(ctx, server):
    """Whole-body plethysmography breath analysis."""
    ctx.obj = Client(server)


@main.command()
@click.argument("edf_files", nargs=-1, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for the breath database.")
@click.option("--labels", type=click.Path(), default=None,
              help="CSV mapping EDF files to subject/activity/gene.")
@click.option("--sap-threshold", default=9.0, show_default=True,
              help="Impulse filter level in derivative std units.")
@click.option("--sap-symmetric", is_flag=True,
              help="Catch impulses of both signs, not only negative ones.")
@click.option("--duration-min", default=DURATION_MIN_S, show_default=True,
              help="Breaths shorter than this many seconds are anomalies.")
@click.option("--min-dev-max", default=None, type=float,
              help="Depth threshold for anomalous breaths "
                   "[default: -0.05 x signal std].")
@click.option("--channel-label", default="flow", show_default=True,
              help="EDF signal label to analyze.")
@click.pass_obj
def ingest(client, edf_files, out_dir, labels, sap_threshold, sap_symmetric,
           duration_min, min_dev_max, channel_label):
    """Build a breath database from EDF recordings."""
    result = client.post("/ingest", {
        "edf_paths": list(edf_files),
        "out_dir": out_dir,
        "labels_path": labels,
        "sap_threshold": sap_threshold,
        "sap_symmetric": sap_symmetric,
        "duration_min_s": duration_min,
        "min_dev_max": min_dev_max,
        "channel_label": channel_label,
    })
    c = result["counters"]
    click.echo(
        f"{result['rows']} breaths from {c['candidates']} candidates "
        f"({c['anomalies_removed']} anomalies merged, "
        f"{c['sap_changed']} impulse samples repaired)"
    )
    click.echo(f"database: {result['database']}")
    click.echo(f"manifest: {result['manifest']}")


@main.command()
@click.argument("database", type=click.Path())
@click.option("--comparison", required=True,
              type=click.Choice(["activity", "genetic"]),
              help="Which category split to test.")
@click.option("--test", "test_name", default="ks", show_default=True,
              type=click.Choice(["ks", "t"]),
              help="Two-sample test applied per metric.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for tables.")
@click.option("--bins", default=50, show_default=True,
              help="Histogram bin count.")
@click.option("--pooled", is_flag=True,
              help="Pooled-variance t-test instead of unequal variances.")
@click.pass_obj
def compare(client, database, comparison, test_name, out_dir, bins, pooled):
    """Test every breath metric across the two categories."""
    result = client.post("/compare", {
        "database": database,
        "comparison": comparison,
        "test": test_name,
        "out_dir": out_dir,
        "bins": bins,
        "pooled": pooled,
    })
    for row in result["rows"]:
        click.echo(f"{row['metric_name']:>10}  p={row['p_value']:.5f}")
    click.echo(f"table: {result['table']}")
    click.echo(f"histograms: {result['histograms']}")
    click.echo(f"manifest: {result['manifest']}")


@main.command()
@click.argument("database", type=click.Path())
@click.option("--rest-config", required=True, type=click.Path(),
              help="JSON rest windows and PEP threshold per subject.")
@click.option("--exclusions", default=None, type=click.Path(),
              help="CSV of sigh sequences to exclude.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for tables.")
@click.option("--sigh-duration-min", default=SIGH_DURATION_MIN_S,
              show_default=True,
              help="Minimum sigh breath duration in seconds.")
@click.option("--context-depth", default=N_CONTEXT, show_default=True,
              help="Breaths per side pooled for the pre/post test.")
@click.option("--pooled", is_flag=True,
              help="Pooled-variance t-test instead of unequal variances.")
@click.pass_obj
def sigh(client, database, rest_config, exclusions, out_dir,
         sigh_duration_min, context_depth, pooled):
    """Detect sighs and test metrics before and after them."""
    result = client.post("/sigh", {
        "database": database,
        "rest_config": rest_config,
        "exclusions": exclusions,
        "out_dir": out_dir,
        "sigh_duration_min_s": sigh_duration_min,
        "context_depth": context_depth,
        "pooled": pooled,
    })
    for message in result["warnings"]:
        click.echo(f"warning: {message}", err=True)
    c = result["counters"]
    click.echo(f"{c['sighs_kept']} sighs analyzed "
               f"({c['sighs_detected']} detected)")
    for row in result["rows"]:
        if row["sigh_impact"] is None:
            continue
        click.echo(
            f"{row['metric_name']:>10}  {row['comparison_type']:<8} "
            f"impact={row['sigh_impact']:.5f}"
        )
    click.echo(f"aggregates: {result['aggregates']}")
    click.echo(f"table: {result['table']}")
    click.echo(f"manifest: {result['manifest']}")


@main.command()
@click.argument("profile", type=click.Path())
@click.option("--out-edf", required=True, type=click.Path(),
              help="EDF file to write.")
@click.option("--out-truth", required=True, type=click.Path(),
              help="Ground-truth CSV to write.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Manifest directory [default: the EDF's directory].")
@click.option("--channel-label", default="flow", show_default=True,
              help="Signal label written into the EDF.")
@click.pass_obj
def synth(client, profile, out_edf, out_truth, out_dir, channel_label):
    """Render a synthetic recording from a profile JSON."""
    result = client.post("/synth", {
        "profile": profile,
        "out_edf": out_edf,
        "out_truth": out_truth,
        "out_dir": out_dir,
        "channel_label": channel_label,
    })
    click.echo(f"{result['breaths']} breaths")
    click.echo(f"edf: {result['edf']}")
    click.echo(f"truth: {result['truth']}")
    click.echo(f"manifest: {result['manifest']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the analysis service over HTTP."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()

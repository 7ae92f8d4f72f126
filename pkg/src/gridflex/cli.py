"""Thin command-line client of the aggregator service.

Every subcommand builds a request, sends it to the service (in-process by
default, or a remote instance via --server), and writes the returned CSV
payloads under --out.  `simulate` exits nonzero unless every violation
counter is zero.
"""

from __future__ import annotations

import json
import pathlib
import sys

import click
import httpx

from .harness import bundled_scenarios


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    # in-process client against the bundled service
    from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _scenario(config, scenario, seed) -> dict:
    if config and scenario:
        raise click.UsageError("give either --config or --scenario, not both")
    if config:
        data = json.loads(pathlib.Path(config).read_text())
    else:
        name = scenario or "winter"
        table = bundled_scenarios()
        if name not in table:
            raise click.UsageError(
                f"unknown scenario {name!r}; available: {sorted(table)}")
        data = table[name].to_dict()
    if seed is not None:
        data["master_seed"] = seed
    return data


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): "
                                   f"{detail}")
    return resp.json()


def _write(out_dir: str, name: str, text: str) -> None:
    path = pathlib.Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    target.write_text(text)
    click.echo(f"wrote {target}")


def _common(fn):
    fn = click.option("--config", type=click.Path(exists=True),
                      help="scenario config JSON")(fn)
    fn = click.option("--scenario", type=str, default=None,
                      help="bundled scenario name")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="override the master seed")(fn)
    fn = click.option("--out", type=click.Path(), default="out",
                      help="output directory")(fn)
    fn = click.option("--server", type=str, default=None,
                      help="remote service URL (default: in-process)")(fn)
    return fn


@click.group()
def main():
    """Robust frequency-reserve scheduling for building aggregations."""


@main.command()
@_common
@click.option("--oracle", is_flag=True,
              help="verify the schedule against enumerated/sampled signals")
def schedule(config, scenario, seed, out, server, oracle):
    """One daily scheduling solve from the given configuration."""
    with _client(server) as client:
        data = _post(client, "/schedule",
                     {"scenario": _scenario(config, scenario, seed),
                      "oracle": oracle})
    _write(out, "schedule.csv", data["schedule_csv"])
    _write(out, "schedule_summary.csv", data["summary_csv"])
    click.echo(f"objective {data['objective']:.4f}  method {data['method']}  "
               f"committed {data['committed_capacity_kw']:.2f} kW")
    if oracle:
        click.echo(f"oracle ok={data['oracle_ok']} "
                   f"worst margin {data['oracle_worst_margin']:.3e}")
        if not data["oracle_ok"]:
            sys.exit(1)


@main.command()
@_common
@click.option("--oracle", is_flag=True,
              help="drive 200 sampled admissible signals through day replays")
@click.option("--mc-signals", type=int, default=0)
@click.option("--signal-file", type=click.Path(exists=True), default=None,
              help="realized signal CSV (timestamp_s, w)")
def simulate(config, scenario, seed, out, server, oracle, mc_signals,
             signal_file):
    """Closed-loop run: daily scheduling, half-hourly control, dispatch."""
    payload = {"scenario": _scenario(config, scenario, seed),
               "oracle": oracle, "mc_signals": mc_signals,
               "include_log": True}
    if signal_file:
        payload["signal_csv"] = pathlib.Path(signal_file).read_text()
    with _client(server) as client:
        data = _post(client, "/simulate", payload)
    _write(out, "summary.csv", data["summary_csv"])
    _write(out, "allocation.csv", data["allocation_csv"])
    _write(out, "schedule_day0.csv", data["schedule_csv"])
    if data.get("log_csv"):
        _write(out, "log.csv", data["log_csv"])
    _write(out, "report.txt", data["report_text"])
    violations = data["comfort_violations"] + data["input_violations"]
    if data.get("mc_runs"):
        violations += (data["mc_comfort_violations"]
                       + data["mc_input_violations"])
        click.echo(f"monte-carlo runs {data['mc_runs']}: "
                   f"{data['mc_comfort_violations']} comfort / "
                   f"{data['mc_input_violations']} input violations")
    click.echo(f"capacity avg {data['average_capacity_kw']:.2f} kW  "
               f"consumption delta {data['consumption_delta_pct']:.1f}%  "
               f"violations {violations}")
    if violations:
        sys.exit(1)


@main.command("sweep-bid")
@_common
@click.option("--ratios", type=str, default="0.4,0.6,0.8,0.99,1.01,1.1,1.3",
              help="comma-separated payment ratios")
def sweep_bid(config, scenario, seed, out, server, ratios):
    """Committed capacity against the payment ratio (bid curves)."""
    ratio_list = [float(v) for v in ratios.split(",") if v]
    with _client(server) as client:
        data = _post(client, "/sweep/bid",
                     {"scenario": _scenario(config, scenario, seed),
                      "ratios": ratio_list})
    _write(out, "bid_curve.csv", data["csv"])


@main.command("sweep-te")
@_common
@click.option("--t-hours", "t_hours", type=str, default="1,2,4,6,8,12")
@click.option("--eps", type=str,
              default="0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5")
def sweep_te(config, scenario, seed, out, server, t_hours, eps):
    """Scheduling-level capacity grid over averaging period and bias."""
    with _client(server) as client:
        data = _post(client, "/sweep/te",
                     {"scenario": _scenario(config, scenario, seed),
                      "t_hours": [float(v) for v in t_hours.split(",") if v],
                      "eps": [float(v) for v in eps.split(",") if v]})
    _write(out, "te_grid.csv", data["csv"])


@main.command("analyze-signal")
@click.option("--signal-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=2024)
@click.option("--days", type=int, default=14)
@click.option("--t-hours", "t_hours", type=str, default="1,2,4,6,8,12")
@click.option("--out", type=click.Path(), default="out")
@click.option("--server", type=str, default=None)
def analyze_signal(signal_file, seed, days, t_hours, out, server):
    """Windowed-bias table of a signal and its fast component."""
    payload = {"seed": seed, "n_days": days,
               "t_hours": [float(v) for v in t_hours.split(",") if v]}
    if signal_file:
        payload["signal_csv"] = pathlib.Path(signal_file).read_text()
    with _client(server) as client:
        data = _post(client, "/signal/analyze", payload)
    _write(out, "bias_table.csv", data["csv"])
    for row in data["rows"]:
        click.echo(f"T={row['t_hours']:g}h  signal {row['signal_bias']:.3f}  "
                   f"fast {row['hf_bias']:.3f}")


@main.command("filter-signal")
@click.option("--signal-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=2024)
@click.option("--days", type=int, default=2)
@click.option("--t-hours", "t_hours", type=float, default=2.0)
@click.option("--order", type=int, default=3)
@click.option("--ripple-db", type=float, default=0.5)
@click.option("--out", type=click.Path(), default="out")
@click.option("--server", type=str, default=None)
def filter_signal(signal_file, seed, days, t_hours, order, ripple_db, out,
                  server):
    """Split a signal into slow and fast components with a causal filter."""
    payload = {"seed": seed, "n_days": days, "t_hours": t_hours,
               "filter_order": order, "ripple_db": ripple_db,
               "include_signals": True}
    if signal_file:
        payload["signal_csv"] = pathlib.Path(signal_file).read_text()
    with _client(server) as client:
        data = _post(client, "/signal/filter", payload)
    spec = {k: data[k] for k in ("order", "edge_hz", "ripple_db", "b", "a",
                                 "stable", "lf_clip_count", "hf_clip_count",
                                 "hf_bias")}
    _write(out, "filter_spec.json", json.dumps(spec, indent=1))
    if data.get("lf_csv"):
        _write(out, "lf.csv", data["lf_csv"])
    if data.get("hf_csv"):
        _write(out, "hf.csv", data["hf_csv"])
    click.echo(f"filter order {data['order']} edge {data['edge_hz']:.3e} Hz "
               f"stable={data['stable']}")


@main.command()
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--port", type=int, default=8342)
def serve(host, port):
    """Run the aggregator service."""
    import uvicorn

    uvicorn.run("gridflex.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()

"""Command-line surface.

Offline commands (`topo`, `qot`, `netops`, `alarms`, `rag`, `agent chat`,
`eval run`) drive the library directly and print structured JSON, so the
same numbers are reachable with or without a server.  `serve` hosts the
HTTP gateway, and the `gw` group is a thin HTTP client with one
subcommand per gateway endpoint.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from . import alarms as alarms_mod
from . import netops, qot, rag
from .agent import (
    Agent,
    AgentConfig,
    AgentSession,
    ApprovalGate,
    ApprovalRequest,
    StaticApprovalGate,
    TicketHandle,
    Transcript,
)
from .bundled import (
    load_backend_fixture,
    load_bundled_topology,
    load_knowledge_store,
    load_manual_store,
    load_rulebase,
)
from .errors import LightopsError
from .evalharness import ConfigCondition, EvalTask, run_matrix
from .gateway import GatewayConfig, SessionManager, create_app, load_gateway_config
from .netmodel import (
    Modulation,
    generate_synthetic_topology,
    grid_channels,
    load_demands,
    load_topology,
    save_topology,
)


def _emit(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(str(exc))


def _load_topo(ref: str):
    if ref == "bundled":
        return load_bundled_topology()
    return load_topology(ref)


@click.group()
def main() -> None:
    """Optical-network digital twin, alarm triage, and agent gateway."""


# ---------------------------------------------------------------------------
# topo


@main.group()
def topo() -> None:
    """Topology files: generate and validate."""


@topo.command("gen")
@click.option("--nodes", type=int, required=True, help="Node count.")
@click.option("--links", type=int, required=True, help="Link count.")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def topo_gen(nodes: int, links: int, seed: int, out_path: str) -> None:
    """Generate a synthetic continental topology and write it to a file."""
    try:
        topology = generate_synthetic_topology(nodes, links, seed=seed)
        save_topology(topology, out_path)
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit(
        {
            "out": out_path,
            "nodes": len(topology.nodes),
            "links": len(topology.links),
            "seed": seed,
        }
    )


@topo.command("validate")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def topo_validate(path: str) -> None:
    """Load a topology file and report whether it is valid."""
    try:
        topology = load_topology(path)
    except LightopsError as exc:
        _emit({"path": path, "valid": False, "errors": str(exc).split("; ")})
        sys.exit(1)
    _emit(
        {
            "path": path,
            "valid": True,
            "nodes": len(topology.nodes),
            "links": len(topology.links),
            "channels_per_link": len(grid_channels(topology.grid)),
        }
    )


# ---------------------------------------------------------------------------
# qot


@main.group("qot")
def qot_group() -> None:
    """GN-model quality-of-transmission estimates."""


@qot_group.command("estimate")
@click.option("--topo", "topo_ref", default="bundled", show_default=True,
              help="Topology file, or 'bundled'.")
@click.option("--route", required=True, help="Comma-separated node ids, e.g. A,B,C.")
@click.option("--power-dbm", type=float, default=0.0, show_default=True)
@click.option("--modulation", type=click.Choice([m.value for m in Modulation]),
              default="16QAM", show_default=True)
@click.option("--channel", type=int, default=0, show_default=True,
              help="Channel index to launch.")
@click.option("--per-link", is_flag=True, help="Include the after-each-link breakdown.")
def qot_estimate(topo_ref: str, route: str, power_dbm: float, modulation: str,
                 channel: int, per_link: bool) -> None:
    """Estimate GSNR for one channel launched over an explicit node route."""
    try:
        topology = _load_topo(topo_ref)
        names = [n.strip() for n in route.split(",") if n.strip()]
        if len(names) < 2:
            raise click.ClickException("route needs at least two node ids")
        by_pair = {}
        for link in topology.links:
            a, b = link.endpoints
            by_pair[(a, b)] = link
            by_pair[(b, a)] = link
        links = []
        for a, b in zip(names, names[1:]):
            link = by_pair.get((a, b))
            if link is None:
                raise click.ClickException(f"no link between {a} and {b}")
            links.append(link)
        report = qot.estimate_gsnr(
            links,
            [qot.ChannelLaunch(channel, qot.dbm_to_w(power_dbm))],
            topology.grid,
            Modulation(modulation),
        )
    except LightopsError as exc:
        raise _fail(exc) from exc
    out = report.to_dict()
    if not per_link:
        out.pop("links")
    out["route"] = names
    _emit(out)


# ---------------------------------------------------------------------------
# netops


@main.group("netops")
def netops_group() -> None:
    """Routing, spectrum assignment, analysis, and launch-power tuning."""


@netops_group.command("provision")
@click.option("--topo", "topo_ref", default="bundled", show_default=True)
@click.option("--demands", "demands_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSON list of {id, src, dst, launch_power_dbm, modulation}.")
@click.option("--k", type=int, default=3, show_default=True, help="Candidate routes per demand.")
def netops_provision(topo_ref: str, demands_path: str, k: int) -> None:
    """Route demands with first-fit spectrum and print the allocation report."""
    try:
        topology = _load_topo(topo_ref)
        demands = load_demands(demands_path)
        report = netops.provision(demands, topology, k=k)
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit(report.to_dict())


@netops_group.command("optimize")
@click.option("--topo", "topo_ref", default="bundled", show_default=True)
@click.option("--demands", "demands_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--step", type=float, default=0.5, show_default=True, help="Move size, dB.")
@click.option("--rounds", type=int, default=50, show_default=True, help="Round cap.")
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--bounds", default="-4,4", show_default=True,
              help="Launch-power bounds, dBm, as lo,hi.")
def netops_optimize(topo_ref: str, demands_path: str, step: float, rounds: int,
                    k: int, bounds: str) -> None:
    """Coordinate-ascent launch-power optimization; prints the trace."""
    try:
        lo, hi = (float(x) for x in bounds.split(","))
    except ValueError as exc:
        raise click.ClickException("bounds must be lo,hi") from exc
    try:
        topology = _load_topo(topo_ref)
        demands = load_demands(demands_path)
        trace = netops.optimize_launch_power(
            demands, topology, bounds_dbm=(lo, hi), step_db=step, max_rounds=rounds, k=k
        )
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit(trace.to_dict())


# ---------------------------------------------------------------------------
# alarms


@main.group("alarms")
def alarms_group() -> None:
    """Alarm compression, correlation, ranking, and handling suggestions."""


@alarms_group.command("analyze")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Line-delimited alarm records.")
@click.option("--manual", "manual_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Handling-manual directory; bundled manual when omitted.")
@click.option("--weights", default="0.5,0.3,0.2", show_default=True,
              help="severity,frequency,correlation weights.")
@click.option("--k", type=int, default=3, show_default=True, help="Manual chunks per suggestion.")
def alarms_analyze(in_path: str, manual_dir: str | None, weights: str, k: int) -> None:
    """Compress an alarm file, rank the events, and suggest handling for rank 1."""
    try:
        w = tuple(float(x) for x in weights.split(","))
    except ValueError as exc:
        raise click.ClickException("weights must be three comma-separated numbers") from exc
    if len(w) != 3:
        raise click.ClickException("weights must be three comma-separated numbers")
    try:
        text = Path(in_path).read_text(encoding="utf-8")
        alarms, errors = alarms_mod.parse_alarm_lines(text)
        if not alarms:
            raise click.ClickException("no alarms parsed from input")
        if manual_dir is None:
            manual = load_manual_store()
        else:
            docs = rag.load_directory(manual_dir, kind=rag.DocKind.MANUAL)
            manual = rag.VectorStore()
            rag.index_documents(manual, docs)
        batches = alarms_mod.window_batches(alarms)
        batch = batches[0]
        events = alarms_mod.compress(batch)
        matrix = alarms_mod.correlate(events, rag.embed, rulebase=load_rulebase())
        ranking = alarms_mod.priority_scores(events, matrix, weights=w)
        suggestion = alarms_mod.suggest(ranking[0], manual.retrieve, k=k)
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit(
        {
            "parse_errors": errors,
            "batches": len(batches),
            "window": {"start": batch.window_start, "end": batch.window_end,
                       "size": len(batch.alarms)},
            "events": [e.to_dict() for e in events],
            "ranking": [r.to_dict() for r in ranking],
            "suggestion": suggestion.to_dict(),
        }
    )


# ---------------------------------------------------------------------------
# rag


@main.group("rag")
def rag_group() -> None:
    """Deterministic retrieval: index directories, query stores."""


@rag_group.command("index")
@click.option("--dir", "dir_path", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--kind", type=click.Choice([k.value for k in rag.DocKind]),
              default="knowledge", show_default=True)
def rag_index(dir_path: str, out_path: str, kind: str) -> None:
    """Chunk and embed every document in a directory into a store file."""
    try:
        docs = rag.load_directory(dir_path, kind=rag.DocKind(kind))
        store = rag.VectorStore()
        rag.index_documents(store, docs)
        store.save(out_path)
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit({"out": out_path, "documents": len(docs), "chunks": len(store)})


@rag_group.command("query")
@click.option("--store", "store_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--text", required=True)
@click.option("--k", type=int, default=5, show_default=True)
def rag_query(store_path: str, text: str, k: int) -> None:
    """Print the top-k chunks for a query against a saved store."""
    try:
        store = rag.VectorStore.load(store_path)
        hits = store.retrieve(text, k=k)
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit([{"ref": h.chunk.ref, "score": h.score, "text": h.chunk.text} for h in hits])


# ---------------------------------------------------------------------------
# agent


class _PromptApprovalGate(ApprovalGate):
    """Asks on the terminal; falls back to reject when stdin is not a TTY."""

    def __init__(self):
        self._count = 0

    def open(self, request: ApprovalRequest) -> TicketHandle:
        self._count += 1
        ticket_id = f"cli-{self._count:04d}"

        def waiter() -> tuple[str, str]:
            click.echo(f"[approval] {request.action}: {request.description}")
            click.echo(f"[approval] proposed: {json.dumps(request.proposed, sort_keys=True)}")
            if not sys.stdin.isatty():
                return "REJECTED", "no interactive approval channel"
            if click.confirm("Approve this mutation?", default=False):
                return "APPROVED", "approved at the terminal"
            return "REJECTED", "rejected at the terminal"

        return TicketHandle(ticket_id, waiter)


@main.group("agent")
def agent_group() -> None:
    """Run the five-step agent locally."""


@agent_group.command("chat")
@click.option("--query", default=None, help="One-shot query; omit for a REPL.")
@click.option("--topo", "topo_ref", default="bundled", show_default=True)
@click.option("--demands", "demands_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Optional JSON demand list to provision against.")
@click.option("--alarms", "alarms_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Optional line-delimited alarm records to preload.")
@click.option("--approve-mutations", is_flag=True,
              help="Approve mutating tools without prompting.")
@click.option("--condition", type=click.Choice([c.value for c in ConfigCondition]),
              default=None, help="Run under an evaluation prompting condition.")
@click.option("--show-transcript", is_flag=True, help="Dump the full step transcript as JSON.")
def agent_chat(query: str | None, topo_ref: str, demands_path: str | None,
               alarms_path: str | None, approve_mutations: bool,
               condition: str | None, show_transcript: bool) -> None:
    """Chat with the agent against a local in-process session."""
    try:
        topology = _load_topo(topo_ref)
        session = AgentSession(
            topology=topology,
            demands=load_demands(demands_path) if demands_path else [],
            knowledge=load_knowledge_store(),
            manual=load_manual_store(),
            rulebase=load_rulebase(),
        )
        if alarms_path:
            parsed, errors = alarms_mod.parse_alarm_lines(
                Path(alarms_path).read_text(encoding="utf-8")
            )
            session.alarms.extend(parsed)
            for err in errors:
                click.echo(f"[alarms] line {err['line']}: {err['error']}", err=True)
        backend = load_backend_fixture()
        gate: ApprovalGate
        if approve_mutations:
            gate = StaticApprovalGate("APPROVED", note="approved from the command line")
        else:
            gate = _PromptApprovalGate()
    except LightopsError as exc:
        raise _fail(exc) from exc

    def run_one(q: str, start_seq: int) -> int:
        def on_record(record):
            click.echo(f"[{record.seq:03d}] {record.step.value}")

        transcript = Transcript(start_seq=start_seq, listener=on_record)
        if condition:
            from .evalharness import condition_config

            config = condition_config(ConfigCondition(condition), q, backend,
                                      approval_gate=gate)
        else:
            config = AgentConfig(backend=backend, approval_gate=gate)
        result = Agent(config).run(q, session, transcript)
        click.echo("")
        if result.answer is not None:
            click.echo(result.answer.text)
        else:
            click.echo(f"run ended {result.status.value}: {result.error}")
        if show_transcript:
            _emit(transcript.to_jsonable())
        return transcript.records[-1].seq + 1 if transcript.records else start_seq

    if query is not None:
        run_one(query, 0)
        return
    click.echo("interactive session; empty line exits")
    seq = 0
    while True:
        try:
            line = click.prompt("you", default="", show_default=False)
        except click.Abort:
            break
        if not line.strip():
            break
        seq = run_one(line, seq)


# ---------------------------------------------------------------------------
# eval


@main.group("eval")
def eval_group() -> None:
    """Prompting-strategy evaluation matrix."""


@eval_group.command("run")
@click.option("--tasks", default="all", show_default=True,
              help="Comma-separated task names, or 'all'.")
@click.option("--conditions", default="all", show_default=True,
              help="Comma-separated condition names, or 'all'.")
@click.option("--n", "n_per_cell", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=11, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def eval_run(tasks: str, conditions: str, n_per_cell: int, seed: int, out_dir: str) -> None:
    """Run the task x condition matrix and write report.json / report.csv."""
    try:
        task_values = None if tasks == "all" else [EvalTask(t.strip()) for t in tasks.split(",")]
        cond_values = (
            None if conditions == "all"
            else [ConfigCondition(c.strip()) for c in conditions.split(",")]
        )
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc

    def progress(cell) -> None:
        click.echo(
            f"{cell.task_type.value:26s} {cell.condition.value:18s} "
            f"acc={cell.mean_accuracy:.3f} sim={cell.mean_similarity:.3f}",
            err=True,
        )

    try:
        report = run_matrix(
            tasks=task_values,
            conditions=cond_values,
            n_per_cell=n_per_cell,
            seed=seed,
            progress=progress,
        )
        json_path, csv_path = report.write(out_dir)
    except LightopsError as exc:
        raise _fail(exc) from exc
    _emit({"out": {"json": str(json_path), "csv": str(csv_path)},
           "cells": len(report.cells), "rows": len(report.rows), "seed": seed})


# ---------------------------------------------------------------------------
# serve


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON gateway config; environment variables override it.")
@click.option("--host", default=None, help="Bind host override.")
@click.option("--port", type=int, default=None, help="Bind port override.")
@click.option("--data-dir", default=None, help="Data directory override.")
def serve(config_path: str | None, host: str | None, port: int | None,
          data_dir: str | None) -> None:
    """Host the HTTP gateway."""
    import uvicorn

    try:
        cfg = load_gateway_config(config_path)
    except LightopsError as exc:
        raise _fail(exc) from exc
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    if data_dir:
        cfg.data_dir = Path(data_dir)
    app = create_app(cfg)
    click.echo(f"serving on http://{cfg.host}:{cfg.port} (data in {cfg.data_dir})", err=True)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")


# ---------------------------------------------------------------------------
# gw: HTTP client, one subcommand per endpoint


@main.group("gw")
@click.option("--url", default="http://127.0.0.1:8787", show_default=True,
              envvar="LIGHTOPS_GATEWAY_URL", help="Gateway base URL.")
@click.option("--token", default="", envvar="LIGHTOPS_AUTH_TOKEN",
              help="Bearer token when the gateway requires auth.")
@click.pass_context
def gw(ctx: click.Context, url: str, token: str) -> None:
    """Talk to a running gateway."""
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    ctx.obj = httpx.Client(base_url=url.rstrip("/"), headers=headers, timeout=30.0)


def _gw_call(client: httpx.Client, method: str, path: str, **kwargs):
    try:
        response = client.request(method, path, **kwargs)
    except httpx.HTTPError as exc:
        raise click.ClickException(f"gateway unreachable: {exc}") from exc
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"HTTP {response.status_code}: {detail}")
    return response.json()


@gw.command("create-session")
@click.option("--topology", default=None, help="Topology file path, or 'bundled'.")
@click.option("--demands", "demands_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.pass_obj
def gw_create_session(client: httpx.Client, topology: str | None,
                      demands_path: str | None) -> None:
    """POST /api/sessions"""
    body: dict = {}
    if topology:
        body["topology"] = topology
    if demands_path:
        body["demands"] = json.loads(Path(demands_path).read_text(encoding="utf-8"))
    _emit(_gw_call(client, "POST", "/api/sessions", json=body))


@gw.command("sessions")
@click.pass_obj
def gw_sessions(client: httpx.Client) -> None:
    """GET /api/sessions"""
    _emit(_gw_call(client, "GET", "/api/sessions"))


@gw.command("query")
@click.argument("session_id")
@click.argument("query_text")
@click.option("--condition", default=None)
@click.pass_obj
def gw_query(client: httpx.Client, session_id: str, query_text: str,
             condition: str | None) -> None:
    """POST /api/sessions/{id}/query"""
    body = {"query": query_text}
    if condition:
        body["condition"] = condition
    _emit(_gw_call(client, "POST", f"/api/sessions/{session_id}/query", json=body))


@gw.command("events")
@click.argument("session_id")
@click.option("--from-seq", type=int, default=0, show_default=True)
@click.pass_obj
def gw_events(client: httpx.Client, session_id: str, from_seq: int) -> None:
    """GET /api/sessions/{id}/events (prints each SSE event line)"""
    try:
        with client.stream(
            "GET",
            f"/api/sessions/{session_id}/events",
            params={"from_seq": from_seq},
            timeout=httpx.Timeout(30.0, read=None),
        ) as response:
            if response.status_code >= 400:
                raise click.ClickException(f"HTTP {response.status_code}")
            for line in response.iter_lines():
                if line:
                    click.echo(line)
    except httpx.HTTPError as exc:
        raise click.ClickException(f"gateway unreachable: {exc}") from exc


@gw.command("transcript")
@click.argument("session_id")
@click.argument("job_id")
@click.pass_obj
def gw_transcript(client: httpx.Client, session_id: str, job_id: str) -> None:
    """GET /api/sessions/{id}/transcripts/{job}"""
    _emit(_gw_call(client, "GET", f"/api/sessions/{session_id}/transcripts/{job_id}"))


@gw.command("alarms")
@click.argument("session_id")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Line-delimited alarm records to ingest.")
@click.pass_obj
def gw_alarms(client: httpx.Client, session_id: str, in_path: str) -> None:
    """POST /api/sessions/{id}/alarms"""
    text = Path(in_path).read_text(encoding="utf-8")
    _emit(_gw_call(client, "POST", f"/api/sessions/{session_id}/alarms",
                   json={"text": text}))


@gw.command("state")
@click.argument("session_id")
@click.pass_obj
def gw_state(client: httpx.Client, session_id: str) -> None:
    """GET /api/network/{id}/state"""
    _emit(_gw_call(client, "GET", f"/api/network/{session_id}/state"))


@gw.command("gsnr")
@click.argument("session_id")
@click.option("--service", required=True)
@click.pass_obj
def gw_gsnr(client: httpx.Client, session_id: str, service: str) -> None:
    """GET /api/network/{id}/gsnr?service="""
    _emit(_gw_call(client, "GET", f"/api/network/{session_id}/gsnr",
                   params={"service": service}))


@gw.command("approve")
@click.argument("ticket_id")
@click.option("--decision", type=click.Choice(["APPROVED", "REJECTED"]), required=True)
@click.option("--note", default="")
@click.pass_obj
def gw_approve(client: httpx.Client, ticket_id: str, decision: str, note: str) -> None:
    """POST /api/approvals/{ticket}"""
    _emit(_gw_call(client, "POST", f"/api/approvals/{ticket_id}",
                   json={"decision": decision, "note": note}))


@gw.command("tickets")
@click.argument("session_id")
@click.pass_obj
def gw_tickets(client: httpx.Client, session_id: str) -> None:
    """GET /api/sessions/{id}/tickets"""
    _emit(_gw_call(client, "GET", f"/api/sessions/{session_id}/tickets"))


@gw.command("eval-run")
@click.option("--tasks", default="all", show_default=True)
@click.option("--conditions", default="all", show_default=True)
@click.option("--n", "n_per_cell", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=11, show_default=True)
@click.pass_obj
def gw_eval_run(client: httpx.Client, tasks: str, conditions: str,
                n_per_cell: int, seed: int) -> None:
    """POST /api/eval/run"""
    body: dict = {"n_per_cell": n_per_cell, "seed": seed}
    if tasks != "all":
        body["tasks"] = [t.strip() for t in tasks.split(",")]
    if conditions != "all":
        body["conditions"] = [c.strip() for c in conditions.split(",")]
    _emit(_gw_call(client, "POST", "/api/eval/run", json=body))


@gw.command("eval-status")
@click.argument("run_id")
@click.pass_obj
def gw_eval_status(client: httpx.Client, run_id: str) -> None:
    """GET /api/eval/runs/{id}"""
    _emit(_gw_call(client, "GET", f"/api/eval/runs/{run_id}"))


if __name__ == "__main__":
    main()

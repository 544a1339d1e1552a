"""Command-line client for the group-testing design service.

Every subcommand talks HTTP to the service layer: against a remote server
when ``--server`` (or ``GTDP_SERVER``) is set, otherwise against an
in-process instance of the same application, so both paths exercise identical
request handling. Expected values print with 5 decimals in human output and
full precision in JSON/CSV.

Exit codes: 0 success; 1 failed verification or integrity errors; 2 domain
errors (invalid parameters, unknown names, protocol misuse); 3 resource
refusals (enumeration or memory budgets).
"""

from __future__ import annotations

import json
import sys

import click
import httpx

__all__ = ["main"]

_EXIT_DOMAIN = 2
_EXIT_RESOURCE = 3
_EXIT_FAILURE = 1


class ServiceClient:
    """Minimal JSON-over-HTTP wrapper with service exit-code mapping."""

    def __init__(self, server: str | None, cache_dir: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient

            from .service.app import create_app
            from .store import TableProvider

            self._client = TestClient(create_app(TableProvider(cache_dir)))

    def _finish(self, response) -> dict | None:
        if response.status_code < 400:
            return None if response.status_code == 204 else response.json()
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        if isinstance(detail, list):  # request-model validation report
            detail = "; ".join(
                f"{'.'.join(str(p) for p in item.get('loc', []))}: {item.get('msg', '')}"
                for item in detail
            )
        click.echo(f"error: {detail}", err=True)
        if response.status_code in (400, 404, 422):
            sys.exit(_EXIT_DOMAIN)
        if response.status_code == 507:
            sys.exit(_EXIT_RESOURCE)
        sys.exit(_EXIT_FAILURE)

    def post(self, path: str, payload: dict) -> dict:
        return self._finish(self._client.post(path, json=payload))

    def get(self, path: str) -> dict:
        return self._finish(self._client.get(path))

    def delete(self, path: str) -> None:
        response = self._client.delete(path)
        if response.status_code >= 400 and response.status_code != 404:
            self._finish(response)


@click.group()
@click.option("--server", envvar="GTDP_SERVER", default=None, metavar="URL",
              help="Remote service URL; default is an in-process service.")
@click.option("--cache-dir", envvar="GTDP_CACHE_DIR", default=None, metavar="DIR",
              help="Table cache directory for the in-process service.")
@click.pass_context
def main(ctx: click.Context, server: str | None, cache_dir: str | None) -> None:
    """Design and verify nested group-testing procedures."""
    ctx.obj = {"server": server, "cache_dir": cache_dir}


def _client(ctx_obj: dict) -> ServiceClient:
    return ServiceClient(ctx_obj["server"], ctx_obj["cache_dir"])


_PROC = click.option("--proc", "procedure", type=click.Choice(["r1", "r3"]), required=True,
                     help="r1 = optimal nested, r3 = restricted nested.")
_Q = click.option("--q", type=float, required=True, help="Per-unit probability of being good.")
_CAP = click.option("--cap-to-nmax", is_flag=True,
                    help="Cap the restricted engine's first-test search at n_max.")
_WIN = click.option("--windowed", is_flag=True,
                    help="Use the windowed scan for the optimal nested build.")


def _payload(procedure: str, q: float, cap_to_nmax: bool, windowed: bool, **extra) -> dict:
    return {"procedure": procedure, "q": q, "cap_to_nmax": cap_to_nmax,
            "windowed": windowed, **extra}


@main.command()
@_PROC
@_Q
@click.option("--n", type=int, required=True, help="Population size.")
@_CAP
@_WIN
@click.option("--format", "fmt", type=click.Choice(["human", "json"]), default="human")
@click.pass_obj
def value(ctx_obj, procedure, q, n, cap_to_nmax, windowed, fmt) -> None:
    """Expected tests, first-test size, and bounds for one population size."""
    report = _client(ctx_obj).post("/value", _payload(procedure, q, cap_to_nmax, windowed, n=n))
    if fmt == "json":
        click.echo(json.dumps(report))
        return
    source = "cache" if report["from_cache"] else "computed"
    click.echo(f"procedure: {report['procedure']}")
    click.echo(f"q: {report['q']}")
    click.echo(f"n: {report['n']}")
    click.echo(f"expected tests: {report['expected_tests']:.5f}")
    click.echo(f"first test size: {report['first_test']}")
    click.echo(f"info bound: {report['info_bound']:.5f}")
    click.echo(f"source: {source} ({report['elapsed_ms']:.1f} ms)")


@main.command()
@_PROC
@_Q
@click.option("--n-lo", type=int, required=True, help="First population size (inclusive).")
@click.option("--n-hi", type=int, required=True, help="Last population size (inclusive).")
@_CAP
@_WIN
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.pass_obj
def table(ctx_obj, procedure, q, n_lo, n_hi, cap_to_nmax, windowed, fmt) -> None:
    """One row per population size: n, expected_tests, first_test."""
    report = _client(ctx_obj).post(
        "/table", _payload(procedure, q, cap_to_nmax, windowed, n_lo=n_lo, n_hi=n_hi)
    )
    if fmt == "json":
        click.echo(json.dumps(report))
        return
    click.echo("n,expected_tests,first_test")
    for row in report["rows"]:
        click.echo(f"{row['n']},{row['expected_tests']!r},{row['first_test']}")


@main.command()
@_Q
@click.option("--n", type=int, required=True, help="Population size.")
@click.option("--format", "fmt", type=click.Choice(["human", "json"]), default="human")
@click.pass_obj
def bounds(ctx_obj, q, n, fmt) -> None:
    """Reference costs: individual testing, best two-stage pooling, entropy floor."""
    report = _client(ctx_obj).post("/bounds", {"q": q, "n": n})
    if fmt == "json":
        click.echo(json.dumps(report))
        return
    click.echo(f"q: {report['q']}")
    click.echo(f"n: {report['n']}")
    click.echo(f"individual tests: {report['individual']:.5f}")
    click.echo(f"best two-stage cost: {report['dorfman_best']:.5f} (group size {report['dorfman_best_k']})")
    click.echo(f"info bound: {report['info_bound']:.5f}")
    click.echo(f"n_max: {report['n_max']}")


@main.command()
@_PROC
@_Q
@click.option("--n", type=int, required=True, help="Population size per trial.")
@click.option("--trials", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@_CAP
@_WIN
@click.option("--format", "fmt", type=click.Choice(["human", "json"]), default="human")
@click.pass_obj
def simulate(ctx_obj, procedure, q, n, trials, seed, workers, cap_to_nmax, windowed, fmt) -> None:
    """Monte Carlo estimate of the expected number of tests."""
    report = _client(ctx_obj).post(
        "/simulate",
        _payload(procedure, q, cap_to_nmax, windowed,
                 n=n, trials=trials, seed=seed, workers=workers),
    )
    if fmt == "json":
        click.echo(json.dumps(report))
        return
    click.echo(f"mean tests: {report['mean']:.5f}")
    click.echo(f"stderr: {report['stderr']:.5f}")
    click.echo(f"trials: {report['trials']}")
    click.echo(f"seed: {report['seed']}")
    click.echo(f"elapsed: {report['elapsed_ms']:.1f} ms")


@main.command()
@click.option("--only", multiple=True, metavar="NAME",
              help="Run only the named claims (repeatable).")
@click.option("--fast", is_flag=True, help="Skip the slow claims (large builds, big Monte Carlo).")
@click.option("--q", type=float, default=0.9999, show_default=True,
              help="Flagship prevalence; override as a negative control.")
@click.option("--format", "fmt", type=click.Choice(["human", "json"]), default="human")
@click.pass_obj
def verify(ctx_obj, only, fast, q, fmt) -> None:
    """Run the reproduction suite; exit 1 if any claim fails."""
    report = _client(ctx_obj).post(
        "/verify",
        {"only": list(only) or None, "include_slow": not fast, "q": q},
    )
    if fmt == "json":
        click.echo(json.dumps(report))
    else:
        for claim in report["claims"]:
            status = "PASS" if claim["passed"] else "FAIL"
            parts = [f"{status} {claim['name']}"]
            if claim["computed"] is not None:
                parts.append(f"computed={claim['computed']:.10g}")
            if claim["expected"] is not None:
                parts.append(f"expected={claim['expected']:.10g}")
            if claim["delta"] is not None:
                parts.append(f"delta={claim['delta']:.3g}")
            if claim["tolerance"] is not None:
                parts.append(f"tol={claim['tolerance']:.3g}")
            budget = f", budget {claim['budget_s']:.0f}s" if claim["budget_s"] else ""
            parts.append(f"({claim['elapsed_s']:.2f}s{budget})")
            if claim["notes"]:
                parts.append(f"[{claim['notes']}]")
            click.echo("  ".join(parts))
        passed = sum(1 for c in report["claims"] if c["passed"])
        click.echo(f"summary: {passed}/{len(report['claims'])} claims passed")
    if not report["passed"]:
        sys.exit(_EXIT_FAILURE)


@main.command()
@_PROC
@_Q
@click.option("--n", type=int, required=True, help="Population size.")
@_CAP
@_WIN
@click.pass_obj
def session(ctx_obj, procedure, q, n, cap_to_nmax, windowed) -> None:
    """Interactive advisory session: follow recommendations, report outcomes.

    Enter ``+`` (positive) or ``-`` (negative) after each recommended test,
    ``state`` to dump the full partition, ``quit`` to stop.
    """
    client = _client(ctx_obj)
    state = client.post("/sessions", _payload(procedure, q, cap_to_nmax, windowed, n=n))
    session_id = state["session_id"]
    try:
        while True:
            if state["complete"]:
                click.echo(
                    f"session complete: {state['classified_good_count']} good, "
                    f"{state['classified_defective_count']} defective in "
                    f"{state['tests_used']} test(s)"
                )
                return
            click.echo(f"test {state['next_group_size']} unit(s): {state['next_group']}")
            while True:
                try:
                    token = input("outcome [+/-/state/quit]> ").strip()
                except EOFError:
                    click.echo()
                    click.echo("end of input; quitting")
                    return
                if token in ("+", "-"):
                    state = client.post(f"/sessions/{session_id}/outcome", {"result": token})
                    unresolved = (
                        state["pool_size"]
                        + state["defective_set_size"]
                        + sum(state["pending_sizes"])
                    )
                    click.echo(
                        f"classified: {state['classified_good_count']} good, "
                        f"{state['classified_defective_count']} defective; "
                        f"unresolved: {unresolved}; tests used: {state['tests_used']}"
                    )
                    break
                if token == "state":
                    _dump_state(client.get(f"/sessions/{session_id}"))
                    continue
                if token == "quit":
                    click.echo("quitting")
                    return
                click.echo(f"unrecognized input {token!r}; enter +, -, state, or quit")
    finally:
        client.delete(f"/sessions/{session_id}")


def _dump_state(state: dict) -> None:
    click.echo(f"pool ({state['pool_size']}): {state['pool']}")
    click.echo(f"defective set ({state['defective_set_size']}): {state['defective_set']}")
    pending = state["pending_sizes"]
    sizes = ", ".join(str(s) for s in pending) if pending else "none"
    click.echo(f"pending subproblems: {len(pending)} (sizes: {sizes})")
    click.echo(f"classified good ({state['classified_good_count']}): {state['classified_good']}")
    click.echo(
        f"classified defective ({state['classified_defective_count']}): "
        f"{state['classified_defective']}"
    )
    click.echo(f"tests used: {state['tests_used']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_obj
def serve(ctx_obj, host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app
    from .store import TableProvider

    uvicorn.run(create_app(TableProvider(ctx_obj["cache_dir"])), host=host, port=port)


if __name__ == "__main__":
    main()

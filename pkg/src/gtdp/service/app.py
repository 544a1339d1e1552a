"""FastAPI application: the single entry point through which the CLI (and any
other client) reaches the engines, simulator, store, and reproduction suite.

Error mapping: domain and protocol violations (bad parameters, out-of-range
states, stale session outcomes) become 400; enumeration and memory budget
refusals become 507 (insufficient storage); store integrity failures become
500; unknown session ids become 404.
"""

from __future__ import annotations

import math
import threading
import time
import uuid

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, baselines
from ..errors import (
    BudgetError,
    ClassificationError,
    DomainError,
    GroupTestingError,
    ProtocolError,
    ResourceBudgetError,
    StoreError,
)
from ..labels import compress_labels
from ..model import make_prevalence
from ..simulator import ExecutionState, apply_outcome, fresh_state, next_group, simulate
from ..store import TableProvider
from ..verification import run_claims
from .schemas import (
    BoundsReport,
    BoundsRequest,
    ClaimModel,
    OutcomeRequest,
    SessionCreateRequest,
    SessionState,
    SimulateReport,
    SimulateRequest,
    TableReport,
    TableRequest,
    TableRow,
    ValueReport,
    ValueRequest,
    VerifyReport,
    VerifyRequest,
)

__all__ = ["app", "create_app"]

_DOMAIN_FAMILY = (DomainError, ProtocolError)
_RESOURCE_FAMILY = (BudgetError, ResourceBudgetError)


class _Session:
    def __init__(self, session_id: str, request: SessionCreateRequest, table):
        self.session_id = session_id
        self.request = request
        self.table = table
        self.procedure = request.procedure.value
        self.state: ExecutionState = fresh_state(request.n)
        self.current_group = next_group(self.state, table)

    def advance(self, positive: bool) -> None:
        if self.current_group is None:
            raise ProtocolError("session is already complete")
        apply_outcome(self.state, self.current_group, positive, self.procedure)
        self.current_group = next_group(self.state, self.table)

    def snapshot(self) -> SessionState:
        state = self.state
        group = self.current_group
        return SessionState(
            session_id=self.session_id,
            procedure=self.request.procedure,
            q=self.request.q,
            n=self.request.n,
            complete=group is None,
            tests_used=state.tests_used,
            next_group=None if group is None else compress_labels(group),
            next_group_size=None if group is None else len(group),
            pool=compress_labels(state.pool),
            pool_size=len(state.pool),
            defective_set=compress_labels(state.defective_set),
            defective_set_size=len(state.defective_set),
            pending_sizes=[len(sub.pool) for sub in state.pending],
            classified_good=compress_labels(state.classified_good),
            classified_good_count=len(state.classified_good),
            classified_defective=compress_labels(state.classified_defective),
            classified_defective_count=len(state.classified_defective),
        )


def _json_safe(value: float | None) -> float | None:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return None
    return value


def create_app(provider: TableProvider | None = None) -> FastAPI:
    """Build the service around ``provider`` (a fresh default one if omitted)."""
    if provider is None:
        provider = TableProvider()
    service = FastAPI(title="gtdp", version=__version__)
    sessions: dict[str, _Session] = {}
    sessions_lock = threading.Lock()

    class _UnknownSession(Exception):
        def __init__(self, session_id: str):
            self.session_id = session_id

    @service.exception_handler(_UnknownSession)
    async def _handle_unknown(request: Request, exc: _UnknownSession):
        return JSONResponse(status_code=404, content={"detail": f"no session {exc.session_id}"})

    @service.exception_handler(GroupTestingError)
    async def _handle_domain(request: Request, exc: GroupTestingError):
        if isinstance(exc, _RESOURCE_FAMILY):
            status = 507
        elif isinstance(exc, (StoreError, ClassificationError)):
            status = 500
        else:
            status = 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    def _get_table(procedure, q: float, n: int, cap_to_nmax: bool, windowed: bool):
        prevalence = make_prevalence(q)
        return prevalence, provider.get(
            procedure.value, prevalence, n,
            cap_to_nmax=cap_to_nmax, windowed=windowed,
        )

    @service.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @service.post("/value", response_model=ValueReport)
    def value(req: ValueRequest) -> ValueReport:
        prevalence, (table, from_cache, seconds) = _get_table(
            req.procedure, req.q, req.n, req.cap_to_nmax, req.windowed
        )
        return ValueReport(
            procedure=req.procedure,
            q=req.q,
            n=req.n,
            expected_tests=table.expected_tests(req.n),
            first_test=table.first_test_size(req.n) if req.n >= 1 else 0,
            info_bound=baselines.info_bound(prevalence, req.n),
            from_cache=from_cache,
            elapsed_ms=seconds * 1000.0,
        )

    @service.post("/table", response_model=TableReport)
    def table_rows(req: TableRequest) -> TableReport:
        if req.n_lo > req.n_hi:
            return TableReport(
                procedure=req.procedure, q=req.q, rows=[], from_cache=True, elapsed_ms=0.0
            )
        _, (table, from_cache, seconds) = _get_table(
            req.procedure, req.q, req.n_hi, req.cap_to_nmax, req.windowed
        )
        rows = [
            TableRow(
                n=n,
                expected_tests=table.expected_tests(n),
                first_test=table.first_test_size(n) if n >= 1 else 0,
            )
            for n in range(req.n_lo, req.n_hi + 1)
        ]
        return TableReport(
            procedure=req.procedure, q=req.q, rows=rows,
            from_cache=from_cache, elapsed_ms=seconds * 1000.0,
        )

    @service.post("/bounds", response_model=BoundsReport)
    def bounds(req: BoundsRequest) -> BoundsReport:
        prevalence = make_prevalence(req.q)
        report = baselines.bound_report(prevalence, req.n)
        return BoundsReport(
            q=req.q,
            n=req.n,
            individual=report.individual,
            dorfman_best=report.dorfman_best,
            dorfman_best_k=report.dorfman_best_k,
            info_bound=report.info_bound,
            n_max=report.n_max,
        )

    @service.post("/simulate", response_model=SimulateReport)
    def run_simulation(req: SimulateRequest) -> SimulateReport:
        _, (table, _, _) = _get_table(
            req.procedure, req.q, req.n, req.cap_to_nmax, req.windowed
        )
        start = time.perf_counter()
        estimate = simulate(table, req.n, trials=req.trials, seed=req.seed, workers=req.workers)
        return SimulateReport(
            procedure=req.procedure,
            q=req.q,
            n=req.n,
            mean=estimate.mean,
            stderr=estimate.stderr,
            trials=estimate.trials,
            seed=estimate.seed,
            elapsed_ms=(time.perf_counter() - start) * 1000.0,
        )

    @service.post("/verify", response_model=VerifyReport)
    def verify(req: VerifyRequest) -> VerifyReport:
        results = run_claims(
            only=req.only,
            include_slow=req.include_slow,
            q=req.q,
            cache_dir=provider.cache_dir,
        )
        claims = [
            ClaimModel(
                name=r.name,
                description=r.description,
                computed=_json_safe(r.computed),
                expected=_json_safe(r.expected),
                delta=_json_safe(r.delta),
                tolerance=_json_safe(r.tolerance),
                passed=r.passed,
                elapsed_s=r.elapsed_s,
                budget_s=r.budget_s,
                notes=r.notes,
            )
            for r in results
        ]
        return VerifyReport(passed=all(c.passed for c in claims), claims=claims)

    @service.post("/sessions", response_model=SessionState)
    def create_session(req: SessionCreateRequest) -> SessionState:
        _, (table, _, _) = _get_table(req.procedure, req.q, req.n, req.cap_to_nmax, req.windowed)
        session = _Session(uuid.uuid4().hex, req, table)
        with sessions_lock:
            sessions[session.session_id] = session
        return session.snapshot()

    def _session_or_404(session_id: str) -> _Session:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise _UnknownSession(session_id)
        return session

    @service.get("/sessions/{session_id}", response_model=SessionState)
    def get_session(session_id: str) -> SessionState:
        return _session_or_404(session_id).snapshot()

    @service.post("/sessions/{session_id}/outcome", response_model=SessionState)
    def post_outcome(session_id: str, req: OutcomeRequest) -> SessionState:
        session = _session_or_404(session_id)
        session.advance(req.result == "+")
        return session.snapshot()

    @service.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> None:
        with sessions_lock:
            if sessions.pop(session_id, None) is None:
                raise _UnknownSession(session_id)

    return service


app = create_app()

"""Host side of the subprocess estimator protocol.

Messages are single JSON documents, one per line, over the child's
standard input/output.  Map keys are serialized in lexicographic order and
floats as decimal text with 17 significant digits, so identical requests
are byte-identical; NaN and infinities are forbidden in both directions.
One request is in flight per session.  The full wire contract lives in
``docs/protocol.md``.
"""

from __future__ import annotations

import hashlib
import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import (
    ChildExited,
    HandshakeTimeout,
    ProtocolError,
    RequestTimeout,
    SpawnFailure,
    VersionMismatch,
)

PROTOCOL_VERSION = "1"
TASK_ATE = "ate"
TASK_RISK_DIFFERENCE = "risk_difference"
TASK_PREDICT_OUTCOMES = "predict_outcomes"
TASKS = (TASK_ATE, TASK_RISK_DIFFERENCE, TASK_PREDICT_OUTCOMES)


# -- wire encoding -------------------------------------------------------------


def dumps_wire(obj) -> str:
    """Serialize one message: JSON with sorted keys and .17g float text."""
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def _emit(v, parts: list[str]) -> None:
    if v is None:
        parts.append("null")
    elif isinstance(v, bool):
        parts.append("true" if v else "false")
    elif isinstance(v, (int, np.integer)):
        parts.append(str(int(v)))
    elif isinstance(v, (float, np.floating)):
        f = float(v)
        if not math.isfinite(f):
            raise ProtocolError("NaN/Inf forbidden on the wire")
        parts.append(format(f, ".17g"))
    elif isinstance(v, str):
        parts.append(json.dumps(v))
    elif isinstance(v, dict):
        parts.append("{")
        for i, key in enumerate(sorted(v)):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(key)))
            parts.append(":")
            _emit(v[key], parts)
        parts.append("}")
    elif isinstance(v, (list, tuple, np.ndarray)):
        parts.append("[")
        for i, item in enumerate(v):
            if i:
                parts.append(",")
            _emit(item, parts)
        parts.append("]")
    else:
        raise ProtocolError(f"cannot serialize {type(v).__name__} on the wire")


def _check_finite(v) -> None:
    if isinstance(v, float) and not math.isfinite(v):
        raise ProtocolError("NaN/Inf received on the wire")
    elif isinstance(v, dict):
        for item in v.values():
            _check_finite(item)
    elif isinstance(v, list):
        for item in v:
            _check_finite(item)


def loads_wire(line: str) -> dict:
    def reject(token):
        raise ProtocolError(f"forbidden JSON constant {token!r}")

    try:
        doc = json.loads(line, parse_constant=reject)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("message must be a JSON object")
    _check_finite(doc)
    return doc


# -- request / response ----------------------------------------------------------


@dataclass(frozen=True)
class EstimateRequest:
    task: str
    columns: dict[str, list]
    roles: dict[str, str]
    weights: list | None = None
    request_id: str = ""
    protocol_version: str = PROTOCOL_VERSION

    def __post_init__(self):
        if self.task not in TASKS:
            raise ProtocolError(f"unknown task {self.task!r}")
        lengths = {len(v) for v in self.columns.values()}
        if self.weights is not None:
            lengths.add(len(self.weights))
        if len(lengths) > 1:
            raise ProtocolError("request arrays must share one length")

    def to_wire(self) -> dict:
        doc = {
            "protocol_version": self.protocol_version,
            "request_id": self.request_id,
            "task": self.task,
            "columns": self.columns,
            "roles": self.roles,
        }
        if self.weights is not None:
            doc["weights"] = self.weights
        return doc


@dataclass(frozen=True)
class EstimateResponse:
    request_id: str
    status: str
    estimate: float | None = None
    predictions: list | None = None
    message: str = ""


def request_from_dataset(d: Dataset, task: str, covariates: tuple[str, ...] | None = None,
                         weights: np.ndarray | None = None) -> EstimateRequest:
    """Build a request from a table: treatment, outcome and visible covariates.

    Categorical covariates are shipped as their level strings, everything
    else as numbers.  The request id is a digest of the payload, so equal
    requests serialize to equal bytes.
    """
    names = [d.treatment_name, d.outcome_name]
    names.extend(covariates if covariates is not None else d.covariate_names)
    columns: dict[str, list] = {}
    roles: dict[str, str] = {}
    for n in names:
        v = d.values(n)
        if d.is_categorical(n):
            columns[n] = [d.levels[n][c] for c in v]
        elif v.dtype.kind in "iu":
            columns[n] = [int(x) for x in v]
        else:
            columns[n] = [float(x) for x in v]
        roles[n] = d.roles[n].kind
    w = None if weights is None else [float(x) for x in weights]
    req = EstimateRequest(task=task, columns=columns, roles=roles, weights=w)
    digest = hashlib.sha256(dumps_wire(req.to_wire()).encode()).hexdigest()[:16]
    return EstimateRequest(task=task, columns=columns, roles=roles, weights=w,
                           request_id=digest)


# -- session -------------------------------------------------------------------


class EstimatorSession:
    """One child process speaking the line protocol; single request in flight."""

    def __init__(self, command, request_timeout: float = 30.0, spawn_timeout: float = 10.0):
        self.command = tuple(command)
        self.request_timeout = request_timeout
        self._lock = threading.Lock()
        self._lines: queue.Queue = queue.Queue()
        self._dead = False
        try:
            self._proc = subprocess.Popen(
                list(self.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise SpawnFailure(f"cannot start {self.command[0]!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake(spawn_timeout)

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _write(self, text: str) -> None:
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            self._dead = True
            raise ChildExited("adapter closed its input") from exc

    def _read(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            self._dead = True
            raise RequestTimeout(f"no reply within {timeout}s") from None
        if line is None:
            self._dead = True
            raise ChildExited("adapter exited")
        return line

    def _handshake(self, timeout: float) -> None:
        try:
            self._write(dumps_wire({"protocol_version": PROTOCOL_VERSION}))
            line = self._read(timeout)
        except RequestTimeout as exc:
            self.close()
            raise HandshakeTimeout(str(exc)) from None
        except ChildExited:
            self.close()
            raise
        doc = loads_wire(line)
        version = doc.get("protocol_version")
        if version != PROTOCOL_VERSION:
            self.close()
            raise VersionMismatch(f"adapter speaks version {version!r}, host speaks {PROTOCOL_VERSION!r}")

    @property
    def alive(self) -> bool:
        return not self._dead and self._proc.poll() is None

    def request_raw(self, doc: dict, timeout: float | None = None) -> dict:
        """One request line out, one response line in."""
        with self._lock:
            if self._dead:
                raise ChildExited("session is dead")
            self._write(dumps_wire(doc))
            line = self._read(timeout or self.request_timeout)
        try:
            return loads_wire(line)
        except ProtocolError:
            self._dead = True
            raise

    def close(self) -> None:
        self._dead = True
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()


def spawn_estimator(command, request_timeout: float = 30.0,
                    spawn_timeout: float = 10.0) -> EstimatorSession:
    """Start an adapter process and complete the version handshake."""
    return EstimatorSession(command, request_timeout, spawn_timeout)


def request_estimate(session: EstimatorSession, req: EstimateRequest,
                     timeout: float | None = None) -> EstimateResponse:
    """Send one request and validate the reply against the response contract."""
    doc = session.request_raw(req.to_wire(), timeout)
    if doc.get("request_id") != req.request_id:
        session._dead = True
        raise ProtocolError(f"response echoes request_id {doc.get('request_id')!r}, "
                            f"expected {req.request_id!r}")
    status = doc.get("status")
    if status not in ("ok", "error"):
        session._dead = True
        raise ProtocolError(f"response status must be ok/error, got {status!r}")
    resp = EstimateResponse(
        request_id=doc["request_id"], status=status,
        estimate=doc.get("estimate"), predictions=doc.get("predictions"),
        message=doc.get("message", ""))
    if status == "ok":
        if req.task == TASK_PREDICT_OUTCOMES:
            n = len(next(iter(req.columns.values())))
            if resp.predictions is None or len(resp.predictions) != n:
                raise ProtocolError("ok predict_outcomes response must carry one prediction per row")
        elif resp.estimate is None:
            raise ProtocolError("ok response must carry an estimate")
    return resp


# -- harness-facing adapter ------------------------------------------------------


def _conformance_fixture() -> Dataset:
    from .data import ColumnRole

    return Dataset(
        {"t": np.array([1, 1, 0, 0], dtype=np.int64),
         "y": np.array([3.0, 3.0, 1.0, 1.0]),
         "c": np.array([0.5, -0.5, 0.25, -0.25])},
        {"t": ColumnRole("treatment"), "y": ColumnRole("outcome"), "c": ColumnRole("covariate")},
        "rct")


def conformance_checks(command: tuple[str, ...]) -> list[tuple[str, bool, str]]:
    """Protocol conformance suite for an adapter command.

    Exercises the handshake, estimate and prediction tasks, request-id
    echoing, and survival of malformed/degenerate requests.  Returns
    (check name, passed, detail) triples.
    """
    results: list[tuple[str, bool, str]] = []
    fixture = _conformance_fixture()

    try:
        session = spawn_estimator(command)
        results.append(("handshake", True, f"protocol version {PROTOCOL_VERSION}"))
    except ProtocolError as exc:
        results.append(("handshake", False, str(exc)))
        return results

    def run_check(name: str, fn) -> None:
        try:
            detail = fn()
            results.append((name, True, detail))
        except ProtocolError as exc:
            results.append((name, False, f"{type(exc).__name__}: {exc}"))

    def check_ate() -> str:
        req = request_from_dataset(fixture, TASK_ATE)
        resp = request_estimate(session, req)
        if resp.status != "ok":
            raise ProtocolError(f"adapter error: {resp.message}")
        return f"estimate {resp.estimate!r}"

    def check_echo() -> str:
        req = request_from_dataset(fixture, TASK_ATE)
        request_estimate(session, req)  # raises on a bad request_id echo
        return f"request_id {req.request_id} echoed"

    def check_predict() -> str:
        req = request_from_dataset(fixture, TASK_PREDICT_OUTCOMES)
        resp = request_estimate(session, req)
        if resp.status != "ok":
            raise ProtocolError(f"adapter error: {resp.message}")
        return f"{len(resp.predictions)} finite predictions"

    def check_malformed() -> str:
        doc = session.request_raw({"protocol_version": PROTOCOL_VERSION,
                                   "request_id": "malformed-1"})
        if doc.get("status") != "error":
            raise ProtocolError(f"expected a structured error, got {doc!r}")
        return "structured error response"

    def check_unknown_task() -> str:
        doc = session.request_raw({"protocol_version": PROTOCOL_VERSION,
                                   "request_id": "unknown-1", "task": "bogus",
                                   "columns": {}, "roles": {}})
        if doc.get("status") != "error":
            raise ProtocolError(f"expected a structured error, got {doc!r}")
        return "structured error response"

    def check_degenerate() -> str:
        d = Dataset(
            {"t": np.array([1, 1], dtype=np.int64), "y": np.array([3.0, 1.0]),
             "c": np.array([0.5, -0.5])},
            {"t": fixture.roles["t"], "y": fixture.roles["y"], "c": fixture.roles["c"]},
            "rct")
        req = request_from_dataset(d, TASK_ATE)
        resp = request_estimate(session, req)
        if resp.status == "ok" and resp.estimate is None:
            raise ProtocolError("ok response without estimate")
        return f"status {resp.status} (no NaN, no crash)"

    def check_byte_determinism() -> str:
        req = request_from_dataset(fixture, TASK_ATE)
        again = request_from_dataset(fixture, TASK_ATE)
        if dumps_wire(req.to_wire()) != dumps_wire(again.to_wire()):
            raise ProtocolError("identical requests serialized differently")
        return "identical requests are byte-identical"

    run_check("ate_estimate", check_ate)
    run_check("request_id_echo", check_echo)
    run_check("predict_outcomes", check_predict)
    run_check("malformed_request_survives", check_malformed)
    run_check("unknown_task_rejected", check_unknown_task)
    run_check("degenerate_input_handled", check_degenerate)
    run_check("wire_determinism", check_byte_determinism)

    alive = session.alive
    results.append(("session_alive_after_errors", alive,
                    "adapter survived every error case" if alive else "adapter died"))
    session.close()
    return results


class ExternalEstimator:
    """Estimator backed by an adapter subprocess.

    A dead adapter never aborts the benchmark: protocol failures raise
    toolkit errors the harness records, and the next call respawns the
    session.
    """

    def __init__(self, name: str, command: tuple[str, ...], timeout: float = 30.0):
        self.name = name
        self.command = tuple(command)
        self.timeout = timeout
        self._session: EstimatorSession | None = None
        self._guard = threading.Lock()

    def _live_session(self) -> EstimatorSession:
        if self._session is None or not self._session.alive:
            self._session = spawn_estimator(self.command, self.timeout)
        return self._session

    def estimate(self, study) -> "EffectEstimate":
        from .estimators import EffectEstimate  # local import to avoid a cycle

        d: Dataset = study.accepted
        y = d.outcome.astype(np.float64)
        binary = bool(np.isin(y, (0.0, 1.0)).all())
        task = TASK_RISK_DIFFERENCE if binary else TASK_ATE
        weights = study.weights()
        req = request_from_dataset(d, task, study.visible_covariates(), weights)
        with self._guard:
            session = self._live_session()
            resp = request_estimate(session, req, self.timeout)
        if resp.status != "ok":
            raise ProtocolError(f"adapter error: {resp.message}")
        return EffectEstimate(self.name, task, float(resp.estimate), d.n_rows,
                              {"external_command": " ".join(self.command)})

    def predict_outcomes(self, d: Dataset, covariates: tuple[str, ...] | None = None) -> np.ndarray:
        req = request_from_dataset(d, TASK_PREDICT_OUTCOMES, covariates)
        with self._guard:
            session = self._live_session()
            resp = request_estimate(session, req, self.timeout)
        if resp.status != "ok":
            raise ProtocolError(f"adapter error: {resp.message}")
        return np.asarray(resp.predictions, dtype=np.float64)

    def close(self) -> None:
        if self._session is not None:
            self._session.close()
            self._session = None

"""First-order oracle: the only channel through which solvers see problem data."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .instances import Instance

__all__ = [
    "FirstOrderOracle",
    "OracleError",
    "OracleTranscript",
    "SpanVerdict",
    "TranscriptEntry",
    "check_linear_span",
    "query",
]


class OracleError(ValueError):
    """Malformed query or transcript."""


@dataclass(frozen=True)
class TranscriptEntry:
    query_index: int
    x: np.ndarray
    y: np.ndarray
    grad_f: np.ndarray
    Ax: np.ndarray
    Aty: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "query_index": self.query_index,
            "x": self.x.tolist(), "y": self.y.tolist(),
            "grad_f": self.grad_f.tolist(), "Ax": self.Ax.tolist(), "Aty": self.Aty.tolist(),
        })


@dataclass
class OracleTranscript:
    """Append-only query log. With ``keep_entries=False`` only the count is kept."""

    keep_entries: bool = True
    entries: list[TranscriptEntry] = field(default_factory=list)
    call_count: int = 0

    def append(self, x, y, grad_f, Ax, Aty) -> None:
        if self.keep_entries:
            self.entries.append(TranscriptEntry(self.call_count, x.copy(), y.copy(),
                                                grad_f.copy(), Ax.copy(), Aty.copy()))
        self.call_count += 1

    def to_jsonl(self, path) -> None:
        Path(path).write_text("".join(e.to_json() + "\n" for e in self.entries))


def _as_vector(v, dim: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise OracleError(f"{name} must have shape ({dim},), got {v.shape}")
    return v


def query(inst: Instance, transcript: OracleTranscript, x, y):
    """Answer ``(Hx - h, Ax, A'y)`` and log the call."""
    x = _as_vector(x, inst.n, "x")
    y = _as_vector(y, inst.m, "y")
    grad = inst.H @ x - inst.h
    Ax = inst.A @ x
    Aty = inst.A.T @ y
    transcript.append(x, y, grad, Ax, Aty)
    return grad, Ax, Aty


class FirstOrderOracle:
    """Oracle bound to a fixed instance with its own transcript."""

    def __init__(self, inst: Instance, keep_entries: bool = True):
        self._instance = inst
        self.transcript = OracleTranscript(keep_entries)

    @property
    def call_count(self) -> int:
        return self.transcript.call_count

    def query(self, x, y):
        return query(self._instance, self.transcript, x, y)


@dataclass(frozen=True)
class SpanVerdict:
    residuals: list[float]
    passed: bool


def _orth_columns(M: np.ndarray) -> np.ndarray:
    if M.shape[1] == 0:
        return M
    Q, R, _ = linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return M[:, :0]
    rank = int(np.sum(diag > 1e-12 * diag[0]))
    return Q[:, :rank]


def check_linear_span(transcript: OracleTranscript, iterates, tol: float = 1e-8) -> SpanVerdict:
    """Check that each iterate lies in the span of earlier first-order information.

    For iterate ``t`` the generators are the gradients and ``A'y`` answers of
    every logged query made at one of the iterates ``0..t-1``. Residuals are
    least-squares distances to that span; the check passes when each is at
    most ``tol * (1 + |x_t|)``.
    """
    iterates = [np.asarray(x, dtype=float) for x in iterates]
    if not iterates:
        return SpanVerdict([], True)
    if len(transcript.entries) < len(iterates) - 1:
        raise OracleError("transcript shorter than the iterate sequence")
    if np.linalg.norm(iterates[0]) != 0.0:
        raise OracleError("the first iterate must be the origin")
    n = iterates[0].shape[0]
    residuals = [0.0]
    passed = True
    for t in range(1, len(iterates)):
        gens = []
        for e in transcript.entries:
            if any(np.array_equal(e.x, iterates[j]) for j in range(t)):
                gens.append(e.grad_f)
                gens.append(e.Aty)
        G = np.column_stack(gens) if gens else np.zeros((n, 0))
        Q = _orth_columns(G)
        x = iterates[t]
        res = float(np.linalg.norm(x - Q @ (Q.T @ x)))
        residuals.append(res)
        passed = passed and res <= tol * (1.0 + float(np.linalg.norm(x)))
    return SpanVerdict(residuals, passed)

"""Shared fixtures and the acceptance-summary hook."""

from __future__ import annotations

import numpy as np
import pytest

_acceptance_results: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one acceptance criterion outcome and assert it.

    The terminal summary prints one line per recorded criterion so a full
    run ends with an explicit pass/fail roll call.
    """

    def _record(name: str, passed: bool, detail: str = ""):
        _acceptance_results.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in _acceptance_results:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)


def numeric_grad_at(f, x: np.ndarray, coords, h: float = 1e-5) -> np.ndarray:
    """Central-difference partials of scalar f at the given coordinates.

    Runs in float64; the caller picks which coordinates to probe so big
    tensors stay cheap to check.
    """
    x = x.astype(np.float64)
    out = np.zeros(len(coords), dtype=np.float64)
    for n, idx in enumerate(coords):
        xp = x.copy()
        xp[idx] += h
        fp = f(xp)
        xm = x.copy()
        xm[idx] -= h
        fm = f(xm)
        out[n] = (fp - fm) / (2.0 * h)
    return out


def sample_coords(rng: np.random.Generator, shape, count: int):
    """Up to `count` distinct multi-indices drawn without replacement."""
    total = int(np.prod(shape))
    take = min(count, total)
    flat = rng.choice(total, size=take, replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max |a - n| / max(1, |a|, |n|), elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / scale).max())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest
import torch


def fd_gradient(f, x: torch.Tensor, h: float, piecewise: bool = False) -> torch.Tensor:
    """Central finite-difference gradient of scalar ``f`` at ``x``, no autograd.

    With ``piecewise`` (piecewise-linear ``f``, e.g. leaky-ReLU networks) a
    kink inside ``[x - h, x + h]`` is detected by comparing the two one-sided
    differences, and the step shrinks until the coordinate is locally linear.
    """
    x = x.detach().clone()
    g = torch.zeros_like(x, dtype=torch.float64)
    flat, gflat = x.view(-1), g.view(-1)
    with torch.no_grad():
        f0 = float(f(x)) if piecewise else 0.0
        for i in range(flat.numel()):
            orig = flat[i].item()
            step = h
            for _ in range(12):
                flat[i] = orig + step
                up = float(f(x))
                flat[i] = orig - step
                down = float(f(x))
                flat[i] = orig
                if not piecewise or abs((up - f0) - (f0 - down)) <= 1e-7 * (abs(up - f0) + abs(f0 - down)) + 1e-13:
                    break
                step /= 4
            gflat[i] = (up - down) / (2 * step)
    return g


def fd_directional(f, x: torch.Tensor, v: torch.Tensor, h: float) -> float:
    with torch.no_grad():
        return (float(f(x + h * v)) - float(f(x - h * v))) / (2 * h)


def rel_err(analytic, numeric) -> float:
    """Max-abs error scaled by the largest numeric gradient entry."""
    a = torch.as_tensor(analytic, dtype=torch.float64)
    n = torch.as_tensor(numeric, dtype=torch.float64)
    scale = max(float(n.abs().max()), float(a.abs().max()), 1e-30)
    return float((a - n).abs().max()) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    torch.set_num_threads(1)


def fd_directional_piecewise(f, x, v, h: float, agree: float = 1e-8, halvings: int = 8) -> float:
    """Directional central difference for piecewise-smooth ``f`` (leaky ReLU nets).

    A kink inside ``[x - h v, x + h v]`` shows up as disagreement between the
    estimates at ``h`` and ``h / 2``; the step is halved until they agree.
    """
    prev = fd_directional(f, x, v, h)
    for _ in range(halvings):
        h /= 2
        cur = fd_directional(f, x, v, h)
        if abs(cur - prev) <= agree * max(abs(cur), 1e-30):
            return cur
        prev = cur
    return prev


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record (and print) one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)

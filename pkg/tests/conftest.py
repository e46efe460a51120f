import numpy as np
import pytest
import torch

# one line per acceptance criterion, echoed after the run (see test_acceptance)
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


def pytest_terminal_summary(terminalreporter):
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def numeric_gradient(loss_fn, tensor: torch.Tensor, h: float = 1e-5) -> torch.Tensor:
    """Central finite differences of a scalar loss w.r.t. one tensor, in place."""
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        plus = loss_fn().item()
        flat[i] = orig - h
        minus = loss_fn().item()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def assert_gradients_match(loss_fn, tensors, h=1e-5, rtol=1e-4, atol=1e-7):
    """Compare autograd gradients against central finite differences."""
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, tensors, allow_unused=False)
    for tensor, grad in zip(tensors, analytic):
        numeric = numeric_gradient(loss_fn, tensor, h)
        assert torch.allclose(grad, numeric, rtol=rtol, atol=atol), (
            f"gradient mismatch for tensor of shape {tuple(tensor.shape)}: "
            f"max abs diff {(grad - numeric).abs().max().item():.3e}")

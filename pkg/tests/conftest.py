import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    ran = {int(r.nodeid.split("criterion_")[1].split("_")[0])
           for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, [])
           if hasattr(r, "nodeid") and "test_acceptance.py::test_criterion_" in r.nodeid}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ran):
        ok, detail = mod.VERDICTS.get(n, (False, "did not reach a verdict (error before the check)"))
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")

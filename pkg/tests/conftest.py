import numpy as np
import pytest


def random_spd(rng, d, jitter=1.0):
    a = rng.normal(size=(d, d))
    return a.T @ a + jitter * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def write_ff_file(path, dates, pct, assets=None):
    """Write a Kenneth-French-style daily file: preamble, header, data block, trailer block."""
    pct = np.asarray(pct, dtype=float)
    assets = assets or [f"Ind{k + 1}" for k in range(pct.shape[1])]
    lines = [
        "This file was created using the 202112 CRSP database.",
        "Missing data are indicated by -99.99 or -999.",
        "",
        "  Average Value Weighted Returns -- Daily",
        "," + ",".join(f"{a:>6}" for a in assets),
    ]
    lines += [f"{d}," + ",".join(f"{v:6.2f}" for v in row) for d, row in zip(dates, pct)]
    lines += ["", "  Average Equal Weighted Returns -- Daily", "," + ",".join(assets)]
    lines += [f"{d}," + ",".join("1.00" for _ in row) for d, row in zip(dates, pct)]
    lines += [""]
    with open(path, "w", newline="") as fh:
        fh.write("\r\n".join(lines))
    return path


def business_yyyymmdd(n, start="1926-07-01"):
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    return [str(d).replace("-", "") for d in days]


def numeric_ldf_rows(x, logpdf, h=1e-4):
    """Per-row central-difference Hessians of a vectorized log density."""
    n, d = x.shape
    e = np.eye(d) * h
    f0 = logpdf(x)
    out = np.empty((n, d, d))
    for p in range(d):
        out[:, p, p] = (logpdf(x + e[p]) - 2 * f0 + logpdf(x - e[p])) / h**2
        for q in range(p + 1, d):
            v = (
                logpdf(x + e[p] + e[q])
                - logpdf(x + e[p] - e[q])
                - logpdf(x - e[p] + e[q])
                + logpdf(x - e[p] - e[q])
            ) / (4 * h**2)
            out[:, p, q] = out[:, q, p] = v
    return out


# Acceptance criteria report one line each at the end of the session.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

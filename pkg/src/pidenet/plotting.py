"""Log-log figures for experiment reports (rendered off-screen)."""

from __future__ import annotations

import os
import re

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def plot_report(report, path: str) -> bool:
    """Error against knob on log axes with stderr bars; False when there is nothing to draw."""
    pts = [r for r in report.rows if r.error > 0 and r.knob > 0]
    if len(pts) < 2:
        return False
    k = np.array([r.knob for r in pts])
    e = np.array([r.error for r in pts])
    s = np.array([r.stderr for r in pts])
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.errorbar(k, e, yerr=np.minimum(s, 0.999 * e), fmt="o-", capsize=3, label="measured")
    if np.isfinite(report.slope):
        anchor = e[0] / k[0] ** report.slope
        ax.plot(k, anchor * k**report.slope, "--", color="grey",
                label=f"fit slope {report.slope:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(report.knob_name)
    ax.set_ylabel("error")
    ax.set_title(report.name)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return True


def plot_reports(reports, out_dir: str) -> list[str]:
    written = []
    for rep in reports:
        path = os.path.join(out_dir, _slug(rep.name) + ".png")
        if plot_report(rep, path):
            written.append(path)
    return written

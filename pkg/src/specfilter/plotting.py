"""Report figures.  Rendered with the Agg backend and without PNG
metadata so repeated runs produce identical bytes."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def cutoff_risk_figure(exact_cutoff, mc_cutoff=None, threshold=None, oracle=None) -> bytes:
    """Risk of the spectral cut-off against k, with the threshold
    estimator and binary oracle as horizontal references.

    ``mc_cutoff`` is an optional sequence of (k, mean, stderr).
    """
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        k = np.arange(len(exact_cutoff))
        ax.plot(k, exact_cutoff, "-", color="0.3", lw=1.2, label="cut-off (exact)")
        if mc_cutoff:
            kk, m, se = (np.array(v) for v in zip(*mc_cutoff))
            ax.errorbar(kk, m, yerr=3 * se, fmt="o", ms=3, color="C0", label="cut-off (MC, 3 se)")
        if threshold is not None:
            ax.axhline(threshold, color="C3", ls="--", lw=1, label="threshold (MC)")
        if oracle is not None:
            ax.axhline(oracle, color="C2", ls=":", lw=1, label="binary oracle")
        ax.set_yscale("log")
        ax.set_xlabel("cut-off k")
        ax.set_ylabel("risk")
        ax.legend(frameon=False)
        return _png(fig)


def estimator_risk_figure(ids, means, stderrs) -> bytes:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 0.25 * len(ids) + 1.2))
        y = np.arange(len(ids))
        ax.barh(y, means, xerr=3 * np.asarray(stderrs), color="C0", alpha=0.8, error_kw={"lw": 0.8})
        ax.set_yticks(y)
        ax.set_yticklabels(ids)
        ax.invert_yaxis()
        ax.set_xlabel("risk (MC mean, 3 se)")
        return _png(fig)


def selection_figure(x, variances, oracle_members=(), selected=None) -> bytes:
    """x_i^2 against sigma_i^2 per coordinate; marks the oracle set and,
    if given, the data-driven selection."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        i = np.arange(1, len(x) + 1)
        x2 = np.asarray(x) ** 2
        ax.semilogy(i, np.asarray(variances), "-", color="0.4", lw=1, label=r"$\sigma_i^2$")
        pos = x2 > 0
        ax.semilogy(i[pos], x2[pos], "o", ms=3, mfc="none", color="C0", label=r"$x_i^2$")
        m = np.array([j for j in oracle_members], dtype=int)
        if m.size:
            ax.semilogy(m, x2[m - 1], "o", ms=4, color="C2", label="oracle")
        if selected is not None:
            s = np.array(list(selected), dtype=int)
            s = s[x2[s - 1] > 0] if s.size else s
            if s.size:
                ax.semilogy(s, x2[s - 1], "x", ms=5, color="C3", label="selected")
        ax.set_xlabel("coordinate i")
        ax.legend(frameon=False)
        return _png(fig)

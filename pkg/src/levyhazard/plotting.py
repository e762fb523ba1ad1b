"""Figure rendering for the report path: every delimited output gets a
matplotlib rendering written next to it."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.dpi"] = 130
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def render_hazard(path, ts, hazard, se=None, title="Posterior mean hazard"):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ts = np.asarray(ts)
    hazard = np.asarray(hazard)
    ax.plot(ts, hazard, color="C0", lw=1.8)
    if se is not None:
        se = np.asarray(se)
        if np.any(se > 0):
            ax.fill_between(ts, hazard - 2 * se, hazard + 2 * se,
                            color="C0", alpha=0.25, lw=0, label="±2 SE")
            ax.legend(frameon=False)
    ax.set_xlabel("t")
    ax.set_ylabel("hazard")
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)


def render_prior_predictive(path, ts, hazard, survival):
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.4))
    axes[0].plot(ts, hazard, color="C0", lw=1.8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("hazard")
    axes[0].set_title("Prior predictive hazard")
    axes[1].plot(ts, survival, color="C1", lw=1.8)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("survival")
    axes[1].set_ylim(0, 1.02)
    axes[1].set_title("Prior predictive survival")
    fig.savefig(path)
    plt.close(fig)


def render_partition_posterior(path, probs, title="Exact partition posterior"):
    probs = np.asarray(probs)
    order = np.argsort(probs)[::-1]
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.bar(np.arange(len(probs)), probs[order], color="C2")
    ax.set_xlabel("partition (sorted by probability)")
    ax.set_ylabel("probability")
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)


def render_log_weights(path, log_weights, ess=None):
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    lw = np.asarray(log_weights)
    ax.hist(lw - lw.max(), bins=60, color="C3", alpha=0.8)
    ax.set_xlabel("log importance weight (max-shifted)")
    ax.set_ylabel("count")
    title = "Importance weights"
    if ess is not None:
        title += f" (ESS = {ess:.0f} of {len(lw)})"
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)

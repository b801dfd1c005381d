"""Figure rendering for the CLI report paths.

Every renderer takes rows/reports already computed elsewhere and writes a PNG
next to the delimited output; nothing here feeds back into the numerics.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_fbar_curves(rows, path) -> None:
    """Log-log plot of the averaged per-sample objective, one line per
    (alpha, kappa_bar) setting."""
    groups = {}
    for theta, value, alpha, kbar, beta, tbar in rows:
        groups.setdefault((alpha, kbar, beta, tbar), []).append((theta, value))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for (alpha, kbar, beta, tbar), pts in sorted(groups.items()):
        pts.sort()
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        label = f"alpha={alpha:g}, kbar={kbar:g}" if kbar > 0 else "unregularized"
        ax.plot(xs, ys, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel(r"$\bar f(\theta)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_theta_hat_curves(rows, path) -> None:
    """Minimizer location versus the true perturbation, log-log, with the
    identity line as the no-bias reference."""
    groups = {}
    for tbar, that, alpha, kbar, beta in rows:
        groups.setdefault((alpha, kbar, beta), []).append((tbar, that))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    all_x = sorted({r[0] for r in rows})
    if all_x:
        ax.plot(all_x, all_x, "k--", linewidth=0.8, label="identity")
    for (alpha, kbar, beta), pts in sorted(groups.items()):
        pts.sort()
        label = f"alpha={alpha:g}, kbar={kbar:g}" if kbar > 0 else "unregularized"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\bar\theta$")
    ax.set_ylabel(r"$\hat\theta$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_benchmark(report, path) -> None:
    """Grouped log-scale bars of the three MSE metrics per estimator."""
    labels = [e.label for e in report.config.estimators]
    metrics = ["mse_mu", "mse_C", "mse_Cinv"]
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(labels), 4.0))
    width = 0.25
    for i, metric in enumerate(metrics):
        xs = [j + (i - 1) * width for j in range(len(labels))]
        ys = [getattr(report.metrics[lab], metric) for lab in labels]
        ax.bar(xs, ys, width=width, label=metric)
    ax.set_yscale("log")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("MSE")
    ax.set_title(
        f"K={report.config.K}, N={report.config.N}, beta={report.config.beta:g}, "
        f"p_tau={report.config.perturbation.proportion:g}"
    )
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

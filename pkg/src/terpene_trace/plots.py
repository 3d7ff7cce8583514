"""Optional static SVG figures. Needs matplotlib; output is byte-stable."""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    try:
        import matplotlib
    except ImportError as e:  # pragma: no cover - depends on environment
        raise RuntimeError("plots need matplotlib; install terpene-trace[plots]") from e
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "terpene-trace"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    fig.clf()
    import matplotlib.pyplot as plt
    plt.close(fig)
    return path


def plot_traces(trial, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for tr in trial.traces:
        ax.plot(tr.t / 60.0, tr.tvoc, lw=1, label=tr.sensor_id)
    ax.set_xlabel("time (min)")
    ax.set_ylabel("TVOC (ppb)")
    ax.set_title(f"{trial.trial_id}: {trial.label.value}" + (f" {trial.dosage_ul} uL" if trial.dosage_ul else ""))
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def plot_emission(rows, path):
    plt = _pyplot()
    groups = sorted({(r.label, r.dosage_ul or 0) for r in rows})
    sensors = list(dict.fromkeys(r.sensor_id for r in rows))
    lookup = {(r.label, r.dosage_ul or 0, r.sensor_id): r.mean_F for r in rows}
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(len(sensors), 1)
    for j, sid in enumerate(sensors):
        xs = [i + j * width for i in range(len(groups))]
        ax.bar(xs, [lookup.get((lab, dose, sid), 0.0) for lab, dose in groups], width, label=sid)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(groups))])
    ax.set_xticklabels([f"{lab}\n{dose} uL" if dose else lab for lab, dose in groups], fontsize=7)
    ax.set_ylabel(f"mean F ({rows[0].unit})" if rows else "mean F")
    ax.legend(fontsize=6)
    return _save(fig, path)


def plot_accuracies(names, accuracies, path, xlabel="task"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(names)), accuracies)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("accuracy")
    ax.set_xlabel(xlabel)
    fig.tight_layout()
    return _save(fig, path)

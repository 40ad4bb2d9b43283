"""Figure rendering for trace CSVs.

Produces per-quantity PNG figures (energy, angular momentum, worst
inequality value) overlaying every supplied trace, plus a text summary,
all written next to each other in the output directory.
"""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .cli import format_summary_text, parse_trace_csv, summarize_files

_QUANTITIES = (("H", "energy"), ("J", "angular momentum"),
               ("g_min", "worst inequality value"))


def render_report(trace_paths, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    data = [(os.path.basename(p), parse_trace_csv(p)) for p in trace_paths]
    written = []
    for column, label in _QUANTITIES:
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for name, cols in data:
            if column in cols:
                ax.plot(cols["t"], cols[column], label=name, linewidth=1.0)
        ax.set_xlabel("t")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"report_{column}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    summary = os.path.join(out_dir, "report_summary.txt")
    with open(summary, "w") as fh:
        fh.write(format_summary_text(summarize_files(trace_paths)) + "\n")
    written.append(summary)
    return written

"""Quick look at the CSV curves in this directory. Needs matplotlib."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).parent
FILES = ['trajectory.csv', 'ta_trajectory.csv', 'localization.csv', 'ergodic.csv', 'decay.csv']


def columns(name):
    with open(HERE / name, newline="") as fh:
        rows = list(csv.reader(fh))
    head, data = rows[0], rows[1:]
    return {h: [float(r[i]) for r in data] for i, h in enumerate(head)}


fig, ax = plt.subplots(figsize=(7.0, 5.0))
for name in FILES:
    cols = columns(name)
    label = name.removesuffix(".csv")
    ax.plot(cols["t"], cols.get("value", cols.get("empirical")), label=label)
    if "bound" in cols:
        ax.plot(cols["t"], cols["bound"], linestyle="--", label=label + " bound")
ax.set_xlabel("t")
ax.set_yscale("log")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(HERE / "curves.png", dpi=150)
print("wrote", HERE / "curves.png")

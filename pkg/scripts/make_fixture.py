"""Regenerate the bundled 200-row synthetic CSV used by the CLI tests."""

from pathlib import Path

import numpy as np

from sparse_am.synthetic import make_additive_data

OUT = Path(__file__).resolve().parents[1] / "src" / "sparse_am" / "data" / "synthetic_200.csv"


def main():
    data = make_additive_data(200, 4, seed=2024, snr=5.0)
    lines = ["row_id," + ",".join(data.feature_names) + ",y"]
    for i in range(data.n):
        vals = ",".join(f"{v:.6f}" for v in data.X[i])
        lines.append(f"r{i:03d},{vals},{data.y[i]:.6f}")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()

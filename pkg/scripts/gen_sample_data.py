#!/usr/bin/env python3
"""Regenerate the bundled sample scenario CSVs (deterministic).

Run from the repository root:

    python3 scripts/gen_sample_data.py
"""

import csv
from pathlib import Path

from evcoop.data import synth_price_series, synth_pv_series

OUT = Path(__file__).resolve().parent.parent / "src" / "evcoop" / "sample_data"

HORIZON = 48
STATIONS = 2
SEED_PRICE = 2024
SEED_PV = 2025


def main() -> None:
    price = synth_price_series(HORIZON, SEED_PRICE, base=0.12, swing=0.10,
                               noise_sigma=0.003)
    pv = synth_pv_series(HORIZON, STATIONS, SEED_PV, peak_kwh=8.0)

    price_path = OUT / "two_station_48h_price.csv"
    with price_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "price_usd_per_kwh"])
        for ts, p in zip(price.timestamps, price.utility):
            w.writerow([ts.isoformat(), f"{p:.6f}"])
    print(f"wrote {price_path}")

    pv_path = OUT / "two_station_48h_pv.csv"
    with pv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "station_id", "kwh"])
        for ts, row in zip(pv.timestamps, pv.generation):
            for sid, kwh in enumerate(row):
                w.writerow([ts.isoformat(), sid, f"{kwh:.4f}"])
    print(f"wrote {pv_path}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Download the UCI energy and yacht regression sets into data/uci/ as CSV.

The files are written in the layout data/manifest.json expects: a header
row, feature columns first, one target column last. Energy keeps the eight
building features and the heating load (Y1); the cooling load is dropped.

Needs network access to archive.ics.uci.edu, plus pandas and openpyxl.
"""

import argparse
import io
import pathlib
import sys

import pandas as pd
import requests

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases"
ENERGY_URL = f"{BASE}/00242/ENB2012_data.xlsx"
YACHT_URL = f"{BASE}/00243/yacht_hydrodynamics.data"

ENERGY_COLUMNS = ["X1", "X2", "X3", "X4", "X5", "X6", "X7", "X8", "Y1"]
YACHT_COLUMNS = [
    "longitudinal_position",
    "prismatic_coefficient",
    "length_displacement_ratio",
    "beam_draught_ratio",
    "length_beam_ratio",
    "froude_number",
    "residuary_resistance",
]


def fetch(url: str, timeout: float) -> bytes:
    response = requests.get(url, timeout=timeout)
    response.raise_for_status()
    return response.content


def energy(raw: bytes) -> pd.DataFrame:
    frame = pd.read_excel(io.BytesIO(raw))
    frame = frame.dropna(how="all").dropna(axis=1, how="all")
    return frame[ENERGY_COLUMNS]


def yacht(raw: bytes) -> pd.DataFrame:
    text = raw.decode("ascii")
    return pd.read_csv(io.StringIO(text), sep=r"\s+", header=None, names=YACHT_COLUMNS).dropna()


def main() -> int:
    root = pathlib.Path(__file__).resolve().parent.parent
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=pathlib.Path, default=root / "data" / "uci")
    parser.add_argument("--timeout", type=float, default=60.0)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    expected = {"energy": 768, "yacht": 308}
    for name, url, convert in (("energy", ENERGY_URL, energy), ("yacht", YACHT_URL, yacht)):
        try:
            frame = convert(fetch(url, args.timeout))
        except (requests.RequestException, ValueError, ImportError) as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            return 1
        if len(frame) != expected[name]:
            print(f"{name}: got {len(frame)} rows, expected {expected[name]}", file=sys.stderr)
            return 1
        path = args.out / f"{name}.csv"
        frame.to_csv(path, index=False)
        print(f"wrote {path} ({len(frame)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

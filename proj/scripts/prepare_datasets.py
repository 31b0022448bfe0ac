#!/usr/bin/env python3
"""Prepare dataset files for the mlinucb data directory.

    prepare_datasets.py warfarin IWPC_FILE DATA_DIR

IWPC_FILE is the PharmGKB IWPC warfarin spreadsheet (.xls/.xlsx or a CSV
export of its data sheet). Writes DATA_DIR/warfarin.csv with a header row
and the dose class as the last column.

The UCI sets (covtype.data, CNAE-9.data, ad.data) load as downloaded and
need no preparation.
"""

import argparse
import re
import sys
from pathlib import Path

import pandas as pd

DOSE = "Therapeutic Dose of Warfarin"
# identifiers, the target, its leaky companion and free-text fields
DROP = [
    "PharmGKB Subject ID",
    "PharmGKB Sample ID",
    "Project Site",
    DOSE,
    "INR on Reported Therapeutic Dose of Warfarin",
    "Comorbidities",
    "Medications",
    "Indication for Warfarin Treatment",
]


def dose_class(weekly_mg: float) -> str:
    if weekly_mg < 21:
        return "low"
    if weekly_mg <= 49:
        return "medium"
    return "high"


def age_decade(value) -> float:
    # "50 - 59" -> 5, "90+" -> 9
    if pd.isna(value):
        return float("nan")
    m = re.match(r"\s*(\d+)", str(value))
    return float(int(m.group(1)) // 10) if m else float("nan")


def read_iwpc(path: Path) -> pd.DataFrame:
    if path.suffix.lower() in (".xls", ".xlsx"):
        sheets = pd.read_excel(path, sheet_name=None)
        for frame in sheets.values():
            if DOSE in frame.columns:
                return frame
        sys.exit(f"{path}: no sheet has a '{DOSE}' column")
    return pd.read_csv(path)


def prepare_warfarin(src: Path, out_dir: Path) -> Path:
    df = read_iwpc(src)
    df = df.loc[:, [c for c in df.columns if not str(c).startswith("Unnamed")]]
    df = df[pd.to_numeric(df[DOSE], errors="coerce").notna()].copy()
    labels = pd.to_numeric(df[DOSE]).map(dose_class)

    features = df.drop(columns=[c for c in DROP if c in df.columns])
    if "Age" in features.columns:
        features["Age"] = features["Age"].map(age_decade)

    numeric = features.select_dtypes(include="number")
    numeric = numeric.fillna(numeric.mean()).fillna(0.0)
    categorical = features.drop(columns=numeric.columns).astype("string")
    dummies = pd.get_dummies(categorical, dummy_na=False, dtype=float)

    table = pd.concat([numeric, dummies], axis=1)
    table["dose_class"] = labels.values
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "warfarin.csv"
    table.to_csv(out, index=False)
    print(f"{out}: {len(table)} rows, {table.shape[1] - 1} features, "
          f"{table['dose_class'].nunique()} classes")
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="dataset", required=True)
    w = sub.add_parser("warfarin", help="IWPC spreadsheet -> warfarin.csv")
    w.add_argument("source", type=Path)
    w.add_argument("data_dir", type=Path)
    args = parser.parse_args()
    if args.dataset == "warfarin":
        prepare_warfarin(args.source, args.data_dir)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Recompute token-consumption ratios from raw sweep CSVs.

Reads ``sweep_report.json`` plus the per-run ``run_*.csv`` files from a
sweep output directory and independently re-derives, for every measured
cell, the tokens at which the trailing-mean val loss first crossed the
target. Ratios are then recomputed per batch size and compared against the
report's values. Exits nonzero on any disagreement beyond 1e-12, so it can
serve as a cross-check that the harness applied no hidden smoothing or
bookkeeping to the published numbers.

Only the standard library is used on purpose: the point is to not share
code with the package under test.
"""

import argparse
import csv
import json
import math
import os
import sys


def crossing_tokens(rows, target, smooth_window):
    """First tokens_seen whose trailing-mean val loss is <= target.

    The mean runs over the last ``min(smooth_window, rows so far)`` eval
    rows, the current row included; the step-0 snapshot participates like
    any other row.
    """
    vals = []
    for row in rows:
        vals.append(float(row["val_loss"]))
        window = vals[-smooth_window:]
        mean = sum(window) / len(window)
        if mean <= target:
            return int(row["tokens_seen"])
    return None


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", help="sweep output directory")
    parser.add_argument("--tolerance", type=float, default=1e-12)
    args = parser.parse_args(argv)

    report_path = os.path.join(args.out_dir, "sweep_report.json")
    with open(report_path) as fh:
        report = json.load(fh)
    target = float(report["target_loss"])
    smooth_window = int(report["provenance"]["smooth_window"])
    cells = report["provenance"]["cells"]

    tokens = {}
    failures = 0
    for cell in cells:
        run_id = cell["run_id"]
        csv_path = os.path.join(args.out_dir, f"run_{run_id}.csv")
        rows = read_rows(csv_path)
        got = crossing_tokens(rows, target, smooth_window)
        want = cell["tokens_to_target"]
        tokens[(int(cell["batch_size"]), cell["optimizer"])] = got
        status = "ok" if got == want else f"MISMATCH (report says {want})"
        if got != want:
            failures += 1
        print(f"{run_id:>16s}: tokens_to_target={got} {status}")

    reported = {int(b): float(r) for b, r in report["ratios"].items()}
    for b in sorted({bs for bs, _ in tokens}):
        mu = tokens.get((b, "muon"))
        ad = tokens.get((b, "adamw"))
        if mu is None or ad is None or mu <= 0:
            if b in reported:
                print(f"B={b}: ratio undefined here but reported "
                      f"{reported[b]!r}")
                failures += 1
            else:
                print(f"B={b}: ratio undefined (ok)")
            continue
        ratio = ad / mu
        if b not in reported:
            print(f"B={b}: recomputed ratio {ratio!r} missing from report")
            failures += 1
            continue
        err = abs(ratio - reported[b])
        ok = err <= args.tolerance and math.isfinite(ratio)
        print(f"B={b}: ratio={ratio!r} reported={reported[b]!r} "
              f"|diff|={err:.3e} {'ok' if ok else 'MISMATCH'}")
        if not ok:
            failures += 1

    if failures:
        print(f"{failures} disagreement(s)", file=sys.stderr)
        return 1
    print("all ratios confirmed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

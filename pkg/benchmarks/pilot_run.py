"""Calibration pilot for the ensemble-level acceptance thresholds.

Runs degrees 20, 40 and 80 with 300 replicates each, I = [1, inf) and
thresholds u = 0, 1 at the default master seed, and writes the records and
the summary next to this script (``pilot/``).  The committed
``pilot/summary.json`` is the output of one run on a single core (about
4.5 minutes).  The acceptance suite uses a different master seed.

Usage::

    python benchmarks/pilot_run.py [--out-dir benchmarks/pilot] [--threads 1]
"""
import argparse
import os
import time

from sphcrit.analytic import Interval
from sphcrit.experiments import ExperimentConfig, records_to_csv, run_ensemble, summary_to_json


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=os.path.join(os.path.dirname(__file__), "pilot"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    config = ExperimentConfig(ells=(20, 40, 80), interval=Interval.above(1.0), u_list=(0.0, 1.0),
                              replicates=300)
    t0 = time.perf_counter()
    result = run_ensemble(config, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "records.csv"), "w", newline="") as fh:
        fh.write(records_to_csv(result.records, config.u_list))
    with open(os.path.join(args.out_dir, "summary.json"), "w") as fh:
        fh.write(summary_to_json(result.summary))
    print(f"done in {time.perf_counter() - t0:.1f} s, excluded {result.excluded}")


if __name__ == "__main__":
    main()

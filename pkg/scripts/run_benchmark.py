"""Benchmark the desk models against the classical baselines across noise levels."""

import argparse
import logging
from pathlib import Path

from freqest import evaluation as ev
from freqest.desk import DeskConfig, desk_models


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cache", default="artifacts/desk", help="model cache directory")
    parser.add_argument("--sigmas", default="0,0.05,0.1,0.2,0.3,0.5")
    parser.add_argument("--n-signals", type=int, default=500)
    parser.add_argument("--protocol", choices=["known-m", "full", "both"], default="both")
    parser.add_argument("--seed", type=int, default=1111)
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--out", default="artifacts/benchmark")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = DeskConfig()
    fr, counter = desk_models(args.cache, cfg)
    methods = [ev.LearnedMethod(fr, counter), ev.PeriodogramMethod(), ev.MusicMethod()]
    sigmas = [float(s) for s in args.sigmas.split(",")]
    protocols = ["known-m", "full"] if args.protocol == "both" else [args.protocol]
    reports = []
    for protocol in protocols:
        reports += ev.benchmark(
            methods, sigmas, protocol, n_signals=args.n_signals, gen=cfg.gen, seed=args.seed, threads=args.threads
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table = ev.reports_to_csv(reports)
    out.with_suffix(".csv").write_text(table)
    out.with_suffix(".json").write_text(ev.reports_to_json(reports))
    print(table, end="")


if __name__ == "__main__":
    main()

"""Train (or load from cache) the desk-scale representation and counter models."""

import argparse
import logging
import time

from freqest.desk import DeskConfig, desk_models


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cache", default="artifacts/desk", help="model cache directory")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = DeskConfig()
    t0 = time.perf_counter()
    fr, counter = desk_models(args.cache, cfg)
    print(f"config digest {cfg.digest()}  ({time.perf_counter() - t0:.0f} s)")
    meta = fr.metadata
    print(f"representation: initial loss {meta['initial_loss']:.5f} final {meta['final_loss']:.5f}")
    meta = counter.metadata
    print(f"counter: initial loss {meta['initial_loss']:.5f} final {meta['final_loss']:.5f}")


if __name__ == "__main__":
    main()

"""Rebuild the two data files bundled with the package.

The default prior is learned from a deterministic synthetic corpus, and the
default noise calibration is fitted on a second, disjoint corpus.  Running
this script reproduces ``src/gdprior/data/*.json`` exactly (pass
``--check`` to compare without writing).
"""
import argparse
import json
from pathlib import Path

import numpy as np

from gdprior import synthetic
from gdprior.noisest import build_calibration
from gdprior.prior import learn_prior

DATA = Path(__file__).resolve().parents[1] / "src" / "gdprior" / "data"

PRIOR_CORPUS = dict(n=24, shape=(192, 192), seed=1000)
CAL_CORPUS = dict(n=8, shape=(128, 128), seed=2000)
CAL_SIGMAS = np.round(np.arange(0.0, 0.5 + 1e-9, 0.02), 10)
CAL_SEED = 2024


def build_prior():
    c = PRIOR_CORPUS
    imgs = synthetic.corpus(c["n"], c["shape"], seed=c["seed"])
    prior, _ = learn_prior(imgs, provenance={
        "corpus": f"synthetic.corpus({c['n']}, {c['shape']}, seed={c['seed']})",
        "note": "bundled default; t_pr and b_pr are learned from this corpus",
    })
    return prior


def build_cal():
    c = CAL_CORPUS
    imgs = synthetic.corpus(c["n"], c["shape"], seed=c["seed"])
    cal = build_calibration(imgs, CAL_SIGMAS, n_terms=2, seed=CAL_SEED, provenance={
        "corpus": f"synthetic.corpus({c['n']}, {c['shape']}, seed={c['seed']})"})
    return cal


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="compare with the bundled files")
    args = ap.parse_args()
    for name, build in (("default_prior.json", build_prior),
                        ("default_calibration.json", build_cal)):
        obj = build()
        path = DATA / name
        if args.check:
            old = json.loads(path.read_text())
            new = obj.to_json()
            same = {k: old.get(k) == new.get(k) for k in new}
            print(f"{name}: " + ", ".join(f"{k} {'same' if v else 'DIFFERS'}"
                                          for k, v in same.items()))
        else:
            obj.save(path)
            print(f"wrote {path}")


if __name__ == "__main__":
    main()

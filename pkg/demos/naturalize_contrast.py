"""Naturalizing a washed-out image by remapping its gradients towards the prior.

Linear mode stretches intensities until the naturalness factor is 1.
Nonlinear mode matches the gradient histogram bin by bin and reconstructs the
image with a Poisson solve, which fits the prior's shape much more closely
but leaves the field slightly non-integrable.
"""
import argparse
import tempfile
from pathlib import Path

from gdprior import synthetic
from gdprior.imagecore import save_image
from gdprior.naturalize import naturalize_image
from gdprior.prior import default_prior


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--contrast", type=float, default=0.35)
    args = ap.parse_args()
    out = args.out or Path(tempfile.mkdtemp(prefix="gdprior-natural-"))
    out.mkdir(parents=True, exist_ok=True)

    prior = default_prior()
    img = synthetic.low_contrast(synthetic.scene((160, 160), seed=31), args.contrast)
    save_image(out / "input.png", img)
    print(f"Input: contrast compressed to {args.contrast:.0%} of a synthetic scene.")

    for mode in ("linear", "nonlinear"):
        res, rep = naturalize_image(img, prior, mode=mode)
        save_image(out / f"{mode}.png", res)
        extra = f", stretch {rep.alpha:.2f}x" if mode == "linear" else \
            f", curl RMS {rep.curl_rms:.2e}"
        print(f"{mode:9s}: N_f {rep.n_f_before:.2f} -> {rep.n_f_after:.3f}, "
              f"Hellinger to prior {rep.hellinger_before:.3f} -> {rep.hellinger_after:.3f}"
              f"{extra}")
    print("Linear mode lands on N_f = 1 by construction. Nonlinear mode gets the")
    print("histogram shape closer, but the reconstruction smooths the remapped field,")
    print(f"so its N_f stays above 1.  Images are in {out}")


if __name__ == "__main__":
    main()

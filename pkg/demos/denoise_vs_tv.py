"""Prior-driven denoising compared with a plain total-variation baseline.

The noise level is estimated blind from the gradient statistics, the prior
weight is set from it, and the diffusion sharpens edges where the prior's
diffusion coefficient turns negative.
"""
import argparse
import tempfile
from pathlib import Path

from gdprior import synthetic
from gdprior.imagecore import add_gaussian_noise, save_image
from gdprior.noisest import estimate_sigma
from gdprior.prior import default_prior
from gdprior.quality import psnr, ssim
from gdprior.restore import TV_WEIGHT_PER_VARIANCE, denoise, lemma_roots, tv_denoise


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--sigma", type=float, default=0.1)
    args = ap.parse_args()
    out = args.out or Path(tempfile.mkdtemp(prefix="gdprior-denoise-"))
    out.mkdir(parents=True, exist_ok=True)

    prior = default_prior()
    roots = lemma_roots(prior.t_pr, prior.b_pr)
    if roots:
        print(f"Diffusion coefficient is negative for squared gradients in "
              f"({roots[0]:.3g}, {roots[1]:.3g}): those edges get sharpened.")

    clean = synthetic.piecewise_smooth((128, 128), seed=77)
    noisy = add_gaussian_noise(clean, args.sigma, 5)
    sig = estimate_sigma(noisy)
    print(f"True sigma {args.sigma:.3f}, blind estimate {sig:.3f}")

    gdp, log = denoise(noisy)
    tv = tv_denoise(noisy, weight=TV_WEIGHT_PER_VARIANCE * sig ** 2, eps_tv=0.01, n_iter=400)
    print(f"GDP diffusion: lambda {log.lam:.3g}, {log.iterations} iterations, "
          f"converged={log.converged}")
    for name, im in (("noisy", noisy), ("TV", tv), ("GDP", gdp)):
        print(f"  {name:5s} PSNR {psnr(im, clean):6.2f} dB   SSIM {ssim(im, clean):.3f}")
        save_image(out / f"{name.lower()}.png", im)
    save_image(out / "clean.png", clean)
    (out / "gdp_log.csv").write_text(log.to_csv())
    print(f"Images and the iteration log are in {out}")


if __name__ == "__main__":
    main()

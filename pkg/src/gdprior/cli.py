"""Command-line front end.

Every subcommand accepts ``--threads``, ``--seed``, ``--prior``, ``--config``
and ``--sidecar``.  Option values are resolved as command-line flag, then the
``--config`` JSON file (top-level keys, overridden by a section named after the
subcommand), then the built-in default.  Each run writes a JSON sidecar with
the command, the resolved configuration, library versions and timings.

Exit status: 0 success, 1 usage error, 2 processing error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import scipy.fft

from . import __version__
from .imagecore import load_image, save_image

log = logging.getLogger("gdprior")

IMAGE_SUFFIXES = {".png", ".pgm", ".pnm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# Built-in defaults per subcommand; flags use ``None`` so precedence can be applied.
DEFAULTS: dict[str, dict] = {
    "learn-prior": {"fit_domain": "bin", "no_fit": False},
    "fit": {"family": "all", "dims": 1, "domain": "bin"},
    "naturalize": {"mode": "linear"},
    "denoise": {"lam": "auto", "dt": 0.2, "eps": 1e-4, "levels": 1, "max_iter": 300,
                "scheme": "divergence"},
    "deconvolve": {"kernel_size": 9, "levels": 3, "lam": 5e-4, "max_outer": 50},
    "zoom": {"factor": 2, "sigma": 1.0, "lam": None, "iters": 10},
    "dehaze": {"lam": 1e-3, "alpha": 10.0, "iters": 20, "airlight": None},
    "noise-est": {"sigmas": "0:0.02:0.5", "terms": 2},
    "quality": {"metric": ["hellinger"]},
    "analyze": {"nf": False, "windows": "4,8,16,32", "levels": "1e-6,1e-5,1e-4,1e-3"},
}
COMMON_DEFAULTS = {"threads": None, "seed": None}


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--threads", type=int, help="worker cap (default: logical cores)")
    g.add_argument("--seed", type=int, help="seed for noise-injecting commands")
    g.add_argument("--prior", help="prior JSON file (default: bundled prior)")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--sidecar", help="run-log JSON path (default: <output>.run.json)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gdprior", description="Gradient distribution prior toolkit.")
    parser.add_argument("--version", action="version", version=f"gdprior {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    common = [_common()]

    p = sub.add_parser("learn-prior", parents=common, help="learn a prior from images")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--out", required=True, help="prior JSON to write")
    p.add_argument("--report", help="per-image statistics JSON")
    p.add_argument("--fit-domain", choices=("bin", "unit"))
    p.add_argument("--no-fit", action="store_true", default=None, help="skip model fitting")

    p = sub.add_parser("fit", parents=common, help="fit parametric models")
    p.add_argument("input", help="image, or prior JSON")
    p.add_argument("--family", choices=("all", "model1", "model2", "hyperlap", "laplace", "gauss"))
    p.add_argument("--dims", type=int, choices=(1, 2))
    p.add_argument("--domain", choices=("bin", "unit"))
    p.add_argument("--out", help="write the fit table as JSON")

    p = sub.add_parser("naturalize", parents=common, help="remap gradients towards the prior")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=("linear", "nonlinear"))
    p.add_argument("--report", help="JSON report path (also printed)")

    p = sub.add_parser("denoise", parents=common, help="GDP diffusion denoising")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--lambda", dest="lam", help="weight or 'auto'")
    p.add_argument("--dt", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--scheme", choices=("divergence", "normal"))
    p.add_argument("--log", help="iteration log CSV {iter, energy, max_update}")

    p = sub.add_parser("deconvolve", parents=common, help="blind deconvolution")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--kernel-size", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--kernel-out", help="kernel image (scaled to peak 1)")

    p = sub.add_parser("zoom", parents=common, help="GDP-regularized upsampling")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--factor", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--iters", type=int)

    p = sub.add_parser("dehaze", parents=common, help="haze removal")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--airlight", type=float)
    p.add_argument("--transmission-out")

    p = sub.add_parser("noise-est", parents=common,
                       help="estimate noise sigma, or build a calibration (--build)")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--calibration", help="calibration JSON (default: bundled)")
    p.add_argument("--build", metavar="OUT", help="build a calibration from the inputs into OUT")
    p.add_argument("--sigmas", help="start:step:stop noise levels for --build")
    p.add_argument("--terms", type=int)

    p = sub.add_parser("quality", parents=common, help="quality scores")
    p.add_argument("input")
    p.add_argument("--ref", help="reference image (otherwise compare with the prior)")
    p.add_argument("--metric", action="append",
                   help="distance metric, psnr, ssim or nf (repeatable)")

    p = sub.add_parser("analyze", parents=common, help="statistics and CSV curves")
    p.add_argument("input")
    p.add_argument("--nf", action="store_true", default=None, help="print N_f only")
    p.add_argument("--csv-dir", help="write curve CSVs into this directory")
    p.add_argument("--windows", help="comma-separated N_w half-widths")
    p.add_argument("--levels", help="comma-separated sparsity cutoffs")
    return parser


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------

def _resolve(args: argparse.Namespace) -> dict:
    base = dict(COMMON_DEFAULTS)
    base.update(DEFAULTS.get(args.command, {}))
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        base.update({k: v for k, v in doc.items() if not isinstance(v, dict)})
        base.update(doc.get(args.command, {}))
    base.update({k: v for k, v in vars(args).items() if v is not None})
    base.pop("config", None)
    return base


def _prior(cfg):
    from .prior import load_prior

    return load_prior(cfg.get("prior"))


def _expand(inputs) -> list[Path]:
    out = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES))
        else:
            out.append(p)
    if not out:
        raise ValueError("no input images found")
    return out


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _range(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    parts = [float(x) for x in str(text).split(":")]
    if len(parts) != 3 or parts[1] <= 0:
        raise UsageError("sigma range must be start:step:stop with step > 0")
    start, step, stop = parts
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    return str(x)


def _emit(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2))


# --------------------------------------------------------------------------
# Subcommands; each returns (result summary, primary output path or None)
# --------------------------------------------------------------------------

def cmd_learn_prior(cfg, timings):
    from .prior import learn_prior

    paths = _expand(cfg["inputs"])
    t0 = time.perf_counter()
    prior, report = learn_prior(paths, fit_models=not cfg["no_fit"], fit_domain=cfg["fit_domain"],
                                provenance={"inputs": [str(p) for p in cfg["inputs"]]},
                                workers=cfg["threads"] or os.cpu_count() or 1)
    timings["learn"] = time.perf_counter() - t0
    prior.save(cfg["out"])
    if cfg.get("report"):
        Path(cfg["report"]).write_text(json.dumps(_jsonable(report.to_json()), indent=2))
    summary = {"images": len(report.names), "skipped": report.skipped, "t_pr": prior.t_pr,
               "b_pr": prior.b_pr, "entropy": prior.entropy}
    _emit(summary)
    return summary, cfg["out"]


def cmd_fit(cfg, timings):
    from . import models
    from .prior import average_marginal, load_prior
    from .spectrum import accumulate

    src = Path(cfg["input"])
    if src.suffix.lower() == ".json":
        h = load_prior(src).hist
    else:
        h = accumulate(load_image(src))
    data = average_marginal(h) if cfg["dims"] == 1 else h.bins
    fams = models.FAMILIES if cfg["family"] == "all" else (cfg["family"],)
    rows = []
    t0 = time.perf_counter()
    for fam in fams:
        try:
            rows.append(models.fit(data, fam, dims=cfg["dims"], domain=cfg["domain"]).to_json())
        except (ValueError, FloatingPointError) as exc:
            rows.append({"family": fam, "dims": cfg["dims"], "error": str(exc)})
    rows.append({"family": "cdf", "dims": 1,
                 "params": {"T": models.fit_T_closed_form(average_marginal(h), "unit")},
                 "domain_convention": "unit"})
    timings["fit"] = time.perf_counter() - t0
    if cfg.get("out"):
        Path(cfg["out"]).write_text(json.dumps(_jsonable(rows), indent=2))
    _emit(rows)
    return {"fits": len(rows)}, cfg.get("out")


def cmd_naturalize(cfg, timings):
    from .naturalize import naturalize_image

    img = load_image(cfg["input"])
    t0 = time.perf_counter()
    out, report = naturalize_image(img, _prior(cfg), mode=cfg["mode"])
    timings["naturalize"] = time.perf_counter() - t0
    save_image(cfg["output"], out)
    doc = report.to_json()
    if cfg.get("report"):
        Path(cfg["report"]).write_text(json.dumps(_jsonable(doc), indent=2))
    _emit({k: doc[k] for k in ("n_f_before", "n_f_after", "hellinger_before", "hellinger_after")})
    return doc, cfg["output"]


def cmd_denoise(cfg, timings):
    from .restore import DiffusionConfig, denoise

    prior = _prior(cfg)
    lam = cfg["lam"]
    lam = None if str(lam).lower() == "auto" else float(lam)
    dc = DiffusionConfig(lam=lam, dt=cfg["dt"], eps=cfg["eps"], max_iter=cfg["max_iter"],
                         multiscale_levels=cfg["levels"], scheme=cfg["scheme"],
                         t_pr=prior.t_pr, b_pr=prior.b_pr)
    img = load_image(cfg["input"])
    t0 = time.perf_counter()
    out, itlog = denoise(img, dc)
    timings["denoise"] = time.perf_counter() - t0
    save_image(cfg["output"], out)
    if cfg.get("log"):
        Path(cfg["log"]).write_text(itlog.to_csv())
    summary = {"lambda": itlog.lam, "iterations": itlog.iterations, "converged": itlog.converged,
               "rejected": itlog.rejected, "substeps": itlog.substeps}
    _emit(summary)
    return summary, cfg["output"]


def cmd_deconvolve(cfg, timings):
    from .deconv import DeconvConfig, blind_deconvolve

    prior = _prior(cfg)
    dc = DeconvConfig(kernel_size=cfg["kernel_size"], levels=cfg["levels"], lam=cfg["lam"],
                      max_outer=cfg["max_outer"])
    img = load_image(cfg["input"])
    t0 = time.perf_counter()
    res = blind_deconvolve(img, prior, dc)
    timings["deconvolve"] = time.perf_counter() - t0
    save_image(cfg["output"], res.image)
    if cfg.get("kernel_out"):
        save_image(cfg["kernel_out"], res.kernel / res.kernel.max())
    summary = {"iterations": res.iterations, "kernel": res.kernel.tolist(), **res.metadata}
    _emit({"iterations": res.iterations, "kernel_size": res.kernel.shape[0]})
    return summary, cfg["output"]


def cmd_zoom(cfg, timings):
    from .deconv import zoom

    img = load_image(cfg["input"])
    t0 = time.perf_counter()
    out = zoom(img, cfg["factor"], cfg["sigma"], prior=_prior(cfg), lam=cfg["lam"],
               n_iter=cfg["iters"])
    timings["zoom"] = time.perf_counter() - t0
    save_image(cfg["output"], out)
    summary = {"shape": list(out.shape)}
    _emit(summary)
    return summary, cfg["output"]


def cmd_dehaze(cfg, timings):
    from .dehaze import DehazeConfig, dehaze

    dc = DehazeConfig(lam=cfg["lam"], alpha=cfg["alpha"], iters=cfg["iters"])
    img = load_image(cfg["input"])
    t0 = time.perf_counter()
    res = dehaze(img, _prior(cfg), dc, airlight=cfg["airlight"])
    timings["dehaze"] = time.perf_counter() - t0
    save_image(cfg["output"], res.image)
    if cfg.get("transmission_out"):
        save_image(cfg["transmission_out"], res.transmission)
    summary = {"airlight": res.airlight, "energy_initial": res.energies[0],
               "energy_final": res.energies[-1]}
    _emit(summary)
    return summary, cfg["output"]


def cmd_noise_est(cfg, timings):
    from .noisest import build_calibration, estimate_sigma, load_calibration

    paths = _expand(cfg["inputs"])
    t0 = time.perf_counter()
    if cfg.get("build"):
        if cfg.get("seed") is None:
            raise UsageError("noise-est --build injects noise and needs --seed")
        cal = build_calibration([load_image(p) for p in paths], _range(cfg["sigmas"]),
                                n_terms=cfg["terms"], seed=cfg["seed"],
                                provenance={"inputs": [str(p) for p in paths]})
        cal.save(cfg["build"])
        timings["calibrate"] = time.perf_counter() - t0
        _emit(cal.to_json()["fit_stats"])
        return {"terms": cal.terms, "fit_stats": cal.fit_stats}, cfg["build"]
    cal = load_calibration(cfg.get("calibration"))
    out = {}
    for p in paths:
        out[str(p)] = estimate_sigma(load_image(p), cal)
    timings["estimate"] = time.perf_counter() - t0
    if len(out) == 1:
        print(f"{next(iter(out.values())):.6f}")
    else:
        for k, v in out.items():
            print(f"{k}\t{v:.6f}")
    return {"sigma": out}, None


def cmd_quality(cfg, timings):
    from .quality import psnr, score, score_nf, ssim
    from .spectrum import DISTANCE_METRICS

    img = load_image(cfg["input"])
    ref = load_image(cfg["ref"]) if cfg.get("ref") else None
    prior = _prior(cfg)
    scores = {}
    t0 = time.perf_counter()
    for m in cfg["metric"]:
        if m in DISTANCE_METRICS:
            scores[m] = score(img, ref if ref is not None else prior, m)
        elif m in ("psnr", "ssim"):
            if ref is None:
                raise UsageError(f"metric {m} needs --ref")
            scores[m] = (psnr if m == "psnr" else ssim)(img, ref)
        elif m == "nf":
            scores[m] = score_nf(img, ref, prior) if ref is not None else \
                __import__("gdprior.prior", fromlist=["x"]).naturalness_factor(img, prior)
        else:
            raise UsageError(f"unknown metric {m!r}")
    timings["score"] = time.perf_counter() - t0
    _emit(scores)
    return scores, None


def cmd_analyze(cfg, timings):
    from .prior import naturalness_factor, naturalness_map
    from .spectrum import accumulate, autocorrelation, entropy, marginal, sparsity_curve

    prior = _prior(cfg)
    img = load_image(cfg["input"])
    t0 = time.perf_counter()
    nf = naturalness_factor(img, prior)
    if cfg["nf"] and not cfg.get("csv_dir"):
        print(f"{nf:.6f}")
        return {"n_f": nf}, None
    h = accumulate(img)
    summary = {"n_f": nf, "entropy": entropy(h)}
    if cfg.get("csv_dir"):
        d = Path(cfg["csv_dir"])
        d.mkdir(parents=True, exist_ok=True)
        rows = ["cutoff,fraction_above,mass_above"]
        rows += [f"{a:.6g},{b:.10g},{c:.10g}" for a, b, c in
                 sparsity_curve(h, _float_list(cfg["levels"]))]
        (d / "sparsity.csv").write_text("\n".join(rows) + "\n")
        rows = ["w,mean,median"]
        for w in _float_list(cfg["windows"]):
            w = int(w)
            if 2 * w + 1 <= min(img.shape):
                nm = naturalness_map(img, prior, w=w)
                rows.append(f"{w},{nm.mean:.10g},{nm.median:.10g}")
        (d / "nw.csv").write_text("\n".join(rows) + "\n")
        rows = ["shift,order0,order1,order2"]
        ac = [autocorrelation(img, k, min(10, img.shape[1] - 4)) for k in (0, 1, 2)]
        rows += [f"{r},{ac[0][r]:.10g},{ac[1][r]:.10g},{ac[2][r]:.10g}" for r in range(len(ac[0]))]
        (d / "autocorrelation.csv").write_text("\n".join(rows) + "\n")
        mx, my = marginal(h, "x"), marginal(h, "y")
        rows = ["gradient,px,py"] + [f"{g},{a:.10g},{b:.10g}"
                                     for g, a, b in zip(range(-255, 256), mx, my)]
        (d / "marginals.csv").write_text("\n".join(rows) + "\n")
        (d / "entropy.csv").write_text(f"quantity,value\nentropy,{summary['entropy']:.10g}\n"
                                       f"n_f,{nf:.10g}\n")
    timings["analyze"] = time.perf_counter() - t0
    if cfg["nf"]:
        print(f"{nf:.6f}")
    else:
        _emit(summary)
    return summary, cfg.get("csv_dir")


COMMANDS = {
    "learn-prior": cmd_learn_prior,
    "fit": cmd_fit,
    "naturalize": cmd_naturalize,
    "denoise": cmd_denoise,
    "deconvolve": cmd_deconvolve,
    "zoom": cmd_zoom,
    "dehaze": cmd_dehaze,
    "noise-est": cmd_noise_est,
    "quality": cmd_quality,
    "analyze": cmd_analyze,
}


def _versions() -> dict:
    return {"gdprior": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _sidecar_path(cfg, primary) -> Path:
    if cfg.get("sidecar"):
        return Path(cfg["sidecar"])
    if primary:
        return Path(str(primary) + ".run.json")
    return Path(f"gdprior-{cfg['command']}.run.json")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage().strip())
        cfg = _resolve(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"gdprior: config error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if cfg.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    timings: dict = {}
    start = time.perf_counter()
    threads = cfg.get("threads") or os.cpu_count() or 1
    try:
        with scipy.fft.set_workers(threads):
            result, primary = COMMANDS[args.command](cfg, timings)
    except UsageError as exc:
        print(f"gdprior {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # processing failure of any kind maps to exit 2
        print(f"gdprior {args.command}: error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 2
    timings["total"] = time.perf_counter() - start
    doc = {"command": args.command, "config": cfg, "versions": _versions(),
           "timings": timings, "result": result}
    try:
        _sidecar_path(cfg, primary).write_text(json.dumps(_jsonable(doc), indent=2))
    except OSError as exc:
        print(f"gdprior: cannot write sidecar: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

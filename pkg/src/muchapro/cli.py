"""Command-line entry point: ``muchapro <subcommand> ...``.

Exit status 0 on success, 1 on user error (bad arguments or files),
2 on an internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .core import InvariantError, MuchaproError, MultiChannelSLCImage
from .despecklers import parse_despeckler
from .directions import SmoothedConditionParams, optimize_directions
from .pdenforce import PDEnforceParams, enforce_pd_field, pd_pass_rate
from .projection import MODES, RunOptions, build_operator, despeckle_stack, invert_projections, project, run_muchapro
from .speckle import PhantomSpec, TransferKernel, apply_transfer, make_phantom, sample_goodman
from .validation import validate_image

log = logging.getLogger("muchapro")


class UsageError(MuchaproError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pair(text, cast=float):
    return tuple(cast(x) for x in text.split(","))


def _kernel(text):
    if text in (None, "none"):
        return None
    name, _, size = text.partition(":")
    size = int(size or 5)
    if name == "box":
        return TransferKernel.box(size)
    if name == "apodized":
        return TransferKernel.apodized(size)
    raise UsageError(f"unknown transfer kernel {text!r} (use box:N or apodized:N)")


def _pd_params(args, field):
    if args.rthml is None:
        base = PDEnforceParams.for_field(field, rho_max=args.rhomax)
        return base
    return PDEnforceParams(args.rthml, args.rhomax)


def _decimate(img, factor):
    if not factor or factor == 1:
        return img
    if factor < 1:
        raise UsageError("--pre-decimate must be a positive integer")
    return MultiChannelSLCImage(img.values[:, ::factor, ::factor])


def _mosaic_matrices(D):
    mats = []
    for refl, gamma, phase in ((1.0, 0.9, 0.5), (4.0, 0.5, -1.0), (0.5, 0.2, 2.0), (2.0, 0.7, 3.0)):
        C = np.full((D, D), gamma * np.exp(1j * phase), dtype=complex)
        C = np.triu(C, 1)
        C = C + C.conj().T + np.eye(D)
        mats.append(refl * C if np.linalg.eigvalsh(C)[0] >= 0 else refl * np.eye(D))
    return mats


def cmd_simulate(args):
    coh = _pair(args.coherence)
    if args.phantom == "constant":
        g = coh[0]
        C = (1 - g) * np.eye(args.D) + g * np.ones((args.D, args.D))
        spec = PhantomSpec("constant", args.height, args.width, D=args.D, matrices=[C])
    elif args.phantom == "fringes":
        spec = PhantomSpec("fringes", args.height, args.width, D=2, frequency=_pair(args.freq),
                           coherence=coh[0] if len(coh) == 1 else coh, reflectivity=args.reflectivity)
    else:
        spec = PhantomSpec("mosaic", args.height, args.width, D=args.D, matrices=_mosaic_matrices(args.D))
    truth = make_phantom(spec)
    img = sample_goodman(truth, args.seed)
    k = _kernel(args.kernel)
    if k is not None:
        img = apply_transfer(img, k)
    io.write_mcslc(args.out, img)
    prov = dict(command="simulate", seed=args.seed, phantom=args.phantom, D=truth.D,
                height=args.height, width=args.width, freq=args.freq, coherence=args.coherence,
                kernel=args.kernel)
    io.write_provenance(args.out, **prov)
    if args.truth:
        io.write_mccov(args.truth, truth)
        io.write_provenance(args.truth, **prov)


def cmd_optimize(args):
    K = args.K or args.D * args.D
    params = SmoothedConditionParams(restarts=args.restarts, seed=args.seed)
    res = optimize_directions(args.D, K, args.mode, params)
    io.write_directions(args.out, res.dirs, mode=args.mode, seed=args.seed,
                        extra={"restarts": args.restarts, "schedule": list(params.schedule)})
    print(f"condition number {res.condition:.6f} (restart {res.restart})")


def cmd_project(args):
    img = _decimate(io.read_mcslc(args.input), args.pre_decimate)
    dirs = io.read_directions(args.dirs)
    S = project(img, dirs)
    io.write_mcslc(args.out, S)
    io.write_provenance(args.out, command="project", seed=args.seed, input=args.input, dirs=args.dirs)


def cmd_despeckle(args):
    img = _decimate(io.read_mcslc(args.input), args.pre_decimate)
    f = parse_despeckler(args.despeckler)
    if img.D > 1 and "{k}" not in args.out:
        raise UsageError("input has several channels: --out must contain '{k}'")
    V = despeckle_stack(img.values, f, args.jobs)
    for k, v in enumerate(V):
        path = args.out.format(k=k)
        io.write_reflectivity(path, v)
        io.write_provenance(path, command="despeckle", seed=args.seed, despeckler=args.despeckler,
                            input=args.input, channel=k)


def cmd_invert(args):
    dirs = io.read_directions(args.dirs)
    if len(args.refl) != dirs.K:
        raise UsageError(f"direction file has K={dirs.K} directions but {len(args.refl)} reflectivity files given")
    op = build_operator(dirs, args.mode)
    V = np.stack([io.read_reflectivity(p).astype(np.float64) for p in args.refl])
    n_neg = int(np.count_nonzero(V < 0))
    V = np.maximum(V, 0)
    est = invert_projections(op, V)
    io.write_mccov(args.out, est)
    io.write_provenance(args.out, command="invert", seed=args.seed, mode=args.mode, dirs=args.dirs,
                        refl=args.refl, clipped=n_neg)


def cmd_run(args):
    img = _decimate(io.read_mcslc(args.input), args.pre_decimate)
    dirs = io.read_directions(args.dirs)
    f = parse_despeckler(args.despeckler)
    enforce = args.enforce_pd or args.rthml is not None or args.composite is not None
    opts = RunOptions(mode=args.mode, substitute_reflectivity=args.substitute_reflectivity, jobs=args.jobs)
    est = run_muchapro(img, dirs, f, opts)
    if enforce:
        est = enforce_pd_field(est, _pd_params(args, est))
    io.write_mccov(args.out, est)
    prov = dict(command="run", seed=args.seed, input=args.input, dirs=args.dirs,
                despeckler=args.despeckler, mode=args.mode, enforce_pd=enforce, rthml=args.rthml,
                rhomax=args.rhomax, substitute_reflectivity=args.substitute_reflectivity,
                pre_decimate=args.pre_decimate, clipped=est.meta.get("n_clipped", 0))
    io.write_provenance(args.out, **prov)
    if args.composite:
        _write_composite(est, args.composite, args.channels, args.percentile, args.gamma)
        io.write_provenance(args.composite, **prov)


def _write_composite(est, path, channels, percentile, gamma):
    ch = _pair(channels, int)
    kind = "insar" if len(ch) == 2 else "amplitude"
    rgb = io.render_composite(est, kind, ch, percentile, gamma)
    io.save_png(path, rgb)


def cmd_enforce(args):
    est = io.read_mccov(args.input)
    params = _pd_params(args, est)
    out = enforce_pd_field(est, params)
    io.write_mccov(args.out, out)
    io.write_provenance(args.out, command="enforce-pd", seed=args.seed, input=args.input,
                        rthml=params.r_thml, rhomax=params.rho_max, pd_rate=pd_pass_rate(out))


def cmd_composite(args):
    est = io.read_mccov(args.input)
    ch = _pair(args.channels, int)
    if args.kind == "amplitude":
        ch = ch[:1]
    rgb = io.render_composite(est, args.kind, ch, args.percentile, args.gamma)
    io.save_png(args.out, rgb)
    io.write_provenance(args.out, command="composite", seed=args.seed, input=args.input,
                        kind=args.kind, channels=args.channels, percentile=args.percentile, gamma=args.gamma)


def cmd_validate(args):
    img = io.read_mcslc(args.input)
    dirs = io.read_directions(args.dirs) if args.dirs else None
    report = validate_image(img, dirs)
    header = [f"# muchapro {__version__} validation report",
              f"# input: {args.input}", f"# dirs: {args.dirs}", f"# seed: {args.seed}"]
    text = report.to_text(header)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser():
    p = _Parser(prog="muchapro", description="Multi-channel SAR despeckling via projections.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    sp = add("simulate", cmd_simulate, "draw a speckled image from a phantom")
    sp.add_argument("--phantom", choices=("constant", "fringes", "mosaic"), default="fringes")
    sp.add_argument("--D", type=int, default=2)
    sp.add_argument("--height", type=int, default=256)
    sp.add_argument("--width", type=int, default=256)
    sp.add_argument("--freq", default="0.03125,0", help="fringe frequency fx,fy in cycles/pixel")
    sp.add_argument("--coherence", default="0.3,0.9", help="coherence, or top,bottom range")
    sp.add_argument("--reflectivity", type=float, default=1.0)
    sp.add_argument("--kernel", default="none", help="none | box:N | apodized:N")
    sp.add_argument("--out", required=True)
    sp.add_argument("--truth", help="also write the ground-truth covariance field")

    sp = add("optimize-directions", cmd_optimize, "search well-conditioned projection directions")
    sp.add_argument("--D", type=int, required=True)
    sp.add_argument("--K", type=int)
    sp.add_argument("--mode", choices=MODES, default="hermitian")
    sp.add_argument("--restarts", type=int, default=100)
    sp.add_argument("--out", required=True)

    sp = add("project", cmd_project, "project a multi-channel image onto directions")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--dirs", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pre-decimate", type=int, default=1)

    sp = add("despeckle", cmd_despeckle, "despeckle each channel of an MCSLC file")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--despeckler", default="boxcar:5")
    sp.add_argument("--out", required=True, help="output path; use {k} for several channels")
    sp.add_argument("--pre-decimate", type=int, default=1)

    sp = add("invert", cmd_invert, "recover covariances from despeckled projections")
    sp.add_argument("--dirs", required=True)
    sp.add_argument("--refl", nargs="+", required=True)
    sp.add_argument("--mode", choices=MODES, default="hermitian")
    sp.add_argument("--out", required=True)

    for name, func, help in (("run", cmd_run, "full pipeline"),
                             ("enforce-pd", cmd_enforce, "clip reflectivities and coherences")):
        sp = add(name, func, help)
        sp.add_argument("--in", dest="input", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--rthml", type=float, help="reflectivity floor (default 1e-3 x median)")
        sp.add_argument("--rhomax", type=float, default=0.99)
        if name == "run":
            sp.add_argument("--dirs", required=True)
            sp.add_argument("--despeckler", default="boxcar:5")
            sp.add_argument("--mode", choices=MODES, default="hermitian")
            sp.add_argument("--enforce-pd", action="store_true")
            sp.add_argument("--substitute-reflectivity", action="store_true")
            sp.add_argument("--composite", help="also write a PNG composite (implies --enforce-pd)")
            sp.add_argument("--channels", default="0,1")
            sp.add_argument("--percentile", type=float, default=99.0)
            sp.add_argument("--gamma", type=float, default=0.7)
            sp.add_argument("--pre-decimate", type=int, default=1)

    sp = add("composite", cmd_composite, "render an HSV interferogram or amplitude PNG")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--kind", choices=("insar", "amplitude"), default="insar")
    sp.add_argument("--channels", default="0,1")
    sp.add_argument("--percentile", type=float, default=99.0)
    sp.add_argument("--gamma", type=float, default=0.7)

    sp = add("validate", cmd_validate, "Re/Im independence and spectral symmetry report")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--dirs")
    sp.add_argument("--out")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InvariantError, AssertionError) as exc:
        print(f"muchapro: internal error: {exc}", file=sys.stderr)
        return 2
    except (MuchaproError, OSError) as exc:
        print(f"muchapro: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

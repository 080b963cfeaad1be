"""Command-line interface.

Subcommands: selftest, bands, fermi-map, magic, topology, cone-profile.
Numeric output is CSV with a JSON provenance header (see csvio); running
twice with the same configuration reproduces the file bodies byte for
byte.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import os
import sys

import numpy as np

from .config import RunConfig, load_config_file
from .csvio import write_csv
from .errors import BandIsolationError, MoireError
from .hamiltonian import assemble, dump_matrix_csv
from .lattice import build_basis, make_convention, write_convention_json
from .magic import find_magic_chiral, taylor_coefficients, trace_magic_curve
from .protected import fermi_velocity
from .spectra import bands as compute_bands
from .spectra import cone_profile, find_touchings
from .selftest import format_rows, run_selftest
from .topology import classify_touching, euler_sum

MINUS_K = -1j


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with cf.ThreadPoolExecutor(max_workers=threads) as ex:
        futures = [ex.submit(fn, x) for x in items]
        return [f.result() for f in futures]


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(load_config_file(args.config))
    for key, attr in (("cutoff_radius", "cutoff"), ("threads", "threads"),
                      ("touch_tol", "touch_tol"), ("gap_floor", "gap_floor"),
                      ("out_dir", "out")):
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    return RunConfig(**overrides)


def _out_path(config, name):
    os.makedirs(config.out_dir, exist_ok=True)
    return os.path.join(config.out_dir, name)


def cmd_selftest(args) -> int:
    config = _config_from_args(args)
    rows, code = run_selftest(config, corrupt_u=args.corrupt_u)
    print(format_rows(rows))
    print(f"selftest: {'FAIL' if code else 'ok'} "
          f"({sum(r.status == 'pass' for r in rows)} passed, "
          f"{sum(r.status == 'fail' for r in rows)} failed, "
          f"{sum(r.status == 'skip' for r in rows)} skipped)")
    return code


def _k_list_from_args(args, conv):
    if args.path is not None:
        ts = np.linspace(0.0, 1.0, args.path)
        return [t * MINUS_K for t in ts]
    nx, ny = args.grid
    x0, x1, y0, y1 = args.window
    ks = []
    for x in np.linspace(x0, x1, nx, endpoint=False):
        for y in np.linspace(y0, y1, ny, endpoint=False):
            ks.append(x * conv.b1 + y * conv.b2)
    return ks


def cmd_bands(args) -> int:
    config = _config_from_args(args)
    conv = make_convention()
    basis = build_basis(config.cutoff_radius, conv)
    ks = _k_list_from_args(args, conv)
    if args.dump_matrix:
        dump_matrix_csv(assemble(ks[0], args.alpha, args.lam, basis),
                        _out_path(config, "matrix_dump.csv"))

    def one(k):
        bs = compute_bands(args.alpha, args.lam, [k], basis, j_max=args.jmax)
        return bs.energies[0]

    rows = []
    for k, energies in zip(ks, _pmap(one, ks, config.threads)):
        labels = list(range(-args.jmax, 0)) + list(range(1, args.jmax + 1))
        for j, e in zip(labels, energies):
            rows.append((k.real, k.imag, j, e))
    path = _out_path(config, "bands.csv")
    write_csv(path, "bands", rows, config,
              extra_header={"alpha": args.alpha, "lambda": args.lam})
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_fermi_map(args) -> int:
    config = _config_from_args(args)
    basis = build_basis(config.cutoff_radius)
    alphas = np.linspace(args.alpha_lo, args.alpha_hi, args.n_alpha)
    lams = np.linspace(args.lambda_lo, args.lambda_hi, args.n_lambda)
    cells = [(a, l) for a in alphas for l in lams]

    def one(cell):
        a, l = cell
        try:
            sample, _ = fermi_velocity(a, l, basis)
            return (a, l, sample.v_f, sample.im_leak, sample.kernel_gap, "ok")
        except MoireError as exc:
            return (a, l, float("nan"), float("nan"), float("nan"),
                    type(exc).__name__)

    rows = _pmap(one, cells, config.threads)
    path = _out_path(config, "fermi_map.csv")
    write_csv(path, "fermi_map", rows, config)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_magic(args) -> int:
    config = _config_from_args(args)
    basis = build_basis(config.cutoff_radius)
    if args.find is not None:
        lo, hi = args.find
        roots = find_magic_chiral(lo, hi, basis, scan_n=args.scan_n)
        rows = [(r.alpha, r.v_residual, r.kernel_gap) for r in roots]
        path = _out_path(config, "magic_angles.csv")
        write_csv(path, "magic_angles", rows, config)
        for r in roots:
            print(f"magic alpha = {r.alpha:.12f}  |v_F| = {r.v_residual:.2e} "
                  f" kernel gap = {r.kernel_gap:.3e}")
        print(f"wrote {path} ({len(rows)} rows)")
        return 0
    if args.curve is not None:
        alpha0, lam_max = args.curve
        curve = trace_magic_curve(alpha0, lam_max, basis, step=args.step)
        rows = [(l, a, r) for (l, a, r, _g) in curve.samples]
        path = _out_path(config, "magic_curve.csv")
        write_csv(path, "magic_curve", rows, config,
                  extra_header={"alpha0": alpha0})
        print(f"wrote {path} ({len(rows)} rows)")
        return 0
    if args.taylor is not None:
        tc = taylor_coefficients(args.taylor, basis)
        rows = [(tc.alpha0, tc.c10, tc.c02, tc.c11, tc.c01_check)]
        path = _out_path(config, "taylor.csv")
        write_csv(path, "taylor", rows, config)
        print(f"alpha0 = {tc.alpha0:.12f}: |c10| = {abs(tc.c10):.4f}, "
              f"|c02| = {abs(tc.c02):.4f}, |c11| = {abs(tc.c11):.4f}, "
              f"c01 = {tc.c01_check:.2e}")
        print(f"wrote {path}")
        return 0
    print("magic: one of --find/--curve/--taylor is required",
          file=sys.stderr)
    return 2


def cmd_topology(args) -> int:
    config = _config_from_args(args)
    basis = build_basis(config.cutoff_radius)
    try:
        scan = find_touchings(args.alpha, args.lam, basis,
                              coarse_n=config.coarse_n,
                              touch_tol=config.touch_tol,
                              gap_floor=config.gap_floor)
    except BandIsolationError as exc:
        print(f"topology: band isolation failed: {exc}", file=sys.stderr)
        return 2
    if scan.flat_band:
        print("topology: the two middle bands are degenerate across the "
              "whole zone (flat band); winding numbers are undefined here",
              file=sys.stderr)
        return 2
    sums = euler_sum(args.alpha, args.lam, scan, basis,
                     n_samples=config.winding_samples)
    windings = {}
    for center, result, rep in sums.per_point:
        windings.setdefault(rep, result.index)
    t_rows = []
    for pt in scan.points:
        cls = classify_touching(args.alpha, args.lam, pt.k_star, basis,
                                winding=windings.get(pt.k_star))
        pt.kind = cls["kind"]
        t_rows.append((pt.k_star.real, pt.k_star.imag, pt.gap, pt.kind,
                       windings.get(pt.k_star, float("nan"))))
    w_rows = [(c.real, c.imag, r.radius, r.n_samples, r.index,
               r.quantization_residual) for c, r, _ in sums.per_point]
    t_path = _out_path(config, "touchings.csv")
    w_path = _out_path(config, "winding.csv")
    write_csv(t_path, "touchings", t_rows, config,
              extra_header={"alpha": args.alpha, "lambda": args.lam})
    write_csv(w_path, "winding", w_rows, config,
              extra_header={"alpha": args.alpha, "lambda": args.lam,
                            "euler_sum": sums.total})
    print(f"euler sum = {sums.total:+.3f} over {len(sums.per_point)} loops "
          f"({'matches' if sums.matches_expected else 'DIFFERS FROM'} -1)")
    print(f"wrote {t_path}, {w_path}")
    return 0 if sums.matches_expected else 1


def cmd_cone_profile(args) -> int:
    config = _config_from_args(args)
    basis = build_basis(config.cutoff_radius)
    n = args.n
    half = args.radius
    ks = []
    for x in np.linspace(-half, half, n):
        for y in np.linspace(-half, half, n):
            k = x + 1j * y
            if abs(k) > 1e-9:
                ks.append(k)
    ratios = _pmap(
        lambda k: cone_profile(args.alpha, args.lam, [k], basis)[0],
        ks, config.threads)
    rows = [(k.real, k.imag, r) for k, r in zip(ks, ratios)]
    path = _out_path(config, "cone_profile.csv")
    write_csv(path, "cone_profile", rows, config,
              extra_header={"alpha": args.alpha, "lambda": args.lam})
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_convention(args) -> int:
    config = _config_from_args(args)
    path = _out_path(config, "convention.json")
    write_convention_json(path)
    print(f"wrote {path}")
    return 0


def _add_common(p):
    p.add_argument("--cutoff", type=float, default=None,
                   help="plane-wave cutoff radius in units of |b1|")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--touch-tol", dest="touch_tol", type=float, default=None)
    p.add_argument("--gap-floor", dest="gap_floor", type=float, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="key = value config file (flags win)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="moirebm",
        description="Bistritzer-MacDonald moire bands, magic angles, and "
                    "band topology at desk scale.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selftest", help="run the symmetry/invariant suite")
    p.add_argument("--corrupt-u", action="store_true",
                   help=argparse.SUPPRESS)   # negative-control hook
    _add_common(p)
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("bands", help="band energies on a k path or grid")
    p.add_argument("alpha", type=float)
    p.add_argument("lam", type=float, metavar="lambda")
    p.add_argument("--path", type=int, default=None,
                   help="N samples on the 0 -> -K segment")
    p.add_argument("--grid", type=int, nargs=2, default=[24, 24],
                   metavar=("NX", "NY"))
    p.add_argument("--window", type=float, nargs=4,
                   default=[0.0, 1.0, 0.0, 1.0],
                   metavar=("X0", "X1", "Y0", "Y1"),
                   help="fractional window in dual-lattice coordinates")
    p.add_argument("--jmax", type=int, default=2)
    p.add_argument("--dump-matrix", action="store_true")
    _add_common(p)
    p.set_defaults(fn=cmd_bands)

    p = sub.add_parser("fermi-map", help="v_F over a parameter rectangle")
    p.add_argument("alpha_lo", type=float)
    p.add_argument("alpha_hi", type=float)
    p.add_argument("lambda_lo", type=float)
    p.add_argument("lambda_hi", type=float)
    p.add_argument("n_alpha", type=int)
    p.add_argument("n_lambda", type=int)
    _add_common(p)
    p.set_defaults(fn=cmd_fermi_map)

    p = sub.add_parser("magic", help="chiral magic angles / curve / Taylor")
    p.add_argument("--find", type=float, nargs=2, default=None,
                   metavar=("LO", "HI"))
    p.add_argument("--scan-n", type=int, default=400)
    p.add_argument("--curve", type=float, nargs=2, default=None,
                   metavar=("ALPHA0", "LAMBDA_MAX"))
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--taylor", type=float, default=None, metavar="ALPHA0")
    _add_common(p)
    p.set_defaults(fn=cmd_magic)

    p = sub.add_parser("topology", help="touchings, windings, Euler sum")
    p.add_argument("alpha", type=float)
    p.add_argument("lam", type=float, metavar="lambda")
    _add_common(p)
    p.set_defaults(fn=cmd_topology)

    p = sub.add_parser("cone-profile", help="E_1(k)/|k| near k = 0")
    p.add_argument("alpha", type=float)
    p.add_argument("lam", type=float, metavar="lambda")
    p.add_argument("--radius", type=float, default=0.05)
    p.add_argument("--n", type=int, default=21)
    _add_common(p)
    p.set_defaults(fn=cmd_cone_profile)

    p = sub.add_parser("convention", help="export convention.json")
    _add_common(p)
    p.set_defaults(fn=cmd_convention)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MoireError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

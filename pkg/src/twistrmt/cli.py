"""Command-line entry point: ``twistrmt <command> [options]``.

Commands: sample, density, calibrate, compare, sweep, synth, replay.
Every command writes ``<command>.manifest.json`` next to its outputs with
the argument vector and SHA-256 digests; ``twistrmt replay`` re-runs a
manifest and checks the digests.

Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import (
    RUBINSTEIN_E11A3_POSITIVE,
    a_s_factor,
    calibrate_delta,
    excision_threshold,
)
from .dataio import (
    bundled_curve,
    expected_first_peak_mass,
    load_family,
    read_curve_file,
    read_observable,
    read_sample_dump,
    save_family,
    synth_family,
    synth_zeros,
    write_retained_dump,
    write_sample_dump,
)
from .ensembles import (
    Excised,
    Haar,
    InverseCubic,
    TwoParam,
    compute_a1,
    first_peak_window,
    haar_mass_above,
    parse_spec,
    rejection_sample,
)
from .errors import DataValidationError, DomainError, NumericalError
from .rmt import RngStream, haar_batch, matrix_dimension, nearest_dimension
from .specfun import p_o_density
from .stats import HaarPool, compare, sweep_a, sweep_cutoff, sweep_two_param
from .svgplot import heatmap, line_plot

log = logging.getLogger("twistrmt")

OUTPUT_ENV = "TWISTRMT_OUTPUT_DIR"
EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


# --- argument helpers -----------------------------------------------------


def _grid(text: str) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from exc


def _half_dim(args) -> int:
    if args.n is not None:
        return args.n
    if args.conductor is not None and args.x is not None:
        return nearest_dimension(args.conductor, args.x)
    raise UsageError("give --n, or --conductor with --x")


def _spec(args, half_dim: int):
    if args.spec:
        return parse_spec(args.spec, half_dim)
    if args.excised:
        if args.threshold is None:
            raise UsageError("--excised needs --threshold")
        return Excised(half_dim, args.threshold)
    if args.inverse_cubic:
        if None in (args.A, args.t1, args.t2):
            raise UsageError("--inverse-cubic needs --A, --t1 and --t2")
        return InverseCubic(half_dim, args.A, args.t1, args.t2)
    if args.two_param:
        if None in (args.chi1, args.chi2):
            raise UsageError("--two-param needs --chi1 and --chi2")
        return TwoParam(half_dim, args.chi1, args.chi2)
    return Haar(half_dim)


def _needs_density(spec) -> bool:
    return isinstance(spec, (InverseCubic, TwoParam))


def _curve(args):
    if getattr(args, "curve", None):
        curve = read_curve_file(args.curve)
    elif getattr(args, "bundled", None):
        curve = bundled_curve(args.bundled)
    else:
        return None
    if getattr(args, "twist_sign", None):
        curve = curve.with_twist_sign(args.twist_sign)
    if getattr(args, "kappa", None) is not None:
        curve = curve.with_kappa(args.kappa)
    return curve


def _rng(args) -> RngStream:
    return RngStream(args.seed)


# --- commands -------------------------------------------------------------


def cmd_sample(args, out: Path) -> dict:
    n = _half_dim(args)
    spec = _spec(args, n)
    density = p_o_density(n) if _needs_density(spec) else None
    wb = rejection_sample(spec, density, _rng(args), args.count, workers=args.workers)
    kept = wb.multiplicity > 0
    retained = wb.batch.take(kept)
    meta = {"seed": args.seed, "workers": args.workers, "spec": spec.to_dict()}
    write_sample_dump(retained, out / "sample.csv", meta)
    write_retained_dump(wb, out / "retained.csv")
    m = wb.multiplicity
    total = int(m.sum())
    summary = {
        "spec": spec.to_dict(),
        "proposals": len(wb),
        "count": total,
        "distinct_retained": int(kept.sum()),
        "retention_rate": wb.retention_rate,
        "mean_lambda1": float(np.sum(m * wb.batch.values) / total) if total else None,
        "mean_first_angle": float(np.sum(m * wb.batch.first_angles) / total) if total else None,
    }
    _json(out / "sample.json", summary)
    return summary


def cmd_density(args, out: Path) -> dict:
    n = _half_dim(args)
    from .specfun import default_grid

    table = p_o_density(n, default_grid(n, args.points, args.y_min))
    table.to_csv(out / "density.csv")
    table.to_json(out / "density.json")
    line_plot(
        out / "density.svg",
        [(table.grid, table.density, f"P_O({n}, y)")],
        title=f"Density of Lambda_B(1), SO({2 * n})",
        xlabel="y",
        ylabel="density",
        logx=True,
        logy=True,
    )
    return table.metadata()


def cmd_calibrate(args, out: Path) -> dict:
    cal = calibrate_delta(args.constant)
    inputs = {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose", "workers")}
    report = {"inputs": inputs,
              "rubinstein_constant": cal.rubinstein_constant, "delta": cal.delta}
    curve = _curve(args)
    if curve is not None:
        fac = a_s_factor(curve, -0.5, args.prime_bound)
        report.update(
            curve=curve.label,
            twist_sign="positive" if curve.twist_sign > 0 else "negative",
            a_half=fac.value,
            prime_bound=fac.prime_bound,
            tail_estimate=fac.tail_estimate,
        )
        if args.x is not None:
            kappa = curve.require_kappa()
            n_eff = matrix_dimension(curve.conductor, args.x)
            c, thr = excision_threshold(fac.value, cal.delta, kappa, n_eff)
            report.update(half_dim=n_eff, c=c, threshold=thr)
    if args.s_l is not None or args.dataset:
        kappa = args.kappa if args.kappa is not None else (curve.require_kappa() if curve else None)
        if kappa is None or args.x is None:
            raise UsageError("A_1 needs --kappa (or a curve with kappa) and --x")
        s_l = args.s_l
        if s_l is None:
            if curve is None:
                raise UsageError("--dataset needs --curve or --bundled")
            s_l = load_family(args.curve or _bundled_path(args.bundled), args.dataset,
                              args.x, curve=curve).first_peak_mass()[0]
        s_h = args.s_h
        if s_h is None:
            if args.n is None and curve is None:
                raise UsageError("S_H needs --s-h, --n, or a curve for the dimension")
            n = args.n if args.n is not None else nearest_dimension(curve.conductor, args.x)
            s_h = haar_mass_above(p_o_density(n), first_peak_window(kappa, args.x)[1])
        a1 = compute_a1(s_l, s_h, kappa, args.x)
        t1, t2 = first_peak_window(kappa, args.x)
        report.update(S_L=s_l, S_H=s_h, A1=a1.a1, implied_S_L=a1.implied_s_l, t1=t1, t2=t2)
    _json(out / "calibrate.json", report)
    return report


def _bundled_path(label):
    return Path(__file__).with_name("data") / f"{label}.csv"


def cmd_compare(args, out: Path) -> dict:
    model, mw = read_observable(args.model, args.curve)
    data, dw = read_observable(args.data, args.curve)
    if dw is not None:
        data = np.repeat(data, dw.astype(np.int64))
    rep = compare(model, data, args.bins, model_weights=mw, match_means=not args.no_mean_match)
    rep.to_csv(out / "compare.csv")
    summary = rep.summary()
    _json(out / "compare.json", summary)
    mids = rep.bin_edges[1:]
    line_plot(
        out / "compare.svg",
        [(mids, rep.cdf_model, "model"), (mids, rep.cdf_data, "data")],
        title=f"Cumulative distribution of the lowest angle (rms {rep.rms:.4g})",
        xlabel="scaled lowest zero / angle",
        ylabel="cumulative proportion",
    )
    return summary


def _pool(args) -> HaarPool:
    if args.pool:
        batch = read_sample_dump(args.pool)
    else:
        batch = haar_batch(_half_dim(args), args.pool_count, _rng(args), workers=args.workers)
    return HaarPool.from_batch(batch)


def cmd_sweep(args, out: Path) -> dict:
    data, dw = read_observable(args.data, args.curve)
    if dw is not None:
        data = np.repeat(data, dw.astype(np.int64))
    pool = _pool(args)
    n = pool.half_dim
    baseline = Excised(n, args.baseline_threshold) if args.baseline_threshold else None
    if args.kind == "cutoff":
        if args.grid is None:
            raise UsageError("cutoff sweep needs --grid")
        res = sweep_cutoff(args.grid, pool, data, args.bins, args.workers)
        if baseline is not None:
            from .stats import pool_rms

            res.baseline_rms = pool_rms(pool, baseline, None, data, args.bins)[0]
    else:
        density = p_o_density(n)
        if args.kind == "A":
            if args.grid is None:
                raise UsageError("A sweep needs --grid")
            t1, t2 = args.t1, args.t2
            if t1 is None or t2 is None:
                if args.kappa is None or args.x is None:
                    raise UsageError("A sweep needs --t1/--t2 or --kappa/--x")
                t1, t2 = first_peak_window(args.kappa, args.x)
            res = sweep_a(args.grid, pool, density, t1, t2, data, args.bins, baseline, args.a1, args.workers)
        else:
            if args.chi1_grid is None or args.chi2_grid is None:
                raise UsageError("two_param sweep needs --chi1-grid and --chi2-grid")
            res = sweep_two_param(args.chi1_grid, args.chi2_grid, pool, density, data, args.bins, baseline, args.workers)
    res.to_csv(out / "sweep.csv")
    res.to_json(out / "sweep.json")
    _plot_sweep(res, out / "sweep.svg")
    if len(res.axes) == 2:
        res.matrix_to_csv(out / "sweep_matrix.csv")
    return res.summary()


def _plot_sweep(res, path):
    hlines = [(res.baseline_rms, "excised baseline")] if res.baseline_rms else []
    if len(res.axes) == 1:
        x = res.axes[0]
        vlines = [(res.markers["A1"], "A1")] if "A1" in res.markers else []
        line_plot(
            path,
            [(x, res.rms_values, "rms")],
            title=f"{res.kind} sweep",
            xlabel=res.kind,
            ylabel="rms deviation",
            hlines=hlines,
            vlines=vlines,
            points=[(res.argmin[0], res.min_rms, "minimum")],
        )
    else:
        chi1, chi2 = res.argmin
        heatmap(
            path,
            res.axes[1],
            res.axes[0],
            res.rms_values,
            title="two-parameter sweep (diagonal: excised model)",
            xlabel="chi2",
            ylabel="chi1",
            mark=(chi2, chi1),
        )


def cmd_synth(args, out: Path) -> dict:
    curve = _curve(args)
    if curve is None:
        raise UsageError("synth needs --curve or --bundled")
    curve.require_kappa()
    dist = None
    if args.c_dist:
        text = Path(args.c_dist).read_text() if os.path.exists(args.c_dist) else args.c_dist
        try:
            dist = {int(k): float(v) for k, v in json.loads(text).items()}
        except (json.JSONDecodeError, ValueError, AttributeError) as exc:
            raise UsageError(f"--c-dist must be a JSON object c -> probability: {exc}") from exc
    streams = _rng(args).split(2)
    fam = synth_family(curve, args.x, dist, streams[0])
    summary = {
        "curve": curve.label,
        "X": args.x,
        "records": len(fam),
        "vanishing": int(fam.vanishing.sum()),
        "c_distribution": fam.meta["c_distribution"],
        "c_distribution_authoritative": fam.meta["c_distribution_authoritative"],
        "seed": args.seed,
    }
    p1 = fam.meta["c_distribution"].get(1, 0.0)
    summary["S_L"] = fam.first_peak_mass()[0]
    summary["S_L_expected"] = expected_first_peak_mass(fam, p1)
    if args.zeros:
        n = args.n if args.n is not None else nearest_dimension(curve.conductor, args.x)
        spec = parse_spec(args.zeros, n)
        density = p_o_density(n) if _needs_density(spec) else None
        fam = synth_zeros(spec, fam, density, streams[1])
        summary["generating_spec"] = spec.to_dict()
    save_family(fam, out / "curve.csv", out / "twists.csv")
    _json(out / "synth.json", summary)
    return summary


# --- manifests ------------------------------------------------------------


def _json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


OUTPUTS = {
    "sample": ("sample.csv", "sample.csv.meta.json", "retained.csv", "sample.json"),
    "density": ("density.csv", "density.json", "density.svg"),
    "calibrate": ("calibrate.json",),
    "compare": ("compare.csv", "compare.json", "compare.svg"),
    "sweep": ("sweep.csv", "sweep.json", "sweep.svg", "sweep_matrix.csv"),
    "synth": ("curve.csv", "twists.csv", "synth.json"),
}


def _digests(out: Path, command: str) -> dict:
    return {name: _sha256(out / name) for name in OUTPUTS[command] if (out / name).exists()}


def cmd_replay(args, out: Path) -> dict:
    manifest = json.loads(Path(args.manifest).read_text())
    target = Path(args.out) if args.out else Path(manifest["output_dir"])
    argv = list(manifest["argv"]) + ["--out", str(target)]
    code = main(argv)
    if code != 0:
        raise NumericalError(f"replayed command exited with {code}")
    new = json.loads((target / f"{manifest['command']}.manifest.json").read_text())
    mismatched = sorted(
        k for k in set(manifest["outputs"]) | set(new["outputs"])
        if manifest["outputs"].get(k) != new["outputs"].get(k)
    )
    result = {"identical": not mismatched, "mismatched": mismatched, "output_dir": str(target)}
    print(json.dumps(result))
    if mismatched:
        raise NumericalError(f"replay differs in {mismatched}")
    return result


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("--seed", type=int, default=0, help="root seed")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    dim = argparse.ArgumentParser(add_help=False)
    dim.add_argument("--n", type=int, help="N for SO(2N)")
    dim.add_argument("--conductor", type=int, help="with --x: N = round(log(sqrt(M) X / 2 pi))")
    dim.add_argument("--x", type=float, help="discriminant bound X")

    ens = argparse.ArgumentParser(add_help=False)
    g = ens.add_mutually_exclusive_group()
    g.add_argument("--haar", action="store_true")
    g.add_argument("--excised", action="store_true")
    g.add_argument("--inverse-cubic", action="store_true")
    g.add_argument("--two-param", action="store_true")
    g.add_argument("--spec", help="haar | excised:T | inverse_cubic:A,t1,t2 | two_param:chi1,chi2")
    ens.add_argument("--threshold", type=float)
    ens.add_argument("--A", type=float)
    ens.add_argument("--t1", type=float)
    ens.add_argument("--t2", type=float)
    ens.add_argument("--chi1", type=float)
    ens.add_argument("--chi2", type=float)

    curve = argparse.ArgumentParser(add_help=False)
    curve.add_argument("--curve", help="curve file (p,lambda_p with JSON header)")
    curve.add_argument("--bundled", help="bundled curve label, e.g. E11.a3")
    curve.add_argument("--kappa", type=float, help="Kohnen-Zagier constant kappa_E")
    curve.add_argument("--twist-sign", choices=("positive", "negative"))

    p = argparse.ArgumentParser(prog="twistrmt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common, dim, ens], help="draw from an ensemble")
    s.add_argument("--count", type=int, default=100_000, help="number of Haar proposals")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("density", parents=[common, dim], help="tabulate P_O(N, y) by Mellin inversion")
    s.add_argument("--points", type=int, default=4000)
    s.add_argument("--y-min", type=float, default=1e-12)
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("calibrate", parents=[common, curve], help="delta, a_{-1/2}, cutoff and A_1")
    s.add_argument("--constant", type=float, default=RUBINSTEIN_E11A3_POSITIVE)
    s.add_argument("--x", type=float)
    s.add_argument("--n", type=int, help="N for S_H (default from conductor and X)")
    s.add_argument("--prime-bound", type=int, default=100_000)
    s.add_argument("--s-l", type=float)
    s.add_argument("--s-h", type=float)
    s.add_argument("--dataset", help="twist file for S_L")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("compare", parents=[common], help="cumulative RMS of model vs data")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--curve", help="curve file, needed for twist-file inputs")
    s.add_argument("--bins", type=int, default=100)
    s.add_argument("--no-mean-match", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", parents=[common, dim], help="RMS landscape over model parameters")
    s.add_argument("--kind", choices=("cutoff", "A", "two_param"), required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--curve", help="curve file, needed for twist-file data")
    s.add_argument("--pool", help="Haar sample dump to reuse")
    s.add_argument("--pool-count", type=int, default=200_000)
    s.add_argument("--grid", type=_grid, help="start:stop:num or comma list")
    s.add_argument("--chi1-grid", type=_grid)
    s.add_argument("--chi2-grid", type=_grid)
    s.add_argument("--t1", type=float)
    s.add_argument("--t2", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--a1", type=float, help="mark A_1 on the A sweep")
    s.add_argument("--baseline-threshold", type=float, help="excised baseline cutoff")
    s.add_argument("--bins", type=int, default=100)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("synth", parents=[common, curve], help="synthetic twist family")
    s.add_argument("--x", type=int, required=True)
    s.add_argument("--c-dist", help="JSON object c -> probability, or a file holding one")
    s.add_argument("--zeros", help="ensemble for lowest zeros, e.g. excised:0.0048")
    s.add_argument("--n", type=int, help="N for the zeros (default from conductor and X)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    s.add_argument("manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    if args.command == "replay":
        out = None
    else:
        out = Path(args.out or os.environ.get(OUTPUT_ENV, "."))
        out.mkdir(parents=True, exist_ok=True)
    try:
        result = args.func(args, out)
    except UsageError as exc:
        print(f"twistrmt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"twistrmt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"twistrmt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"twistrmt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as exc:
        print(f"twistrmt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if out is not None:
        cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
        stripped = _strip_out(argv)
        _json(out / f"{args.command}.manifest.json", {
            "command": args.command,
            "argv": stripped,
            "config": cfg,
            "version": __version__,
            "numpy": np.__version__,
            "output_dir": str(out),
            "outputs": _digests(out, args.command),
        })
        print(json.dumps(result, default=_jsonable, sort_keys=True))
    return 0


def _strip_out(argv: list[str]) -> list[str]:
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res


if __name__ == "__main__":
    sys.exit(main())

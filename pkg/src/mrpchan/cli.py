"""Command-line surface: density/kernel exports, MI and MIR, contour sweeps.

Every output embeds the resolved run configuration (hash), the seed and the
tool version, so files are reproducible byte for byte.  Exit codes: 0 on
success, 1 for numeric failures (degeneracy, refinement), 2 for input errors;
input errors also emit machine-readable JSON on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib.metadata import version as _pkg_version

import numpy as np

from .config import load_model_config
from .errors import InputError, MrpChanError
from .kernels import SemiMarkovKernel
from .limits import dri_checklist, interarrival_density, mir_3state_forms, mir_channel, mir_mrp
from .models import GeneModelParams, build_gene_model, build_leakage_model, poisson_kernel
from .renewal import exact_mi_curve, volterra_solve
from .simulate import mc_mi_dynamic, mc_mi_static, simulate_mrp

log = logging.getLogger("mrpchan")


def _tool_version() -> str:
    try:
        return _pkg_version("mrpchan")
    except Exception:
        return "unknown"


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(args, extra=None) -> dict:
    payload = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if extra:
        payload.update(extra)
    return {
        "config_hash": _config_hash(payload),
        "seed": getattr(args, "seed", None),
        "tool_version": _tool_version(),
        "run_config": payload,
    }


def _write_csv(path, header_meta: dict, columns, rows):
    with open(path, "w", newline="") as fh:
        for key in ("config_hash", "seed", "tool_version"):
            fh.write(f"# {key}: {header_meta[key]}\n")
        fh.write(f"# run_config: {json.dumps(header_meta['run_config'], sort_keys=True, default=str)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _emit_json(obj, out_path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_grid(spec: str, what: str) -> np.ndarray:
    """Parse 'start:stop:step' or a comma-separated list."""
    try:
        if ":" in spec:
            start, stop, step = (float(x) for x in spec.split(":"))
            if step <= 0 or stop < start:
                raise ValueError("empty range")
            n = int(round((stop - start) / step))
            return np.round(start + step * np.arange(n + 1), 12)
        return np.array([float(x) for x in spec.split(",")])
    except ValueError as e:
        raise InputError(f"cannot parse {what} grid {spec!r}: {e}") from None


def _resolve_model(args):
    """Built-in name or config file -> a bundle the subcommands understand."""
    if getattr(args, "config", None):
        return ("config", load_model_config(args.config))
    name = getattr(args, "model", None) or "gene"
    if name == "gene":
        params = GeneModelParams(pi=getattr(args, "pi", 0.5) or 0.5)
        return ("gene", build_gene_model(params))
    if name == "leakage":
        return ("leakage", build_leakage_model())
    if name.startswith("poisson"):
        rate = float(name.split(":", 1)[1]) if ":" in name else 1.0
        return ("poisson", poisson_kernel(rate))
    raise InputError(f"unknown built-in model {name!r} (gene, leakage, poisson[:rate])")


def _channel_pieces(kind, bundle, level: int):
    """(joint kernel, mark, output interarrival density) of a channel model."""
    if kind == "gene":
        joint = bundle.joint_kernel[level]
        return joint, "J", bundle.f_tau[level]
    if kind == "poisson":
        return bundle, "J", bundle.density("J", "J")
    if kind == "config":
        if bundle.coarse is None or bundle.classes is None or bundle.mark is None:
            raise InputError("config model needs 'classes', 'coarse' and 'mark' for MI commands")
        from .filtering import marginal_filter

        f = marginal_filter(bundle.kernel, bundle.classes, bundle.coarse, keep=bundle.keep)
        if not f.injective:
            raise InputError("MI commands need an injective coarse-graining (MrP marginal)")
        joint = f.marginal_kernel
        return joint, bundle.mark, interarrival_density(joint, bundle.mark)
    raise InputError(f"model kind {kind!r} has no channel structure")


def cmd_density(args) -> int:
    kind, bundle = _resolve_model(args)
    T = args.T or 300.0
    h = args.h or T / 2000.0
    grid = np.arange(0.0, T + h / 2, h)
    meta = _metadata(args)
    rows = []
    if args.which == "f_tau":
        if kind != "gene":
            raise InputError("f_tau export is defined for the gene model")
        for level in (0, 1):
            dens = bundle.f_tau[level]
            label = f"R={bundle.params.concentration(level):g}"
            vals = dens.eval(grid)
            rows.extend((t, label, v) for t, v in zip(grid, vals))
    elif args.which == "filtered-kernel":
        if kind == "gene":
            kern = bundle.joint_kernel[args.level]
        elif kind in ("poisson",):
            kern = bundle
        else:
            kern = bundle.kernel
        for y in kern.states:
            for z in kern.states:
                d = kern.density(y, z)
                if not d.terms:
                    continue
                vals = d.eval(grid)
                rows.extend((t, f"{y}->{z}", v) for t, v in zip(grid, vals))
    elif args.which == "renewal-density":
        if kind == "gene":
            kern = bundle.joint_kernel[args.level]
            eta = {"J": 1.0}
        elif kind == "poisson":
            kern, eta = bundle, {"J": 1.0}
        else:
            kern = bundle.kernel
            init = bundle.initial or kern.states[0]
            eta = {init: 1.0}
        sol = volterra_solve(kern, eta, T=T, h=h)
        for z in kern.states:
            rows.extend((t, str(z), v) for t, v in zip(sol.t, sol.values[z]))
    else:
        raise InputError(f"unknown density kind {args.which!r}")
    out = args.out or "density.csv"
    _write_csv(out, meta, ("t", "series", "value"), rows)
    log.info("wrote %s (%d rows)", out, len(rows))
    return 0


def cmd_mi(args) -> int:
    kind, bundle = _resolve_model(args)
    joint, mark, f_tau = _channel_pieces(kind, bundle, args.level)
    meta = _metadata(args)
    T = args.T or 300.0
    result = {
        "schema": 1,
        "mode": args.mode,
        "T": T,
        "meta": meta,
    }
    if args.mode == "exact":
        h = args.h or T / 6000.0
        y_kernel = SemiMarkovKernel((mark,), [[f_tau]], validate=False)
        t, mi, joint_curve, out_curve = exact_mi_curve(
            joint, {mark: 1.0}, mark, y_kernel, {mark: 1.0}, mark, T=T, h=h
        )
        from .renewal import cumulative_integral

        jterm = cumulative_integral(joint_curve, mark)[-1]
        oterm = cumulative_integral(out_curve, mark)[-1]
        result.update(
            {
                "mi": float(mi[-1]),
                "breakdown": {
                    "joint_phi_integral": float(jterm),
                    "output_phi_integral": float(oterm),
                },
                "h": h,
            }
        )
    elif args.mode == "mc":
        est = mc_mi_dynamic(joint, mark, f_tau, T=T, n_traj=args.n_traj, seed=args.seed)
        result.update(
            {
                "mi": est.value,
                "se": est.stderr,
                "n_traj": est.n_samples,
                "seed": est.seed,
            }
        )
    else:
        raise InputError(f"unknown mode {args.mode!r}")
    _emit_json(result, args.out)
    return 0


def cmd_mir(args) -> int:
    kind, bundle = _resolve_model(args)
    meta = _metadata(args)
    out = {"schema": 1, "meta": meta}
    if kind in ("gene", "poisson", "config"):
        joint, mark, f_tau = _channel_pieces(kind, bundle, args.level)
        ch = mir_channel(joint, mark, f_tau)
        terms = mir_mrp(joint)
        out.update(
            {
                "mir": ch.rate,
                "joint_term": ch.joint_term,
                "output_term": ch.output_term,
                "per_state": {str(k): v for k, v in terms.per_state.items()},
                "formula": "per-state long-run limit minus renewal output term",
            }
        )
        if kind == "gene":
            f1, f2 = mir_3state_forms(joint, "J", "ON", "OFF", f_tau)
            out["three_state_forms"] = {"form1": f1, "form2": f2}
        out["dri_checklist"] = {
            f"{y}->{z}": dri_checklist(joint.density(y, z))["verdict"]
            for y in joint.states
            for z in joint.states
            if joint.density(y, z).terms
        }
    else:
        raise InputError("mir command needs a channel model (gene, poisson, config)")
    _emit_json(out, args.out)
    return 0


def _contour_one_pi(task):
    """One prior point of the contour sweep (separate process when --threads>1)."""
    (pi, level_terms, t_grid, n_traj, seed) = task
    from .config import density_from_terms

    dens = {c: density_from_terms(t) for c, t in level_terms.items()}
    grid = mc_mi_static(dens, {0: 1.0 - pi, 1: pi}, t_grid, n_traj, seed)
    return [(float(T), pi, e.value, e.stderr) for T, e in zip(grid.T_grid, grid.estimates)]


def cmd_contour(args) -> int:
    kind, bundle = _resolve_model(args)
    if kind != "gene":
        raise InputError("contour command is defined for the gene model")
    from .config import density_to_terms

    pi_grid = _parse_grid(args.pi_grid, "pi")
    if np.any(pi_grid < 0) or np.any(pi_grid > 1):
        raise InputError("pi grid must lie in [0, 1]")
    t_grid = _parse_grid(args.T_grid, "T")
    if t_grid[0] <= 0:
        t_grid = t_grid[t_grid > 0]
    meta = _metadata(args)
    level_terms = {c: density_to_terms(bundle.f_tau[c]) for c in (0, 1)}
    tasks = [
        (float(pi), level_terms, list(t_grid), args.n_traj, args.seed + i)
        for i, pi in enumerate(pi_grid)
    ]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_contour_one_pi, tasks))
    else:
        results = [_contour_one_pi(t) for t in tasks]
    rows = [row for chunk in results for row in chunk]
    out_csv = args.out or "contour.csv"
    _write_csv(out_csv, meta, ("T", "pi", "mi", "se"), rows)

    # arg max over pi of the final-horizon information (lowest pi wins ties)
    t_max = float(t_grid[-1])
    finals = {}
    for T, pi, mi, se in rows:
        if T == t_max:
            finals[pi] = (mi, se)
    best_pi = max(sorted(finals), key=lambda p: finals[p][0])
    summary = {
        "schema": 1,
        "meta": meta,
        "T_max": t_max,
        "argmax_pi": best_pi,
        "mi_at_argmax": finals[best_pi][0],
        "se_at_argmax": finals[best_pi][1],
        "csv": out_csv,
    }
    _emit_json(summary, args.summary_out)
    return 0


def cmd_simulate(args) -> int:
    kind, bundle = _resolve_model(args)
    if kind == "gene":
        kern = bundle.joint_kernel[args.level]
        z0 = "J"
    elif kind == "poisson":
        kern, z0 = bundle, "J"
    elif kind == "leakage":
        kern, z0 = bundle.kernel, "1"
    else:
        kern = bundle.kernel
        z0 = bundle.initial or kern.states[0]
    T = args.T or 100.0
    meta = _metadata(args)
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for i in range(args.n_traj):
        tr = simulate_mrp(kern, z0, T, seed=args.seed, index=i)
        path = os.path.join(outdir, f"trajectory_{i:04d}.csv")
        rows = list(zip(tr.times, (str(m) for m in tr.marks)))
        _write_csv(
            path,
            _metadata(args, {"index": i, "absorbed": tr.absorbed}),
            ("t", "mark"),
            rows,
        )
        paths.append(path)
    _emit_json(
        {"schema": 1, "meta": meta, "files": paths, "horizon": T},
        args.summary_out,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mrpchan",
        description="Mutual information of Markov-renewal Poisson-type channels",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--model", default=None, help="built-in model: gene, leakage, poisson[:rate]")
        sp.add_argument("--config", default=None, help="JSON model config path")
        sp.add_argument("--level", type=int, default=0, choices=(0, 1), help="concentration level of the gene model")
        sp.add_argument("--out", default=None, help="output file (or directory for simulate)")
        sp.add_argument("--threads", type=int, default=1)
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("density", help="export density/kernel curves as CSV")
    common(d)
    d.add_argument("--which", default="f_tau", choices=("f_tau", "filtered-kernel", "renewal-density"))
    d.add_argument("--T", type=float, default=None)
    d.add_argument("--h", type=float, default=None)
    d.set_defaults(func=cmd_density)

    m = sub.add_parser("mi", help="mutual information up to a horizon")
    common(m)
    m.add_argument("--mode", default="exact", choices=("exact", "mc"))
    m.add_argument("--T", type=float, default=None)
    m.add_argument("--h", type=float, default=None)
    m.add_argument("--n-traj", dest="n_traj", type=int, default=100_000)
    m.set_defaults(func=cmd_mi)

    r = sub.add_parser("mir", help="mutual information rate")
    common(r)
    r.set_defaults(func=cmd_mir)

    c = sub.add_parser("contour", help="static-input information over (T, pi)")
    common(c)
    c.add_argument("--pi-grid", dest="pi_grid", default="0:1:0.05")
    c.add_argument("--T-grid", dest="T_grid", default="0:600:50")
    c.add_argument("--n-traj", dest="n_traj", type=int, default=100_000)
    c.add_argument("--pi", type=float, default=None, help=argparse.SUPPRESS)
    c.add_argument("--summary-out", dest="summary_out", default=None)
    c.set_defaults(func=cmd_contour)

    s = sub.add_parser("simulate", help="export simulated trajectories as CSV")
    common(s)
    s.add_argument("--T", type=float, default=None)
    s.add_argument("--n-traj", dest="n_traj", type=int, default=1)
    s.add_argument("--summary-out", dest="summary_out", default=None)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MRPCHAN_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        json.dump(
            {"error": {"type": type(e).__name__, "message": str(e)}},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 2
    except MrpChanError as e:
        json.dump(
            {"error": {"type": type(e).__name__, "message": str(e)}},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

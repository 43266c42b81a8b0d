"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 the fit stopped at
``--max-iters`` without converging (results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import load_bench_spec, run_bench
from .errors import CoclustError
from .itcc import ItccConfig, itcc_fit
from .metrics import ari, ch_index, nmi
from .prob import DEFAULT_PSEUDOCOUNT, normalize_to_joint
from .scicml import VIEW_ROLES, ScicmlConfig, config_dict, scicml0_fit, scicml_fit
from .synth import SynthSpec, generate

log = logging.getLogger("coclust")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _k_values(text: str) -> tuple[int, ...]:
    vals = _int_list(text)
    if len(vals) == 1:
        return (vals[0],) * 4
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("--k takes one value or four comma-separated values")
    if vals[0] != vals[1]:
        raise argparse.ArgumentTypeError(
            f"linked views (1,1) and (1,2) need equal K, got {vals[0]} and {vals[1]}")
    return tuple(vals)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _log1p_override(text: str):
    try:
        role, val = text.split("=")
        role = role.strip()
        if len(role) != 2 or role[0] not in "12" or role[1] not in "12":
            raise ValueError
        return (int(role[0]), int(role[1])), _bool(val)
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(
            f"expected ROLE=BOOL with ROLE in 11,12,21,22, got {text!r}") from None


def _add_fit_flags(p):
    p.add_argument("--n-clusters", type=int, required=True, help="number of sample clusters N")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["kmeans_profiles", "round_robin", "random"], default="kmeans_profiles")
    p.add_argument("--pseudocount", type=float, default=DEFAULT_PSEUDOCOUNT)
    p.add_argument("--update-rule", choices=["exact", "auxiliary", "scaled"], default="exact",
                   help="how candidate moves are scored (default: exact objective change)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--truth", help="CSV of sample_id,label for NMI/ARI in the summary")


def _add_view_flags(p):
    for l, v in VIEW_ROLES:
        p.add_argument(f"--view{l}{v}", required=True, metavar="PATH",
                       help=f"features x samples matrix for view ({l},{v}) (.csv or .mtx)")
    p.add_argument("--log1p", action="append", type=_log1p_override, default=[],
                   metavar="ROLE=BOOL",
                   help="per-view log1p override, e.g. 12=true (default: 11 and 21 on)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coclust", description="Multi-view information-theoretic co-clustering")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_ in (("fit", "fit the matched four-view model"),
                        ("fit0", "fit the ablation without feature-cluster matching")):
        p = sub.add_parser(name, help=help_)
        _add_view_flags(p)
        _add_fit_flags(p)
        p.add_argument("--k", type=_k_values, default=(10, 10, 10, 10),
                       help="feature clusters: one value or four (11,12,21,22)")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--perm-solver", choices=["exhaustive", "assignment", "auto"],
                       default="auto")

    p = sub.add_parser("itcc", help="co-cluster a single view")
    p.add_argument("--view", required=True, metavar="PATH")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--log1p", type=_bool, default=False, metavar="BOOL")
    _add_fit_flags(p)

    p = sub.add_parser("eval", help="NMI and ARI between two label files")
    p.add_argument("labels_a")
    p.add_argument("labels_b")

    p = sub.add_parser("synth", help="generate a planted four-view dataset")
    p.add_argument("--spec", help="JSON file with generator fields")
    p.add_argument("--n", type=int)
    p.add_argument("--q", type=_int_list)
    p.add_argument("--n-clusters", type=int)
    p.add_argument("--k", type=_int_list)
    p.add_argument("--hidden-perm", type=_int_list, help="0-based permutation of K entries")
    p.add_argument("--signal", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=list(io.FORMATS), default="mtx")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="matched vs unmatched fit over synthetic seeds")
    p.add_argument("--spec", help="benchmark JSON (default: the committed spec)")
    p.add_argument("--seeds", type=int)
    p.add_argument("--seed-offset", type=int)
    p.add_argument("--out", help="write per-seed results as JSON here")

    p = sub.add_parser("select-n", help="scan N and report the Calinski-Harabasz index")
    _add_view_flags(p)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--k", type=_k_values, default=(10, 10, 10, 10))
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--pseudocount", type=float, default=DEFAULT_PSEUDOCOUNT)
    return parser


def _validate_fit_args(args):
    if args.n_clusters < 1:
        raise UsageError("--n-clusters must be positive")
    if args.tol < 0 or args.max_iters < 1:
        raise UsageError("--tol must be >= 0 and --max-iters >= 1")
    if args.pseudocount < 0:
        raise UsageError("--pseudocount must be >= 0")
    if getattr(args, "alpha", 0) < 0:
        raise UsageError("--alpha must be >= 0")
    if getattr(args, "restarts", 1) < 1:
        raise UsageError("--restarts must be >= 1")


def _load_four(args):
    paths = {(l, v): getattr(args, f"view{l}{v}") for l, v in VIEW_ROLES}
    flags = dict(io.DEFAULT_LOG1P)
    flags.update(dict(args.log1p))
    views = io.load_views(paths)
    mats = []
    for role in VIEW_ROLES:
        m = views[role].matrix
        mats.append(m.log1p() if flags[role] else m)
    return views, mats, flags


def _truth_labels(path, sample_ids):
    if not path:
        return None
    ids, labels = io.load_labels(path)
    return io.align_to(ids, labels, sample_ids)


def _cmd_fit(args, matching: bool) -> int:
    _validate_fit_args(args)
    views, mats, flags = _load_four(args)
    cfg = ScicmlConfig(
        n_clusters=args.n_clusters, k_features=args.k, alpha=args.alpha,
        max_iters=args.max_iters, tol=args.tol, seed=args.seed, init=args.init,
        pseudocount=args.pseudocount, permutation_solver=args.perm_solver,
        restarts=args.restarts, update_rule=args.update_rule,
    )
    fit = scicml_fit if matching else scicml0_fit
    res = fit(mats, cfg)
    ref = views[VIEW_ROLES[0]]
    truth = _truth_labels(args.truth, ref.sample_ids)
    echo = config_dict(cfg)
    echo["method"] = "scICML" if matching else "scICML0"
    echo["log1p"] = {f"{l}{v}": flags[(l, v)] for l, v in VIEW_ROLES}
    io.save_result(res, args.out, sample_ids=ref.sample_ids,
                   feature_ids=[views[r].feature_ids for r in VIEW_ROLES],
                   truth=truth, config=echo)
    print(f"objective {res.objective:.10g} after {res.iterations} iterations "
          f"({'converged' if res.converged else 'not converged'})")
    if truth is not None:
        print(f"NMI {nmi(truth, res.cell_labels.labels):.4f}  ARI {ari(truth, res.cell_labels.labels):.4f}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_itcc(args) -> int:
    _validate_fit_args(args)
    vm = io.load_matrix(args.view)
    m = vm.matrix.log1p() if args.log1p else vm.matrix
    p = normalize_to_joint(m, args.pseudocount)
    cfg = ItccConfig(k_features=args.k, n_clusters=args.n_clusters, max_iters=args.max_iters,
                     tol=args.tol, seed=args.seed, init=args.init,
                     update_rule=args.update_rule)
    res = itcc_fit(p, cfg)
    out = Path(args.out)
    samples = vm.sample_ids or [f"s{j + 1}" for j in range(p.shape[1])]
    features = vm.feature_ids or [f"f{i + 1}" for i in range(p.shape[0])]
    io.save_labels(out / "cell_labels.csv", samples, res.cy.labels)
    io.save_labels(out / "feature_labels.csv", features, res.cx.labels, "feature_id")
    io.atomic_write_text(out / "trace.csv", "iteration,total\n" + "".join(
        f"{i},{v!r}\n" for i, v in enumerate(res.objective_trace)))
    summary = {"iterations": res.iterations, "converged": res.converged,
               "objective": res.loss, "config": vars(cfg)}
    truth = _truth_labels(args.truth, vm.sample_ids)
    if truth is not None:
        summary["nmi"] = nmi(truth, res.cy.labels)
        summary["ari"] = ari(truth, res.cy.labels)
    io.atomic_write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"loss {res.loss:.10g} after {res.iterations} iterations")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_eval(args) -> int:
    ids_a, a = io.load_labels(args.labels_a)
    ids_b, b = io.load_labels(args.labels_b)
    b = io.align_to(ids_b, b, ids_a)
    print(f"NMI {nmi(a, b):.6f}")
    print(f"ARI {ari(a, b):.6f}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    fields = json.loads(Path(args.spec).read_text()) if args.spec else {}
    for key, attr in (("n", "n"), ("q", "q"), ("n_clusters", "n_clusters"),
                      ("k_features", "k"), ("hidden_permutation", "hidden_perm"),
                      ("signal", "signal"), ("noise", "noise"), ("dropout", "dropout"),
                      ("seed", "seed")):
        val = getattr(args, attr)
        if val is not None:
            fields[key] = val[0] if key in ("q", "k_features") and len(val) == 1 else val
    spec = SynthSpec.from_dict(fields)
    mats, truth = generate(spec)
    out = Path(args.out)
    ext = "mtx" if args.format == "mtx" else "csv"
    samples = [f"cell{j + 1}" for j in range(spec.n)]
    for (l, v), m, lab in zip(VIEW_ROLES, mats, truth.feature_labels):
        features = [f"v{l}{v}_f{i + 1}" for i in range(m.shape[0])]
        io.save_matrix(out / f"view_{l}_{v}.{ext}", m, features, samples, fmt=args.format)
        io.save_labels(out / f"truth_features_{l}_{v}.csv", features, lab, "feature_id")
    io.save_labels(out / "truth_cells.csv", samples, truth.cell_labels)
    io.atomic_write_text(out / "spec.json", json.dumps(spec.to_dict(), indent=2) + "\n")
    print(f"wrote 4 views ({spec.n} samples) to {out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = load_bench_spec(args.spec)
    if args.seeds is not None:
        spec["seeds"] = args.seeds
    if args.seed_offset is not None:
        spec["seed_offset"] = args.seed_offset
    report = run_bench(spec)
    print(report.table())
    if args.out:
        rows = [vars(o) for o in report.outcomes]
        io.atomic_write_text(args.out, json.dumps(rows, indent=2, default=float) + "\n")
    return EXIT_OK


def _cmd_select_n(args) -> int:
    if not 2 <= args.n_min <= args.n_max:
        raise UsageError("need 2 <= --n-min <= --n-max")
    _, mats, _ = _load_four(args)
    joint = [normalize_to_joint(m, args.pseudocount) for m in mats]
    # column profiles p(X|y) of every view, stacked
    profiles = np.vstack([(j.scaled.toarray() + j.background) / j.col_marginals for j in joint])
    print(f"{'N':>4} {'CH':>14}")
    best = None
    for n_cl in range(args.n_min, args.n_max + 1):
        cfg = ScicmlConfig(n_clusters=n_cl, k_features=args.k, alpha=args.alpha, seed=args.seed,
                           tol=args.tol, max_iters=args.max_iters, pseudocount=args.pseudocount)
        res = scicml_fit(joint, cfg)
        score = ch_index(profiles, res.cell_labels.labels, n_cl)
        print(f"{n_cl:>4} {score:14.6g}")
        if best is None or score > best[1]:
            best = (n_cl, score)
    print(f"best N = {best[0]}")
    return EXIT_OK


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:   # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "fit": lambda a: _cmd_fit(a, True),
        "fit0": lambda a: _cmd_fit(a, False),
        "itcc": _cmd_itcc,
        "eval": _cmd_eval,
        "synth": _cmd_synth,
        "bench": _cmd_bench,
        "select-n": _cmd_select_n,
    }
    try:
        return handlers[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CoclustError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

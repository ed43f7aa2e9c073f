"""Command-line frontend: lift inspection, spectrum queries, certificates,
and the Monte Carlo experiment targets, all with deterministic seeded I/O.

Exit codes: 0 on success (and on configured acceptance passing), 1 when a
configured acceptance threshold fails, 2 on usage errors or malformed input
files.  Every output records the fully resolved configuration in its header.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness as hs
from . import rng as _rng
from .matrixio import dump_json, load_matrix_csv, matrix_to_csv
from .spectral import leave_one_out, numerical_rank, singular_values
from .tensor_lift import sym_lift
from .varieties import certify as run_certify
from .varieties import orthonormalize_basis, variety_from_spec

POWERSUM_CHECKS = ["prop71", "prop72", "prop73", "lemma74", "claim76",
                   "claim77", "conj81", "conj82"]

_DEFAULT_THRESHOLDS = {
    "prop71": 1e-8, "prop72": 1e-8, "prop73": 1e-8, "lemma74": 1e-8,
    "claim76": 1e-8, "claim77": 1e-8, "conj81": 1e-6, "conj82": 1e-6,
}


class UsageError(ValueError):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_base_matrix(spec: str, n: int, m: int, seed: int) -> np.ndarray:
    if spec == "id":
        return np.eye(n, m)
    if spec.startswith("random"):
        _, _, tail = spec.partition(":")
        local_seed = int(tail) if tail else seed
        B = _rng.gaussians((n, m), local_seed, "cli", "lift_base")
        return B / np.linalg.norm(B, axis=0)
    if spec.startswith("file:"):
        M = load_matrix_csv(spec[len("file:"):])
        if M.shape != (n, m):
            raise UsageError(f"matrix file has shape {M.shape}, expected ({n}, {m})")
        return M
    raise UsageError(f"unknown matrix spec {spec!r} (use id, random[:seed], file:path)")


def _cmd_lift(args) -> int:
    U = _load_base_matrix(args.matrix, args.n, args.m, args.seed)
    L = sym_lift(U, args.d)
    config = {"command": "lift", "n": args.n, "m": args.m, "d": args.d,
              "matrix": args.matrix, "seed": args.seed}
    header = [f"config: {json.dumps(config, sort_keys=True)}",
              f"descriptor: {json.dumps(L.descriptor(), sort_keys=True)}"]
    _emit(matrix_to_csv(L.data, header), args.out)
    if args.descriptor:
        Path(args.descriptor).write_text(dump_json(L.descriptor()))
    return 0


def _cmd_spectrum(args) -> int:
    A = load_matrix_csv(args.matrix)
    s = singular_values(A)
    payload = {
        "config": {"command": "spectrum", "matrix": args.matrix, "tol": args.tol},
        "shape": list(A.shape),
        "singular_values": [float(x) for x in s],
        "numerical_rank": numerical_rank(A, args.tol),
    }
    if args.leave_one_out:
        payload["leave_one_out"] = leave_one_out(A)
    _emit(dump_json(payload), args.out)
    return 0


def _resolve_basis(spec: str, op, rho: float, seed: int) -> tuple[np.ndarray, bool]:
    """Returns (orthonormal basis, planted?) for the certify subcommand."""
    if spec.startswith("random:"):
        m = int(spec[len("random:"):])
        base = _rng.gaussians((op.n, m), seed, "cli", "basis")
        base /= np.linalg.norm(base, axis=0)
        pert = base + rho * _rng.gaussians((op.n, m), seed, "cli", "basis_noise") \
            if rho > 0 else base
        return orthonormalize_basis(pert), False
    if spec.startswith("planted:"):
        path, _, index = spec[len("planted:"):].partition("+")
        if not index:
            raise UsageError("planted basis needs the form planted:path.csv+index")
        B = load_matrix_csv(path)
        idx = int(index)
        if not 0 <= idx < B.shape[1]:
            raise UsageError(f"planted column index {idx} out of range")
        order = [idx] + [j for j in range(B.shape[1]) if j != idx]
        return orthonormalize_basis(B[:, order], keep_first=True), True
    path = spec[len("file:"):] if spec.startswith("file:") else spec
    return orthonormalize_basis(load_matrix_csv(path)), False


def _cmd_certify(args) -> int:
    op = variety_from_spec(args.variety)
    basis, planted = _resolve_basis(args.basis, op, args.rho, args.seed)
    report = run_certify(op, basis, tolerance=args.tol)
    payload = {
        "config": {"command": "certify", "variety": args.variety,
                   "basis": args.basis, "rho": args.rho, "seed": args.seed,
                   "tol": args.tol, "planted": planted,
                   "generator_count": op.p},
    }
    payload.update(report.to_json())
    _emit(dump_json(payload), args.out)
    return 0


def _cmd_experiment(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
    config = hs.ExperimentConfig.from_dict(raw)
    result = hs.run_experiment(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{config.name}.csv"
    json_path = out_dir / f"{config.name}_summary.json"
    csv_path.write_text(result.to_csv())
    json_path.write_text(dump_json(result.summary()))
    sys.stdout.write(f"wrote {csv_path} and {json_path}\n")
    return 0 if result.accepted() else 1


def _cmd_powersum(args) -> int:
    params: dict = {}
    for key in ("n", "m", "ell", "s", "d", "r", "dim", "N"):
        value = getattr(args, key if key != "N" else "rows")
        if value is not None:
            params[key] = value
    threshold = args.threshold if args.threshold is not None \
        else _DEFAULT_THRESHOLDS[args.check]
    config = hs.ExperimentConfig(
        target=args.check, params=params, rho_grid=[args.rho],
        trials=args.trials, master_seed=args.seed, threshold=threshold,
        name=f"powersum_{args.check}", min_passes=args.min_passes)
    result = hs.run_experiment(config)
    lines = [f"# config: {json.dumps(config.resolved(), sort_keys=True)}"]
    lines.append("trial,seed,sigma_target,threshold,pass")
    for r in result.reports:
        from .matrixio import format_float
        lines.append(",".join([str(r.trial), str(r.seed), format_float(r.sigma),
                               format_float(r.threshold), str(int(r.passed))]))
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if result.accepted() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liftcert",
        description="Symmetrized tensor lifts of smoothed matrices: builders, "
                    "distance certificates, and Monte Carlo experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_lift = sub.add_parser("lift", help="emit the symmetric lift of a matrix as CSV")
    p_lift.add_argument("--n", type=int, required=True)
    p_lift.add_argument("--m", type=int, required=True)
    p_lift.add_argument("--d", type=int, required=True)
    p_lift.add_argument("--matrix", default="id",
                        help="id | random[:seed] | file:path.csv")
    p_lift.add_argument("--seed", type=int, default=0)
    p_lift.add_argument("--out", default=None)
    p_lift.add_argument("--descriptor", default=None,
                        help="also write the JSON column descriptor here")
    p_lift.set_defaults(func=_cmd_lift)

    p_spec = sub.add_parser("spectrum", help="singular values and rank of a CSV matrix")
    p_spec.add_argument("--matrix", required=True)
    p_spec.add_argument("--tol", type=float, default=None)
    p_spec.add_argument("--leave-one-out", action="store_true")
    p_spec.add_argument("--out", default=None)
    p_spec.set_defaults(func=_cmd_spectrum)

    p_cert = sub.add_parser("certify",
                            help="certificate that a subspace is far from a variety")
    p_cert.add_argument("--variety", required=True,
                        help="determinantal:n1,n2,r or separable:n1,n2[,...]")
    p_cert.add_argument("--basis", required=True,
                        help="random:m | file:path.csv | path.csv | planted:path.csv+index")
    p_cert.add_argument("--rho", type=float, default=0.0,
                        help="perturbation scale for random bases")
    p_cert.add_argument("--seed", type=int, default=0)
    p_cert.add_argument("--tol", type=float, default=1e-9)
    p_cert.add_argument("--out", default=None)
    p_cert.set_defaults(func=_cmd_certify)

    p_exp = sub.add_parser(
        "experiment",
        help="run a JSON-configured Monte Carlo experiment",
        description="Targets: " + ", ".join(hs.TARGET_NAMES)
                    + ". The config file fields are target, params, rho_grid, "
                      "trials, master_seed, threshold, name, min_passes, study.")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out-dir", default=".")
    p_exp.set_defaults(func=_cmd_experiment)

    p_pow = sub.add_parser("powersum", help="run one structured-matrix check")
    p_pow.add_argument("--check", required=True, choices=POWERSUM_CHECKS)
    p_pow.add_argument("--n", type=int, default=None)
    p_pow.add_argument("--m", type=int, default=None)
    p_pow.add_argument("--ell", type=int, default=None)
    p_pow.add_argument("--s", type=int, default=None)
    p_pow.add_argument("--d", type=int, default=None)
    p_pow.add_argument("--r", type=int, default=None)
    p_pow.add_argument("--dim", type=int, default=None)
    p_pow.add_argument("--N", type=int, default=None, dest="rows")
    p_pow.add_argument("--rho", type=float, required=True)
    p_pow.add_argument("--trials", type=int, required=True)
    p_pow.add_argument("--seed", type=int, required=True)
    p_pow.add_argument("--threshold", type=float, default=None)
    p_pow.add_argument("--min-passes", type=int, default=None)
    p_pow.add_argument("--out", default=None)
    p_pow.set_defaults(func=_cmd_powersum)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

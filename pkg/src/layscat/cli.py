"""Command-line entry point: ``layscat {solve,ffmatrix,verify,oracle}``.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 numerical failure.
The thread count for BLAS comes from ``--threads`` or ``LAYSCAT_THREADS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import oracle, verify
from .config import RunConfig
from .errors import ConfigError, InvalidInputError, NumericalError, ProbeHypothesisError
from .fields import boundary_traces, far_field, read_far_field_csv
from .solver import PlaneWave, build_block_operator, build_rhs, solve_many

log = logging.getLogger("layscat")

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

SUITES = ("reciprocity", "energy", "transmission", "convergence", "probe", "coincidence")
DEFAULT_SUITE = ("reciprocity", "energy", "transmission")


def _run_dir(cfg: RunConfig, out: Optional[str]) -> Path:
    base = Path(out or cfg.data["outputs"]["directory"])
    path = base / cfg.digest[:16]
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dump_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve(cfg: RunConfig, out: Optional[str]) -> int:
    run = _run_dir(cfg, out)
    sc = cfg.scattering_config()
    incidents = cfg.incidents()
    system = build_block_operator(sc)
    R = np.stack([build_rhs(inc, sc) for inc in incidents], axis=1)
    dens = solve_many(system, R)
    dirs, _ = cfg.far_field_directions()
    runlog = {"config_digest": cfg.digest, "unknowns": system.size,
              "condition_estimate": dens[0].condition, "solves": []}
    for i, (inc, den) in enumerate(zip(incidents, dens)):
        ff = far_field(den, sc, dirs, inc.tag())
        ff.write(run / f"farfield_{i:03d}", cfg.digest)
        tr = boundary_traces(den, sc)
        np.savez(run / f"densities_{i:03d}.npz", psi=den.psi, phi=den.phi, chi=den.chi,
                 varphi=den.varphi, config_digest=cfg.digest)
        np.savez(run / f"traces_{i:03d}.npz", u=tr.u, du=tr.du, v=tr.v, dv=tr.dv,
                 v_S1=tr.v1, dv_gamma1=tr.dv1, config_digest=cfg.digest)
        runlog["solves"].append({"index": i, "incidence": inc.tag(), "residual": den.residual})
    _dump_json(run / "solve_log.json", runlog)
    print(f"solved {len(incidents)} incidence(s), N={system.size}, "
          f"condition {dens[0].condition:.3e}; artifacts in {run}")
    return EXIT_OK


def cmd_ffmatrix(cfg: RunConfig, out: Optional[str], n_incident: Optional[int]) -> int:
    """Plane-wave incidences: the configured ones, then the observation grid."""
    run = _run_dir(cfg, out)
    sc = cfg.scattering_config()
    dirs, _ = cfg.far_field_directions()
    pool = [np.asarray(d) for d in cfg.data["incidence"]["plane_waves"]] + list(dirs)
    n = len(cfg.data["incidence"]["plane_waves"]) if n_incident is None else n_incident
    if n < 1 or n > len(pool):
        raise InvalidInputError(f"--n-incident must be between 1 and {len(pool)}")
    inc = np.array(pool[:n])
    U = verify.far_field_matrix(sc, dirs, inc)
    theta = np.arccos(np.clip(dirs[:, 2], -1, 1))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    with open(run / "ffmatrix.csv", "w", newline="\n") as fh:
        fh.write(f"# config_digest {cfg.digest}\n")
        fh.write(f"# n_observation {len(dirs)} n_incident {n}\n")
        for j, d in enumerate(inc):
            fh.write(f"# incident {j} {d[0]:.17g} {d[1]:.17g} {d[2]:.17g}\n")
        cols = ",".join(f"re_{j},im_{j}" for j in range(n))
        fh.write(f"theta,phi,{cols}\n")
        for i in range(len(dirs)):
            vals = ",".join(f"{U[i, j].real:.17g},{U[i, j].imag:.17g}" for j in range(n))
            fh.write(f"{theta[i]:.17g},{phi[i]:.17g},{vals}\n")
    print(f"far-field matrix {len(dirs)}x{n} written to {run / 'ffmatrix.csv'}")
    return EXIT_OK


def _oracle_reference(cfg: RunConfig):
    sc = cfg.scattering_config()
    med = oracle.LayeredSphere.from_config(sc)
    part = cfg.data["geometry"]["partition"]
    if part == "all-dirichlet":
        core = "soft"
    elif part == "all-impedance":
        core = "impedance"
    else:
        raise InvalidInputError("oracle requires a purely Dirichlet or purely impedance core")
    return med, core, cfg.data["medium"]["impedance"]


def run_suite(cfg: RunConfig, suite: Sequence[str]) -> verify.VerifyReport:
    sc = cfg.scattering_config()
    if "probe" in suite and sc.lambda0 == 1.0:
        raise ProbeHypothesisError("probe suite requires lambda0 != 1")
    report = verify.VerifyReport(cfg.digest)
    system = build_block_operator(sc)
    n0 = cfg.data["discretization"]["n_polar_S0"]
    waves = cfg.data["incidence"]["plane_waves"] or [[0.0, 0.0, 1.0]]
    d = np.asarray(waves[0])
    tol = None

    if "reciprocity" in suite:
        r = verify.reciprocity_residual(sc, system=system)
        report.checks.append(verify.CheckResult("reciprocity", r <= 1e-5, r, 1e-5))
    if "energy" in suite:
        e = verify.energy_check(sc, d, system=system)
        limit = 1e-5 if e.lossless else 0.0
        report.checks.append(verify.CheckResult("energy", e.passed, e.relative, limit, e.sign))
    if "transmission" in suite:
        den = solve_many(system, build_rhs(PlaneWave(d), sc)[:, None])[0]
        rn = verify.transmission_residual(den, sc, PlaneWave(d))
        ro = verify.transmission_residual(den, sc, PlaneWave(d), offset=True)
        worst = max(rn.worst, ro.worst)
        report.checks.append(verify.CheckResult("transmission", worst <= 1e-5, worst, 1e-5,
                                                f"nodes {rn.worst:.2e} offset {ro.worst:.2e}"))
    if "convergence" in suite or "coincidence" in suite:
        res = sorted({max(6, n0 // 2), max(7, (3 * n0) // 4), n0})
        ref = None
        try:
            med, core, lam = _oracle_reference(cfg)
            coeffs = oracle.mie_layered(med, core, d, cfg.data["discretization"]["oracle_order"], lam)
            ref = lambda dirs: oracle.far_field_values(coeffs, dirs)  # noqa: E731
        except InvalidInputError:
            pass
        table = verify.convergence_study(cfg.scattering_config, PlaneWave(d), res, ref)
        tol = table.errors[-1]
        if "convergence" in suite:
            report.checks.append(verify.CheckResult(
                "convergence", table.monotone(), table.errors[-1], table.errors[0],
                f"{table.reference}: " + " ".join(f"{e:.2e}" for e in table.errors)))
    if "probe" in suite:
        reps = verify.interface_probe(sc, 0, system=system)
        v = [r.sup_v_away for r in reps]
        p = {r.j: r.sup_phi_near for r in reps}
        growth = [p[2 * j] / p[j] for j in p if 2 * j in p and j >= 2]
        ok = max(v) / min(v) <= 3 and all(1.8 <= g <= 2.2 for g in growth)
        report.checks.append(verify.CheckResult("probe", ok, max(v) / min(v), 3.0,
                                                "phi growth " + " ".join(f"{g:.3f}" for g in growth)))
    if "coincidence" in suite:
        same = verify.coincidence_test(sc, sc)
        geo = cfg.to_dict()["geometry"]
        S0 = geo["S0"]
        if S0["type"] == "sphere":
            S0["radius"] *= 1.05
        else:
            S0["coeffs"] = [[n, m, c * 1.05] for n, m, c in S0["coeffs"]]
        other = cfg.with_changes(geometry={"S0": S0}).scattering_config()
        dist = verify.coincidence_test(sc, other)
        ok = same <= 1e-12 and dist >= 10 * tol
        report.checks.append(verify.CheckResult("coincidence", ok, dist, 10 * tol,
                                                f"self {same:.1e}"))
    return report


def _sidecar_digest(csv_path: str) -> str:
    side = Path(csv_path).with_suffix(".json")
    try:
        return json.loads(side.read_text())["config_digest"]
    except (OSError, ValueError, KeyError):
        raise InvalidInputError(f"{csv_path}: missing or unreadable JSON sidecar {side.name}") from None


def diff_far_fields(cfg: RunConfig, path_a: str, path_b: str, tol: float = 1e-5) -> verify.CheckResult:
    """Relative max-norm distance of two far-field CSVs written for this config."""
    for path in (path_a, path_b):
        if _sidecar_digest(path) != cfg.digest:
            raise InvalidInputError(f"{path} was produced by a different config digest")
    a, b = read_far_field_csv(path_a), read_far_field_csv(path_b)
    if a.directions.shape != b.directions.shape or np.abs(a.directions - b.directions).max() > 1e-12:
        raise InvalidInputError("far-field files use different direction grids")
    scale = np.abs(a.values).max()
    dist = float(np.abs(a.values - b.values).max() / scale) if scale > 0 else 0.0
    return verify.CheckResult("diff", dist <= tol, dist, tol, f"{Path(path_a).name} vs {Path(path_b).name}")


def cmd_verify(cfg: RunConfig, out: Optional[str], suite: Sequence[str],
               diff: Optional[Sequence[str]] = None) -> int:
    run = _run_dir(cfg, out)
    if diff:
        report = verify.VerifyReport(cfg.digest, [diff_far_fields(cfg, *diff)])
    else:
        report = run_suite(cfg, suite)
    (run / "verify_report.json").write_text(report.to_json() + "\n")
    (run / "verify_report.txt").write_text(report.to_text() + "\n")
    print(report.to_text())
    if not report.passed:
        print("failing checks: " + ", ".join(report.failing()), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out: Optional[str]) -> int:
    med, core, lam = _oracle_reference(cfg)
    run = _run_dir(cfg, out)
    dirs, _ = cfg.far_field_directions()
    N = cfg.data["discretization"]["oracle_order"]
    for i, d in enumerate(cfg.data["incidence"]["plane_waves"]):
        coeffs = oracle.mie_layered(med, core, d, N, lam)
        ff = oracle.oracle_far_field(coeffs, dirs)
        ff.write(run / f"oracle_farfield_{i:03d}", cfg.digest, {"order": coeffs.order})
    print(f"oracle far fields written to {run}")
    return EXIT_OK


def parse_suite(text: Optional[str]) -> tuple:
    if text is None:
        return DEFAULT_SUITE
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    unknown = [s for s in names if s not in SUITES and s != "all"]
    if unknown or not names:
        raise InvalidInputError(f"unknown suite entry {unknown[0] if unknown else text!r}; "
                                f"choose from {', '.join(SUITES)} or all")
    return SUITES if "all" in names else names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layscat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "ffmatrix", "verify", "oracle"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", help="output root (default: outputs.directory)")
        s.add_argument("--threads", type=int, help="BLAS thread count")
        if name == "ffmatrix":
            s.add_argument("--n-incident", type=int, help="number of incident directions")
        if name == "verify":
            s.add_argument("--suite", help="comma-separated checks: " + ",".join(SUITES) + " or all")
            s.add_argument("--diff", nargs=2, metavar="CSV",
                           help="compare two far-field CSVs of this config instead of running checks")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("LAYSCAT_LOG", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        threads = args.threads
        if threads is None and os.environ.get("LAYSCAT_THREADS"):
            try:
                threads = int(os.environ["LAYSCAT_THREADS"])
            except ValueError:
                raise InvalidInputError("LAYSCAT_THREADS must be an integer") from None
        if threads is not None and threads < 1:
            raise InvalidInputError("--threads must be at least 1")
        cfg = RunConfig.load(args.config)
        with threadpool_limits(limits=threads):
            if args.command == "solve":
                return cmd_solve(cfg, args.out)
            if args.command == "ffmatrix":
                return cmd_ffmatrix(cfg, args.out, args.n_incident)
            if args.command == "verify":
                return cmd_verify(cfg, args.out, parse_suite(args.suite), args.diff)
            return cmd_oracle(cfg, args.out)
    except (InvalidInputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Every subcommand writes its tables to the output directory together with
``config.yaml``, the fully resolved configuration that produced them.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .acceptance import VerifyConfig, averaged_fringe, interference_fit, run_criteria
from .ensemble import EnsembleSpec, run_ensemble
from .lindblad import DephasingSpinModel, dephasing_exact_array, initial_density, integrate_master
from .results import ResultTable
from .sse import SdeConfig

log = logging.getLogger("gaugephase")

FIT_TOL = 1e-6


class Run:
    """Resolved configuration plus helpers shared by the subcommands."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["output"]["directory"])
        self.formats = tuple(cfg["output"]["formats"])

    def spin(self, lam: float | None = None) -> DephasingSpinModel:
        m = self.cfg["model"]
        return DephasingSpinModel(m["mu_b"], m["lambda"] if lam is None else lam, m["theta"])

    @property
    def sde(self) -> SdeConfig:
        s = self.cfg["sde"]
        return SdeConfig(dt=s["dt"], t_final=s["t_final"], record_stride=s["record_stride"],
                         renormalize_each_step=s["renormalize"])

    @property
    def threads(self) -> int:
        return max(1, int(self.cfg["ensemble"]["threads"]))

    def spec(self, phi: float, lam: float | None = None, sde: SdeConfig | None = None) -> EnsembleSpec:
        e = self.cfg["ensemble"]
        return EnsembleSpec.for_spin(self.spin(lam), phi, sde or self.sde, n_traj=e["n_traj"],
                                     master_seed=e["master_seed"], equation=e["equation"],
                                     chunk_size=e["chunk_size"])

    def prepare(self) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            cfgmod.dump(self.cfg, self.out / "config.yaml")
        except OSError as exc:
            raise SystemExit(f"cannot write to output directory {self.out}: {exc}") from exc

    def emit(self, table: ResultTable, stem: str) -> list[Path]:
        paths = table.write(self.out / stem, self.formats)
        for p in paths:
            log.info("wrote %s", p)
        return paths


def _header(run: Run) -> list[str]:
    m, s = run.cfg["model"], run.cfg["sde"]
    return [f"mu_b={m['mu_b']!r} lambda={m['lambda']!r} theta={m['theta']!r} rad",
            f"dt={s['dt']!r} t_final={s['t_final']!r}", "angles in radians, times in units of 1/mu_b"]


def _gauge_tag(phi: float) -> str:
    return f"phi={phi:.6f}"


def _entries(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{part}_rho_{i}{j}" for i in range(d) for j in range(d) for part in ("re", "im")]


def _split(rho: np.ndarray) -> list[float]:
    flat = rho.reshape(-1)
    return [v for z in flat for v in (float(z.real), float(z.imag))]


def cmd_master(run: Run) -> ResultTable:
    spin = run.spin()
    s = run.sde
    path = integrate_master(spin.lindblad(), initial_density(spin), s.t_final, s.dt, stride=s.record_stride)
    exact = dephasing_exact_array(spin, path.times)
    table = ResultTable(["t", *_entries("", 2), *_entries("exact_", 2), "abs_rho_01", "abs_deviation"],
                        comments=_header(run) + ["rho columns from RK4, exact_ columns closed form",
                                                 "abs_deviation = max entrywise |rho - exact|"])
    for t, rho, ex in zip(path.times, path.rhos, exact):
        table.add(t, *_split(rho), *_split(ex), abs(rho[0, 1]), float(np.max(np.abs(rho - ex))))
    run.emit(table, "master")
    return table


def _bloch_rows(states: np.ndarray) -> np.ndarray:
    a, b = states[:, 0], states[:, 1]
    n2 = np.abs(a) ** 2 + np.abs(b) ** 2
    c = np.conj(a) * b
    return np.column_stack([2 * c.real / n2, 2 * c.imag / n2, (np.abs(a) ** 2 - np.abs(b) ** 2) / n2])


def cmd_trajectories(run: Run) -> dict[float, ResultTable]:
    opts = run.cfg["trajectories"]
    tables = {}
    for phi in run.cfg["gauges"]:
        st = run_ensemble(run.spec(phi), run.threads, keep_trajectories=int(opts["dump"]))
        table = ResultTable(["t", "mean_sz", "stderr_sz", "mean_sz2", "stderr_sz2"],
                            comments=_header(run) + [f"gauge phi={phi!r} rad, n_traj={st.n_traj}",
                                                     "sz is the quantum expectation <sigma_z> per trajectory"])
        for row in zip(st.times, st.mean_sz, st.stderr_sz, st.mean_sz2, st.stderr_sz2):
            table.add(*row)
        run.emit(table, f"trajectories_{_gauge_tag(phi)}")
        tables[phi] = table
        if st.trajectories:
            stride = max(1, int(opts["dump_stride"]))
            dump = ResultTable(["trajectory", "t", "bloch_x", "bloch_y", "bloch_z", "dyn_phase"],
                               comments=[f"gauge phi={phi!r} rad, every {stride}th record"])
            for i, tr in enumerate(st.trajectories):
                keep = np.unique(np.r_[np.arange(0, len(tr.times), stride), len(tr.times) - 1])
                xyz = _bloch_rows(tr.states[keep])
                for k, (x, y, z) in zip(keep, xyz):
                    dump.add(i, tr.times[k], x, y, z, tr.dyn_phase_path[k])
            run.emit(dump, f"paths_{_gauge_tag(phi)}")
    return tables


PHASE_COLUMNS = [
    "phi", "total_phase", "stderr_total_phase", "visibility", "stderr_visibility",
    "dyn_phase_average", "stderr_dyn_phase_average", "dyn_factor_average", "stderr_dyn_factor_average",
    "geo_phase_average", "stderr_geo_phase_average", "geo_factor_average", "stderr_geo_factor_average",
    "sz2_integral",
]


def cmd_phase_scan(run: Run) -> ResultTable:
    gauges = run.cfg["gauges"]
    if len(gauges) < 2:
        raise cfgmod.ConfigError("phase-scan needs at least two gauge angles")
    table = ResultTable(PHASE_COLUMNS, comments=_header(run) + [
        "all gauges share one set of Wiener increments",
        "*_phase_average averages the accumulated phase, *_factor_average takes Arg of the mean phase factor",
    ])
    for phi in gauges:
        p = run_ensemble(run.spec(phi), run.threads).phase_summary
        table.add(phi, p.mean_total, p.stderr_total, p.visibility, p.stderr_visibility,
                  p.mean_dyn_phase_average, p.stderr_dyn_phase_average,
                  p.mean_dyn_factor_average, p.stderr_dyn_factor_average,
                  p.mean_geo_by_phase, p.stderr_geo_by_phase,
                  p.mean_geo_by_factor, p.stderr_geo_by_factor, p.mean_sz2_integral)
    run.emit(table, "phase_scan")
    return table


def cmd_interference(run: Run) -> tuple[ResultTable, ResultTable]:
    opts = run.cfg["interference"]
    n_chi = int(opts["chi_points"])
    if n_chi < 1:
        raise cfgmod.ConfigError("interference.chi_points must be >= 1")
    chi = np.linspace(-np.pi, np.pi, n_chi)
    lambdas = list(opts["lambdas"]) or [run.cfg["model"]["lambda"]]
    curve = ResultTable(["lambda", "phi", "chi", "intensity"],
                        comments=_header(run) + ["intensity = 1/2 + (visibility/2) cos(chi - total_phase)"])
    fits = ResultTable(["lambda", "phi", "fitted_visibility", "fitted_total_phase", "fit_rms",
                        "visibility", "stderr_visibility", "total_phase", "stderr_total_phase", "fit_consistent"],
                       comments=_header(run) + ["fitted_* from least squares on the curve, others direct"])
    for lam in lambdas:
        for phi in run.cfg["gauges"]:
            st = run_ensemble(run.spec(phi, lam), run.threads)
            p = st.phase_summary
            I = averaged_fringe(st, chi)
            for c, v in zip(chi, I):
                curve.add(lam, phi, c, v)
            if n_chi >= 2:
                nu, gamma, rms = interference_fit(chi, I)
            else:
                nu = gamma = rms = float("nan")
            consistent = abs(nu - p.visibility) <= FIT_TOL + rms
            if p.total_defined:
                consistent &= abs(np.angle(np.exp(1j * (gamma - p.mean_total)))) <= FIT_TOL + rms
            fits.add(lam, phi, nu, gamma, rms, p.visibility, p.stderr_visibility,
                     p.mean_total, p.stderr_total, bool(consistent))
    run.emit(curve, "interference")
    run.emit(fits, "interference_fit")
    return curve, fits


def cmd_verify(run: Run) -> int:
    m, s, e = run.cfg["model"], run.cfg["sde"], run.cfg["ensemble"]
    vc = VerifyConfig(mu_b=m["mu_b"], lam=m["lambda"], theta=m["theta"], dt=s["dt"], t_final=s["t_final"],
                      n_traj=e["n_traj"], master_seed=e["master_seed"], n_workers=run.threads,
                      n_paths=run.cfg["verify"]["n_paths"])
    results = []
    for r in run_criteria(vc):
        print(r.line(), flush=True)
        results.append(r)
    ok = all(r.passed for r in results)
    report = {"passed": ok, "criteria": [r.as_dict() for r in results]}
    (run.out / "verify.json").write_text(json.dumps(report, indent=1, default=float))
    table = ResultTable(["number", "status", "passed"], comments=[r.line() for r in results])
    for r in results:
        table.add(r.number, r.status, r.passed)
    table.write_csv(run.out / "verify.csv")
    print("all criteria passed" if ok else "some criteria did not pass")
    return 0 if ok else 1


COMMANDS = {
    "master": cmd_master,
    "trajectories": cmd_trajectories,
    "phase-scan": cmd_phase_scan,
    "interference": cmd_interference,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaugephase", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML configuration file")
        p.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
        p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="master seed (overrides ensemble.master_seed)")
        p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    return parser


def resolve_args(args: argparse.Namespace) -> dict:
    raw = cfgmod.load(args.config) if args.config else {}
    cfg = cfgmod.resolve(raw, preset=args.preset)
    if args.out is not None:
        cfg["output"]["directory"] = str(args.out)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise cfgmod.ConfigError("--seed must be an unsigned 64-bit integer")
        cfg["ensemble"]["master_seed"] = args.seed
    if args.threads is not None:
        cfg["ensemble"]["threads"] = max(1, args.threads)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        run = Run(resolve_args(args))
    except (cfgmod.ConfigError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    run.prepare()
    try:
        result = COMMANDS[args.command](run)
    except cfgmod.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())

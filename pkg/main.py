#!/usr/bin/env python3
"""
Seasonal Analysis - consumer-resource control and ESS toolkit
Command-line entry point: field synthesis, certification, simulation, DP
oracle, homogeneity reduction and population experiments.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from modules.dp_oracle import (
    FullGridSpec,
    ReducedGridSpec,
    bang_fraction_after_junction,
    coast_fraction_above_switch_line,
    compare_boundary,
    compare_with_field,
    control_mesh,
    extract_policy_boundary,
    refinement_study,
    solve_full,
    solve_reduced,
)
from modules.errors import (
    DivergenceError,
    InvalidStateError,
    SeasonalModelError,
    SeasonTooShortError,
)
from modules.exports import render_report, write_csv, write_json
from modules.field_rollout import adjoint_sweep, check_sigma_signs, rollout_field
from modules.field_synthesis import (
    AnchorKind,
    FieldKind,
    build_field,
    coop_arc_lambert,
    coop_arc_time,
    ess_fixed_point,
    junction,
    printed_arc_residual,
    sample_anchors,
    sigma_m_on_u0_ess_tributary,
    sigma_on_u0_tributary,
    verify_tributary_sign,
)
from modules.hjb_check import HJBGrid, hjb_residual
from modules.homogeneous import (
    check_homogeneity,
    consumer_resource_problem,
    hamiltonian_agreement,
    reduce,
    reduction_commutes,
    verify_value_homogeneity,
)
from modules.model_core import ControlSchedule, ResidentState
from modules.mutant_game import MutantGame, Verdict, rollout_resident
from modules.population import Mode, convergence_sweep, simulate_population
from modules.run_config import RunConfig, apply_overrides, default_config, load_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SHORT_SEASON = 2
EXIT_INVADABLE = 3
EXIT_NUMERICS = 4

TRIBUTARY_ANCHORS = 10
GRID_EXPORT_NODES = 201


class SeasonalAnalysisApp:
    """Runs one analysis command against a validated configuration."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        level = logging.INFO
        if getattr(args, "verbose", False):
            level = logging.DEBUG
        elif getattr(args, "quiet", False):
            level = logging.WARNING
        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        self.logger = logging.getLogger(__name__)
        self.logger.setLevel(level)
        self.config = None
        self.run = None

    def _load_config(self) -> Dict[str, Any]:
        """Defaults, then the config file, then --set overrides, then global flags."""
        explicit = self.args.config is not None
        config = load_config(self.args.config if explicit else "config.json", required=explicit)
        flags = list(self.args.set or [])
        if self.args.out is not None:
            flags.append(f"run.output_dir={json.dumps(self.args.out)}")
        if self.args.seed is not None:
            flags.append(f"run.seed={self.args.seed}")
        if self.args.jobs is not None:
            flags.append(f"run.jobs={self.args.jobs}")
        return apply_overrides(config, flags)

    def _get_default_config(self) -> Dict[str, Any]:
        return default_config()

    def _output_dir(self, name: str) -> Path:
        out = Path(self.run.output_dir) / name
        out.mkdir(parents=True, exist_ok=True)
        return out

    def _build_field(self, kind: str):
        section = self.run.section("field")
        return build_field(kind, self.run.params, samples=section["boundary_samples"],
                           band_factor=section["band_factor"])

    def _finish(self, out: Path, command: str, summary: Dict[str, Any], files: List[Path]) -> None:
        report = render_report(out, command, summary, files)
        self.logger.info(f"Wrote {len(files) + 1} files to {out}")
        self.logger.debug(f"Report at {report}")

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------

    def cmd_synthesize(self, kind: str) -> int:
        params = self.run.params
        junction(params)
        field = self._build_field(kind)
        out = self._output_dir(f"synthesize-{kind}")
        files = []

        arc = field.arc
        sigma, sigma_m = arc.switching_values(params)
        own_sigma = sigma if field.kind is FieldKind.COOPERATIVE else sigma_m
        files.append(write_csv(out / f"singular_arc_{kind}.csv", {
            "t": arc.t, "x": arc.x, "u": arc.u, "lambda": arc.lam, "mu": arc.mu, "sigma": own_sigma,
        }))

        line_t = np.linspace(params.t_hat, params.T, 1001)
        line_x = field.boundary(line_t)
        files.append(write_csv(out / "switch_line.csv", {
            "t": line_t, "x": line_x, "u": np.zeros_like(line_t), "lambda": line_x / params.b,
            "mu": np.zeros_like(line_t), "sigma": np.zeros_like(line_t),
        }))

        bt, bx = field.sample_boundary()
        files.append(write_csv(out / f"boundary_{kind}.csv", {"t": bt, "x": bx, "u": field.control(bt, bx)}))

        arc_kind = AnchorKind.COOP_ARC if field.kind is FieldKind.COOPERATIVE else AnchorKind.ESS_ARC
        rows = []
        for anchor_kind in (AnchorKind.SWITCH_LINE, arc_kind):
            for anchor in sample_anchors(anchor_kind, params, TRIBUTARY_ANCHORS, arc=arc):
                rep = verify_tributary_sign(anchor, anchor_kind, params)
                rows.append(rep)
        files.append(write_csv(out / f"tributaries_{kind}.csv", {
            "anchor": [r.kind.value for r in rows],
            "t_s": [r.t_s for r in rows],
            "x_s": [r.x_s for r in rows],
            "L_at_anchor": [r.L_at_anchor for r in rows],
            "L_max": [r.L_max for r in rows],
            "sigma_min": [r.sigma_min for r in rows],
            "max_disagreement": [r.max_disagreement for r in rows],
            "passed": [r.passed for r in rows],
        }))

        # coasting tributaries leave the arc backward in time; their switching value must not be positive
        offsets = np.linspace(0.0, params.t_hat, 51)[1:]
        picks = np.linspace(0, arc.t.size - 1, 20).round().astype(int)
        coast_max = -np.inf
        for i in picks:
            t_s, x_s = arc.t[i], arc.x[i]
            t = np.clip(t_s - offsets, 0.0, None)
            if field.kind is FieldKind.COOPERATIVE:
                values = sigma_on_u0_tributary(t, t_s, x_s, params)
            else:
                values = sigma_m_on_u0_ess_tributary(t, t_s, x_s, params)
            coast_max = max(coast_max, float(np.max(values)))

        left, right = field.junction_slopes()
        summary = {
            "kind": field.kind.value,
            "t_hat": params.t_hat,
            "x_hat": params.x_hat,
            "x_T": params.b / (4.0 * params.a),
            "x_bar": ess_fixed_point(params),
            "u_sigma_range": [float(np.min(arc.u)), float(np.max(arc.u))],
            "long_season": params.long_season,
            "junction_slopes": {"left": left, "right": right},
            "smooth_junction": field.is_smooth(),
            "arc_clamped": arc.clamped,
            "tributaries": {"checked": len(rows), "passed": sum(r.passed for r in rows)},
            "u0_tributary_sigma_max": coast_max,
        }
        if field.kind is FieldKind.COOPERATIVE:
            inner = arc.x > 0
            summary["arc_relation"] = {
                "quadrature_max_residual": float(np.max(np.abs(coop_arc_time(arc.x[inner], params) - arc.t[inner]))),
                "printed_max_residual": float(np.max(np.abs(printed_arc_residual(arc.x[inner], arc.t[inner], params)))),
                "lambert_max_gap": float(np.max(np.abs(coop_arc_lambert(arc.t, params) - arc.x))),
            }
            before = arc.t < params.t_hat
            summary["mutant_sigma_on_arc_min"] = float(np.min(sigma_m[before])) if np.any(before) else 0.0
            grid = HJBGrid.from_config(self.run.section("hjb"), params.b / params.a)
            hjb = hjb_residual(field, grid)
            summary["hjb"] = {
                "max_residual": hjb.max_residual,
                "mean_residual": hjb.mean_residual,
                "interior_nodes": hjb.interior_nodes,
                "argmax_agreement": hjb.argmax_agreement,
            }
        files.append(write_json(out / "summary.json", summary, "synthesize"))
        self._finish(out, "synthesize", summary, files)
        return EXIT_OK

    def cmd_certify(self, kind: str) -> int:
        field = self._build_field(kind)
        game = MutantGame(self.run.raw, self.run.params)
        report = game.certify(field, self.run.p0, self.run.n0)
        out = self._output_dir(f"certify-{kind}")
        payload = report.as_dict()
        payload["kind"] = field.kind.value
        files = [write_json(out / "invasion_report.json", payload, "certify")]
        t = report.resident_schedule.edges[:-1]
        files.append(write_csv(out / "schedules.csv", {
            "t": t,
            "u_resident": report.resident_schedule(t),
            "u_mutant_br": report.best_response(t),
        }))
        self._finish(out, "certify", payload, files)
        return EXIT_OK if report.verdict is Verdict.UNINVADABLE else EXIT_INVADABLE

    def cmd_simulate(self, kind: str) -> int:
        params = self.run.params
        field = self._build_field(kind)
        record = rollout_field(field, ResidentState.from_pn(self.run.p0, self.run.n0), step=self.run.step)
        adjoint_sweep(record, params)
        signs = check_sigma_signs(record, field.kind, params)
        out = self._output_dir(f"simulate-{kind}")
        files = [write_csv(out / f"trajectory_{kind}.csv", {
            "t": record.t, "x": record.x, "u": record.u, "lambda": record.lam,
            "mu": record.mu, "sigma": record.sigma, "p": record.p, "n": record.n,
        })]
        summary = {
            "kind": field.kind.value,
            "p0": self.run.p0,
            "n0": self.run.n0,
            "J": record.payoff,
            "x_T": float(record.x[-1]),
            "n_T": float(record.n[-1]),
            "ratio_error": record.ratio_error(),
            "junctions": [t for t, _ in record.junctions],
            "sigma_signs": signs,
        }
        files.append(write_json(out / "summary.json", summary, "simulate"))
        self._finish(out, "simulate", summary, files)
        return EXIT_OK

    def _reduced_grid(self, section: Dict[str, Any]) -> ReducedGridSpec:
        return ReducedGridSpec(section["t_steps"], section["x_steps"], interpolation=section["interpolation"])

    def cmd_oracle(self, kind: str, compare: bool, refine: bool) -> int:
        params = self.run.params
        section = self.run.section("oracle")
        controls = control_mesh(section["control_steps"])
        vg = solve_reduced(params, self._reduced_grid(section), controls)
        out = self._output_dir(f"oracle-{kind}")

        rows = np.unique(np.linspace(0, vg.t.size - 1, min(vg.t.size, GRID_EXPORT_NODES)).round().astype(int))
        cols = np.unique(np.linspace(0, vg.x.size - 1, min(vg.x.size, GRID_EXPORT_NODES)).round().astype(int))
        T_grid, X_grid = np.meshgrid(vg.t[rows], vg.x[cols], indexing="ij")
        files = [write_csv(out / "value_grid.csv", {
            "t": T_grid.ravel(), "x": X_grid.ravel(),
            "value": vg.values[np.ix_(rows, cols)].ravel(), "policy": vg.policy[np.ix_(rows, cols)].ravel(),
        })]

        boundary = extract_policy_boundary(vg)
        files.append(write_csv(out / "policy_boundary.csv", {"t": boundary.t, "x": boundary.x}))
        probes = [float(p) for p in section["probes"]]
        summary: Dict[str, Any] = {
            "grid": {"t_steps": section["t_steps"], "x_steps": section["x_steps"], "controls": int(controls.size),
                     "interpolation": section["interpolation"]},
            "clamped": vg.clamped,
            "probes": [{"x": x, "value": float(vg.value_at(x))} for x in probes],
            "boundary_gaps": len(boundary.gaps),
            "bang_fraction_after_junction": bang_fraction_after_junction(vg, params),
            "coast_fraction_above_switch_line": coast_fraction_above_switch_line(vg, params),
        }
        if compare:
            field = self._build_field(kind)
            cmp = compare_boundary(vg, boundary, field)
            summary["boundary"] = {"rows": cmp.rows, "within_fraction": cmp.fraction,
                                   "max_cells": cmp.max_cells, "interior_mad": cmp.interior_mad,
                                   "singular_mad": cmp.singular_mad, "windows": cmp.windows}
            table = compare_with_field(vg, field, probes, step=self.run.step)
            files.append(write_csv(out / f"compare_{kind}.csv", {
                k: [r[k] for r in table] for k in ("x", "oracle", "field", "rel_error")
            }))
            summary["max_rel_error"] = max(r["rel_error"] for r in table)
        if refine:
            sizes = [max(section["x_steps"] // 4, 2), max(section["x_steps"] // 2, 2), section["x_steps"]]
            summary["refinement"] = refinement_study(params, sizes, probes, controls,
                                                     interpolation=section["interpolation"])
        files.append(write_json(out / "summary.json", summary, "oracle"))
        self._finish(out, "oracle", summary, files)
        return EXIT_OK

    def cmd_reduce(self, check: bool, values: bool, reward_power: float = 1.0) -> int:
        params = self.run.params
        problem = consumer_resource_problem(params, reward_power=reward_power)
        report = check_homogeneity(problem, probes=200, seed=self.run.seed)
        payload: Dict[str, Any] = {"checks": report.as_dict()["checks"], "passed": report.passed}
        out = self._output_dir("reduce")
        if check:
            files = [write_json(out / "reduction_report.json", payload, "reduce")]
            self._finish(out, "reduce", payload, files)
            if not report.passed:
                self.logger.error(f"Homogeneity checks failed for {', '.join(report.violators)}")
                return EXIT_CONFIG
            return EXIT_OK

        reduced = reduce(problem, report)
        T = params.T
        schedule = ControlSchedule.uniform([1.0, 0.5, 0.25, 0.0], 0.0, T)
        payload["commutes"] = reduction_commutes(problem, reduced, (self.run.p0, self.run.n0), schedule,
                                                 self.run.step)
        payload["hamiltonian_gap"] = hamiltonian_agreement(reduced, params, seed=self.run.seed)
        payload["max_rel_err"] = None
        if values:
            section = self.run.section("oracle")
            controls = control_mesh(section["control_steps"])
            full = solve_full(params, FullGridSpec(section["full_t_steps"], section["full_p_steps"],
                                                   section["full_n_steps"]), controls)
            vg = solve_reduced(params, self._reduced_grid(section), controls)
            probes = [(0.3, 1.0), (0.6, 2.0), (0.15, 0.5)]
            result = verify_value_homogeneity(
                problem, reduced,
                full_value=lambda y: float(full.value_at(y[0], y[1])[0]),
                reduced_value=lambda x: float(vg.value_at(x[0])),
                probes=probes,
            )
            payload["value_checks"] = result["checks"]
            payload["max_rel_err"] = result["max_rel_err"]
        files = [write_json(out / "reduction_report.json", payload, "reduce")]
        self._finish(out, "reduce", payload, files)
        return EXIT_OK

    def _population_target(self, target):
        if isinstance(target, str):
            field = self._build_field(target)
            ctx = rollout_resident(field, self.run.p0, self.run.n0, self.run.params, step=self.run.step)
            return ctx.copy_schedule()
        return float(target)

    def cmd_popsim(self, mode: Optional[str], sweep: bool) -> int:
        params = self.run.params
        section = self.run.section("population")
        mode = Mode(mode or section["mode"])
        target = self._population_target(section["target_u"])
        N = section["N"]
        tau = params.T / section["tau_divisor"]
        p0, n0 = self.run.p0, self.run.n0
        seeds = section["seeds"]

        table = convergence_sweep(target, N, params, self.run.seed, [tau], seeds=seeds, mode=mode,
                                  jobs=self.run.jobs, p0=p0, n0=n0)
        out = self._output_dir(f"popsim-{mode.value}")
        columns = ("tau", "N", "seed", "F", "J_agg", "gap")
        files = [write_csv(out / "population.csv", {k: [r[k] for r in table["rows"]] for k in columns})]
        first = simulate_population(target, N, tau, mode, params, self.run.seed, p0, n0)
        gaps = np.array([r["gap"] for r in table["rows"]])
        J_agg = np.array([r["J_agg"] for r in table["rows"]])
        summary: Dict[str, Any] = {
            "mode": mode.value,
            "N": N,
            "tau": tau,
            "seeds": seeds,
            "target_u": section["target_u"],
            "mean_gap": float(np.mean(gaps)),
            "mean_rel_gap": float(np.mean(gaps / J_agg)),
            "J_mono": first.J_mono,
            "aggregate_error": first.aggregate_error,
            "fubini_gap": abs(first.F - first.F_fubini),
            "u_mean": first.u_mean,
            "target_mean": first.target_mean,
        }
        if sweep:
            taus = [params.T / 100.0 / 2 ** k for k in range(section["sweep_halvings"] + 1)]
            result = convergence_sweep(target, N, params, self.run.seed, taus, seeds=seeds, mode=mode,
                                       jobs=self.run.jobs, p0=p0, n0=n0)
            files.append(write_csv(out / "convergence.csv", {k: [r[k] for r in result["rows"]] for k in columns}))
            summary["sweep"] = {"taus": result["taus"], "mean_gap": result["mean_gap"]}
        files.append(write_json(out / "summary.json", summary, "popsim"))
        self._finish(out, "popsim", summary, files)
        return EXIT_OK

    def start(self) -> int:
        """Load the configuration, dispatch the command and map failures to exit codes."""
        try:
            self.config = self._load_config()
            self.run = RunConfig.from_config(self.config)
            command = self.args.command
            self.logger.info(f"Running {command} with a={self.run.params.a}, b={self.run.params.b}, "
                             f"c={self.run.params.c}, T={self.run.params.T}")
            if command == "synthesize":
                return self.cmd_synthesize(self.args.kind)
            if command == "certify":
                return self.cmd_certify(self.args.kind)
            if command == "simulate":
                return self.cmd_simulate(self.args.kind)
            if command == "oracle":
                return self.cmd_oracle(self.args.kind, self.args.compare, self.args.refine)
            if command == "reduce":
                return self.cmd_reduce(self.args.check, self.args.values, self.args.reward_power)
            if command == "popsim":
                return self.cmd_popsim(self.args.mode, self.args.sweep)
            self.logger.error(f"Unknown command: {command}")
            return EXIT_CONFIG
        except SeasonTooShortError as e:
            self.logger.error(str(e))
            return EXIT_SHORT_SEASON
        except (DivergenceError, InvalidStateError) as e:
            self.logger.error(f"Numerical failure: {e}")
            return EXIT_NUMERICS
        except SeasonalModelError as e:
            self.logger.error(f"Configuration error: {e}")
            return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Seasonal consumer-resource control and ESS analysis")
    parser.add_argument("--config", default=None, help="JSON configuration file (default: ./config.json if present)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="base random seed")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes for population sweeps")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("--verbose", action="store_true", help="debug logging")
    noise.add_argument("--quiet", action="store_true", help="warnings and errors only")

    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in FieldKind]
    for name, text in (("synthesize", "build a strategy field and export its curves"),
                       ("certify", "best responses and invasion verdict"),
                       ("simulate", "roll out a field with adjoints")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--kind", choices=kinds, default="ess")

    oracle = sub.add_parser("oracle", help="dynamic-programming value and policy")
    oracle.add_argument("--kind", choices=kinds, default="coop")
    oracle.add_argument("--compare", action="store_true", help="compare with the synthesized field")
    oracle.add_argument("--refine", action="store_true", help="run the grid refinement study")

    red = sub.add_parser("reduce", help="homogeneity checks and reduction")
    red.add_argument("--check", action="store_true", help="only run the homogeneity checks; exit 1 if any fails")
    red.add_argument("--reward-power", type=float, default=1.0,
                     help="use the (1 - u) p^k reward, non-homogeneous unless k = 1")
    red.add_argument("--values", action="store_true", help="compare full and reduced DP values")

    pop = sub.add_parser("popsim", help="finite population Monte Carlo")
    pop.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    pop.add_argument("--sweep", action="store_true", help="gap against interval length")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    app = SeasonalAnalysisApp(args)
    return app.start()


if __name__ == "__main__":
    sys.exit(main())

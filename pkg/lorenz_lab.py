"""
Lorenz Lab - numerical renormalization of Lorenz maps

Command-line front end: reads a JSON job spec, dispatches it to the library
modules and writes JSON/CSV artifacts that embed the resolved configuration.

Commands:
    eval, kneading, detect, renormalize, fixed-point, bounds, attractor, scan

Usage:
    python lorenz_lab.py --spec job.json --out results --threads 4 --seed 7
"""

import argparse
import copy
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import yaml
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from artifact_lock import ArtifactLockManager
from artifact_writer import ArtifactWriter
from attractor import (
    box_dimension,
    empirical_measure,
    generations,
    ratio_stats,
    transfer_times,
)
from bounds_lab import (
    bounds_report,
    default_pi,
    derivative_bounds,
    empirical_threshold,
    invariance_report,
)
from combinatorics import (
    MonotoneType,
    admissible,
    candidate_types,
    detect_monotone,
    kneading,
)
from error_handler import (
    InsufficientData,
    NiceIntervalError,
    UsageError,
    error_payload,
    exit_code_for,
    translate_exception,
)
from fixed_point import find_fixed_point
from lorenz_map import LorenzMap, lorenz_derivative, lorenz_eval, negative_schwarzian
from metrics_collector import metrics
from parameter_search import SliceConfig, nested_island_search, scan_slice
from renormalization import renormalization_step

COMMANDS = ("eval", "kneading", "detect", "renormalize", "fixed-point", "bounds", "attractor", "scan")
THREADS_ENV = "LORENZ_RENORM_THREADS"

# Keys each command needs in its job spec
REQUIRED_PARAMS = {
    "eval": ("map", "x"),
    "kneading": ("map",),
    "detect": ("map", "type"),
    "renormalize": ("map", "type"),
    "fixed-point": ("type",),
    "bounds": ("type",),
    "attractor": ("type",),
    "scan": (),
}


@dataclass
class JobSpec:
    """One job: a command with its parameters."""
    command: str
    params: Dict[str, Any] = field(default_factory=dict)
    output_path: str = "results"
    seed: int = 0
    threads: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JobSpec":
        """
        Validate a parsed job spec.

        Raises:
            UsageError: unknown command or missing parameters
        """
        if not isinstance(data, dict):
            raise UsageError("job spec must be a JSON object")
        command = data.get("command")
        if command not in COMMANDS:
            raise UsageError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        params = {k: v for k, v in data.items() if k not in ("command", "seed", "threads", "out")}
        missing = [key for key in REQUIRED_PARAMS[command] if key not in params]
        if command == "bounds" and "map" not in params and "maps" not in params:
            missing.append("map")
        if missing:
            raise UsageError(f"command {command!r} is missing parameters: {missing}", {"missing": missing})
        threads = data.get("threads")
        try:
            seed = int(data.get("seed", 0))
            threads = int(threads) if threads is not None else None
        except (TypeError, ValueError) as e:
            raise UsageError(f"seed and threads must be integers: {e}")
        return cls(command, params, data.get("out", "results"), seed, threads)

    @classmethod
    def load(cls, path: str) -> "JobSpec":
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise UsageError(f"job spec not found: {path}", {"path": path})
        except json.JSONDecodeError as e:
            raise UsageError(f"job spec is not valid JSON: {e}", {"path": path})
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        """The parts of the job that determine its artifacts."""
        return {"command": self.command, "params": self.params, "seed": self.seed}


def resolve_threads(flag: Optional[int], spec: Optional[int]) -> int:
    """Worker count: --threads flag, then job spec, then LORENZ_RENORM_THREADS, then 1."""
    for value in (flag, spec, os.getenv(THREADS_ENV)):
        if value is None or value == "":
            continue
        try:
            threads = int(value)
        except ValueError:
            raise UsageError(f"thread count must be an integer, got {value!r}")
        if threads < 1:
            raise UsageError(f"thread count must be positive, got {threads}")
        return threads
    return 1


def _types(value) -> List[MonotoneType]:
    """[n, m] or [[n, m], ...] as a list of types."""
    if not isinstance(value, (list, tuple)) or not value:
        raise UsageError(f"type must be [n, m] or a list of such pairs, got {value!r}")
    if all(isinstance(v, (int, float)) for v in value):
        return [MonotoneType.from_value(value)]
    return [MonotoneType.from_value(v) for v in value]


class LorenzLab:
    """
    Job runner for the renormalization toolkit.

    Loads and validates the YAML config, configures logging and metrics once,
    and runs job specs under the output directory lock.
    """

    def __init__(self, config_path: str = "config.yaml", log_level: Optional[str] = None):
        """Initialize Lorenz Lab from a config file."""
        self.config = self._load_config(config_path)
        if log_level:
            self.config["logging"]["level"] = log_level.upper()
        self._setup_logging()
        metrics.configure(self.config["monitoring"]["metrics_file"])

        self.logger.info("=" * 60)
        self.logger.info("LORENZ LAB INITIALIZED")
        self.logger.info(f"Grid size: {self.config['numerics']['grid_size']}")
        self.logger.info(f"Step tolerance: {self.config['numerics']['step_tol']:g}")
        self.logger.info("=" * 60)

    def _load_config(self, config_path: str) -> dict:
        """Load configuration from YAML file"""
        with open(config_path, 'r') as f:
            config = yaml.safe_load(f)

        for section in ("numerics", "search", "fixed_point", "bounds", "attractor", "output", "logging", "monitoring"):
            if section not in config:
                raise ValueError(f"Config is missing section '{section}'")

        grid_size = config["numerics"]["grid_size"]
        if grid_size < 3:
            raise ValueError(f"numerics.grid_size must be at least 3, got {grid_size}")
        for key in ("inverse_tol", "collision_tol", "step_tol"):
            if not config["numerics"][key] > 0:
                raise ValueError(f"numerics.{key} must be positive, got {config['numerics'][key]}")
        if not config["fixed_point"]["tol"] > 0:
            raise ValueError(f"fixed_point.tol must be positive, got {config['fixed_point']['tol']}")
        if any(k <= 0 for k in config["bounds"]["K_sensitivity"]) or config["bounds"]["K"] <= 0:
            raise ValueError("bounds.K and bounds.K_sensitivity must be positive")

        return config

    def _setup_logging(self):
        """Configure logging"""
        log_level = getattr(logging, self.config['logging']['level'])
        log_file = self.config['logging']['file']

        Path(log_file).parent.mkdir(parents=True, exist_ok=True)

        logging.basicConfig(
            level=log_level,
            format='%(asctime)s | %(levelname)s | %(message)s',
            handlers=[
                logging.FileHandler(log_file),
                logging.StreamHandler()
            ]
        )
        self.logger = logging.getLogger(__name__)
        self.logger.setLevel(log_level)

    def resolve(self, spec: JobSpec) -> Dict[str, Any]:
        """Config sections with job-spec overrides applied, plus the job itself."""
        settings = copy.deepcopy({k: v for k, v in self.config.items() if k not in ("logging", "monitoring", "output")})
        p = spec.params
        overrides = {
            ("numerics", "grid_size"): p.get("grid_size"),
            ("numerics", "scan_cells"): p.get("scan_cells"),
            ("numerics", "step_tol"): p.get("step_tol"),
            ("search", "rho"): p.get("rho"),
            ("search", "max_return"): p.get("max_return"),
            ("search", "island_depth"): p.get("island_depth"),
            ("search", "island_resolution"): p.get("island_resolution"),
            ("search", "max_candidates"): p.get("max_candidates"),
            ("fixed_point", "tol"): p.get("tol"),
            ("fixed_point", "budget"): p.get("budget"),
            ("bounds", "K"): p.get("K"),
            ("bounds", "epsilon"): p.get("eps"),
            ("attractor", "depth"): p.get("depth"),
            ("attractor", "samples"): p.get("samples"),
            ("attractor", "bins"): p.get("bins"),
            ("attractor", "burn"): p.get("burn"),
            ("attractor", "transfer_cap"): p.get("transfer_cap"),
            ("attractor", "transfer_starts"): p.get("transfer_starts"),
        }
        for (section, key), value in overrides.items():
            if value is not None:
                settings[section][key] = value
        slice_spec = p.get("slice") or {}
        if "c0" in slice_spec:
            settings["search"]["c0"] = slice_spec["c0"]
        if "grid" in slice_spec:
            settings["search"]["grid"] = list(slice_spec["grid"])
        return {"settings": settings, "job": spec.to_dict()}

    def run(self, spec: JobSpec, out_dir: Optional[str] = None, threads: Optional[int] = None) -> int:
        """
        Run one job and write its artifacts.

        Returns:
            Exit status: 0 on success, 2 on domain errors, 1 on usage errors
        """
        start_time = time.time()
        metrics.increment("jobs_total")
        out = out_dir or spec.output_path or self.config["output"]["dir"]
        lock = writer = None

        self.logger.info("=" * 60)
        self.logger.info(f"JOB {spec.command} -> {out}")
        self.logger.info("=" * 60)

        try:
            resolved = self.resolve(spec)
            lock = ArtifactLockManager(out, timeout=self.config["output"]["lock_timeout"])
            writer = ArtifactWriter(out, resolved)
            self.threads = resolve_threads(threads, spec.threads)
            handler = getattr(self, "_cmd_" + spec.command.replace("-", "_"))
            with lock.acquire():
                handler(spec, resolved["settings"], writer)
            self.logger.info(f"✓ Job {spec.command} finished in {time.time() - start_time:.2f}s")
            return 0

        except Exception as e:
            message, severity = translate_exception(e, context=spec.command)
            self.logger.error(message)
            metrics.increment("jobs_failed")
            payload = error_payload(e, context=spec.command)
            if writer is None:
                self.logger.error(f"No artifact directory at {out}; error artifact skipped")
                return exit_code_for(e)
            try:
                with lock.acquire():
                    writer.write_json("error.json", payload)
            except Exception as write_error:
                self.logger.error(f"Could not write error artifact: {write_error}")
            return exit_code_for(e)

        finally:
            metrics.record_duration("job_seconds", time.time() - start_time)
            try:
                metrics.flush()
            except OSError as e:
                self.logger.warning(f"Failed to flush metrics: {e}")

    # Commands

    def _map(self, params: Dict[str, Any], settings: Dict[str, Any], key: str = "map") -> LorenzMap:
        return LorenzMap.from_dict(params[key], settings["numerics"]["grid_size"])

    def _slice(self, settings: Dict[str, Any]) -> SliceConfig:
        search = settings["search"]
        return SliceConfig(
            c0=search["c0"],
            rho=search["rho"],
            grid=tuple(search["grid"]),
            grid_size=settings["numerics"]["grid_size"],
        )

    def _island_witness(self, types: List[MonotoneType], settings: Dict[str, Any], depth: int) -> LorenzMap:
        search = settings["search"]
        sequence = (types * depth)[:depth]
        cell = nested_island_search(
            sequence,
            self._slice(settings),
            depth,
            resolution=search["island_resolution"],
            max_resolution=search["island_max_resolution"],
            refinement_passes=search["refinement_passes"],
            max_candidates=search["max_candidates"],
            threads=self.threads,
        )
        u, v = cell.witness
        self.logger.info(f"Island witness at depth {depth}: u={u:.12f} v={v:.12f}")
        return self._slice(settings).map_at(u, v)

    def _cmd_eval(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        f = self._map(spec.params, settings)
        xs = np.asarray(spec.params["x"], dtype=float)
        frame = pd.DataFrame({"x": xs, "f": lorenz_eval(xs, f), "df": lorenz_derivative(xs, f)})
        writer.write_csv("eval.csv", frame)

    def _cmd_kneading(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        f = self._map(spec.params, settings)
        depth = int(spec.params.get("depth", 64))
        k = kneading(f, depth, settings["numerics"]["collision_tol"])
        types = candidate_types(k, settings["search"]["max_return"])
        writer.write_json("kneading.json", {
            "kneading": k.to_dict(),
            "admissible": admissible(k),
            "nontrivial": f.is_nontrivial(),
            "negative_schwarzian": negative_schwarzian(f, settings["numerics"]["schwarzian_samples"]),
            "candidate_types": [t.to_list() for t in types],
        })

    def _cmd_detect(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        f = self._map(spec.params, settings)
        kind = _types(spec.params["type"])[0]
        data = detect_monotone(
            f, kind.n, kind.m,
            scan_cells=settings["numerics"]["scan_cells"],
            collision_tol=settings["numerics"]["collision_tol"],
        )
        self.logger.info(f"✓ Detected {kind}: C=[{data.p:.15g}, {data.q:.15g}]")
        writer.write_json("detect.json", {"map": f.to_dict(), "data": data.to_dict()})

    def _cmd_renormalize(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        f = self._map(spec.params, settings)
        numerics = settings["numerics"]
        steps = []
        for kind in _types(spec.params["type"]):
            data = detect_monotone(f, kind.n, kind.m, scan_cells=numerics["scan_cells"],
                                   collision_tol=numerics["collision_tol"])
            step = renormalization_step(
                f, data,
                tol=numerics["step_tol"],
                check_points=numerics["check_points"],
                grid_size=numerics["grid_size"],
                fit_points=numerics["fit_check_points"],
            )
            steps.append(step.to_dict())
            f = step.output
        writer.write_json("renormalize.json", {"steps": steps, "result": f.to_dict()})

    def _cmd_fixed_point(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        types = _types(spec.params["type"])
        fp = settings["fixed_point"]
        if "map" in spec.params:
            seed_map = self._map(spec.params, settings)
        else:
            seed_map = self._island_witness(types, settings, max(2, settings["search"]["island_depth"]))
        result = find_fixed_point(
            types,
            seed_map,
            tol=fp["tol"],
            budget=fp["budget"],
            jacobian_step=fp["jacobian_step"],
            damping=fp["damping"],
            plateau_window=fp["plateau_window"],
            reseed_depth=fp["reseed_depth"],
            step_tol=settings["numerics"]["step_tol"],
            grid_size=settings["numerics"]["grid_size"],
        )
        writer.write_json("fixed_point.json", result.to_dict())
        trace = pd.DataFrame({"iteration": np.arange(1, len(result.trace) + 1), "distance": result.trace})
        writer.write_csv("fixed_point_trace.csv", trace)

    def _cmd_bounds(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        bounds = settings["bounds"]
        numerics = settings["numerics"]
        kind = _types(spec.params["type"])[0]
        raw_maps = spec.params.get("maps") or [spec.params["map"]]
        reports, invariance, derivative = [], [], []
        for raw in raw_maps:
            f = LorenzMap.from_dict(raw, numerics["grid_size"])
            pi = spec.params.get("pi", default_pi(f))
            data = detect_monotone(f, kind.n, kind.m, scan_cells=numerics["scan_cells"],
                                   collision_tol=numerics["collision_tol"])
            reports.append(bounds_report(f, kind.n, kind.m, pi=pi, K=bounds["K"],
                                         k_values=bounds["K_sensitivity"], data=data, slack=bounds["slack"],
                                         step_tol=numerics["step_tol"]))
            invariance.append(invariance_report(f, pi, bounds["epsilon"], kind.n, kind.m, data=data,
                                                step_tol=numerics["step_tol"]))
            derivative.append([check.to_dict() for check in derivative_bounds(f, pi)])
        writer.write_json("bounds.json", {
            "reports": [r.to_dict() for r in reports],
            "invariance": [r.to_dict() for r in invariance],
            "derivative_bounds": derivative,
            "empirical_threshold": empirical_threshold(invariance),
            "violations": sum(len(r.violations) for r in reports),
        })
        writer.write_csv("bounds.csv", pd.DataFrame([r.to_row() for r in reports]))

    def _cmd_attractor(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        att = settings["attractor"]
        depth = int(att["depth"])
        types = _types(spec.params["type"])
        types = (types * depth)[:depth]
        if "map" in spec.params:
            f = self._map(spec.params, settings)
        else:
            f = self._island_witness(types, settings, depth)

        fams = generations(f, types, depth)
        rows = []
        for parent, fam in zip(fams, fams[1:]):
            lo, hi, gap_lo, gap_hi = ratio_stats(fam, parent)
            rows.append({"level": fam.level, "count": fam.count, "total_length": fam.total_length,
                         "min_ratio": lo, "max_ratio": hi, "min_gap_ratio": gap_lo, "max_gap_ratio": gap_hi})

        try:
            estimate, stderr = box_dimension(fams)
            dimension = {"estimate": estimate, "stderr": stderr}
        except InsufficientData as e:
            self.logger.warning(f"No box dimension: {e}")
            dimension = None

        measure = empirical_measure(f, att["burn"], att["samples"], att["bins"],
                                    walkers=att["walkers"], seed=spec.seed)

        transfer = None
        if len(fams) > 1:
            rng = np.random.default_rng(spec.seed)
            starts = rng.uniform(0.0, 1.0, att["transfer_starts"])
            try:
                samples = transfer_times(f, fams[1].window, starts, att["transfer_cap"])
            except NiceIntervalError as e:
                self.logger.warning(str(e))
                samples = []
            taus = np.array([s.tau for s in samples if not s.escaped], dtype=float)
            transfer = {
                "window": fams[1].window.to_list(),
                "escape_fraction": sum(s.escaped for s in samples) / len(samples) if samples else None,
                "mean_tau": float(taus.mean()) if taus.size else None,
                "max_tau": int(taus.max()) if taus.size else None,
            }

        writer.write_json("attractor.json", {
            "map": f.to_dict(),
            "generations": [fam.to_dict() for fam in fams],
            "ratios": rows,
            "box_dimension": dimension,
            "measure": {"tv_distance": measure.tv_distance, "birkhoff_spread": measure.birkhoff_spread,
                        "restarts": measure.restarts, "samples": measure.samples},
            "transfer": transfer,
        })
        writer.write_csv("generations.csv", pd.DataFrame(
            rows, columns=["level", "count", "total_length", "min_ratio", "max_ratio", "min_gap_ratio", "max_gap_ratio"]
        ))

    def _cmd_scan(self, spec: JobSpec, settings: Dict[str, Any], writer: ArtifactWriter):
        frame = scan_slice(
            self._slice(settings),
            max_return=settings["search"]["max_return"],
            threads=self.threads,
            scan_cells=settings["numerics"]["scan_cells"],
        )
        writer.write_csv("scan.csv", frame)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage errors as UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(description='Lorenz Lab - numerical renormalization of Lorenz maps')
    parser.add_argument('--spec', required=True, help='JSON job spec')
    parser.add_argument('--out', default=None, help='Artifact directory (default: results)')
    parser.add_argument('--threads', type=int, default=None, help=f'Worker threads (env: {THREADS_ENV})')
    parser.add_argument('--seed', type=int, default=None, help='RNG seed (overrides the job spec)')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--config', default='config.yaml', help='YAML config file')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point"""
    try:
        args = build_parser().parse_args(argv)
        spec = JobSpec.load(args.spec)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return exit_code_for(e)

    if args.seed is not None:
        spec.seed = args.seed

    try:
        lab = LorenzLab(args.config, log_level=args.log_level)
    except (OSError, ValueError, yaml.YAMLError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1

    return lab.run(spec, out_dir=args.out, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())

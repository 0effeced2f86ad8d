"""Command-line surface: run scenarios, run sensitivity sweeps, calibrate
attack-free baselines, and emit deterministic CSV/JSON artifacts.

    gridshield run <scenario> [--out DIR] [--override K=V ...] [--baseline F]
    gridshield sweep <scenario> --additive MIN:MAX:N --scaling MIN:MAX:N
                     [--out FILE] [--jobs N] [--override K=V ...]
    gridshield calibrate <scenario> --out FILE [--override K=V ...]

Exit codes: 0 clean run, 2 usage/scenario error (nothing written), 4
numerical divergence, 5 unservable load deficit, 6 frequency-regulation
violation.  GRIDSHIELD_SEED overrides the scenario seed.  All outputs are
byte-deterministic for fixed (scenario, seed, flags), including --jobs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from gridshield import engine
from gridshield.converter import channel_scales
from gridshield.detection import calibrate, load_baselines, save_baselines
from gridshield.topology import ScenarioConfig, ScenarioError, apply_overrides

CSV_VERSION = "# gridshield-csv v1"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 4
EXIT_UNSERVABLE = 5
EXIT_FREQ_VIOLATION = 6


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunSummary:
    scenario: str
    kernel: str
    flags_raised: int
    flag_times: list
    attack_onset: float | None
    isolation: float | None
    bess_pickup: float | None
    handover: float | None
    final_consensus_error: float
    steady_state_dv: float | None
    steady_state_df: float | None
    soc_start: float
    soc_end: float
    status: str
    events: dict = field(default_factory=dict)

    def milestones(self) -> list:
        present = [m for m in (self.attack_onset, self.isolation,
                               self.bess_pickup, self.handover) if m is not None]
        return present

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=1, default=float)

    def to_text(self) -> str:
        def show(x, unit=""):
            return "-" if x is None else f"{x:.6g}{unit}"
        lines = [
            f"scenario            {self.scenario}",
            f"kernel              {self.kernel}",
            f"status              {self.status}",
            f"flags raised        {self.flags_raised}"
            + (f" at {', '.join(f'{t:.4f}s' for t in self.flag_times)}"
               if self.flag_times else ""),
            f"attack onset        {show(self.attack_onset, 's')}",
            f"isolation           {show(self.isolation, 's')}",
            f"bess pickup         {show(self.bess_pickup, 's')}",
            f"handover            {show(self.handover, 's')}",
            f"consensus error     {self.final_consensus_error:.3e}",
            f"steady-state dV     {show(self.steady_state_dv, ' pu')}",
            f"steady-state df     {show(self.steady_state_df, ' Hz')}",
            f"bess soc            {self.soc_start:.6f} -> {self.soc_end:.6f}",
        ]
        return "\n".join(lines) + "\n"


def summarize(result: engine.RunResult) -> RunSummary:
    from gridshield import kernel

    flags = [e for e in result.events if e.kind == "detector_flag"]
    iso = result.first_event("breaker_open")
    pickup = result.first_event("bess_dispatch")
    handover = result.first_event("bess_release")
    onset = min((s.window[0] for s in result.config.attacks), default=None)
    try:
        dv, df = engine.steady_state_impact(result.record, result.config)
    except Exception:
        dv = df = None
    return RunSummary(
        scenario=result.config.name,
        kernel=kernel.IMPLEMENTATION,
        flags_raised=len(flags),
        flag_times=[e.t for e in flags],
        attack_onset=onset,
        isolation=iso.t if iso else None,
        bess_pickup=pickup.t if pickup else None,
        handover=handover.t if handover else None,
        final_consensus_error=float(result.record.consensus_err[-1])
        if result.record.t.size else 0.0,
        steady_state_dv=dv,
        steady_state_df=df,
        soc_start=result.soc_initial,
        soc_end=result.bess.soc,
        status=result.status,
        events={k: sum(1 for e in result.events if e.kind == k)
                for k in sorted(result.event_kinds())},
    )


def write_timeseries(path: str, record: engine.TimeSeriesRecord) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write(",".join(record.column_names()) + "\n")
        for row in record.rows():
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_events(path: str, events) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(json.dumps(
                {"step": e.step, "t": e.t, "agent": e.agent,
                 "event": e.kind, "payload": e.payload},
                sort_keys=True, default=float) + "\n")


def write_heatmap(path: str, sweep: engine.SweepResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write("a_a,scale_factor,dV_pu,df_hz,diverged\n")
        for ia in range(sweep.additive.size):
            for is_ in range(sweep.scaling.size):
                fh.write(",".join([
                    _fmt(sweep.additive[ia]), _fmt(sweep.scaling[is_]),
                    _fmt(sweep.dv[ia, is_]), _fmt(sweep.df[ia, is_]),
                    str(int(sweep.diverged[ia, is_])),
                ]) + "\n")


def exit_code_for(result: engine.RunResult) -> int:
    if result.status == "diverged":
        return EXIT_DIVERGED
    kinds = result.event_kinds()
    if "unservable_deficit" in kinds:
        return EXIT_UNSERVABLE
    if "frequency_violation" in kinds:
        return EXIT_FREQ_VIOLATION
    return EXIT_OK


def _parse_range(spec: str) -> np.ndarray:
    try:
        lo_s, hi_s, n_s = spec.split(":")
        lo, hi, count = float(lo_s), float(hi_s), int(n_s)
    except ValueError as exc:
        raise ScenarioError(f"bad range {spec!r}, expected MIN:MAX:N") from exc
    if count < 1:
        raise ScenarioError(f"bad range {spec!r}: N must be >= 1")
    if count == 1:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _load(args) -> ScenarioConfig:
    if not os.path.exists(args.scenario):
        raise ScenarioError(f"scenario file not found: {args.scenario}")
    return apply_overrides(args.scenario, args.override or [])


def cmd_run(args) -> int:
    config = _load(args)
    baselines = load_baselines(args.baseline) if args.baseline else None
    result = engine.run(config, baselines=baselines)
    os.makedirs(args.out, exist_ok=True)
    write_timeseries(os.path.join(args.out, "timeseries.csv"), result.record)
    write_events(os.path.join(args.out, "events.log"), result.events)
    summary = summarize(result)
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary.to_text())
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        fh.write(summary.to_json() + "\n")
    print(summary.to_text(), end="")
    return exit_code_for(result)


def cmd_sweep(args) -> int:
    config = _load(args)
    additive = _parse_range(args.additive)
    scaling = _parse_range(args.scaling)
    if not np.any(additive == 0.0):
        additive = np.sort(np.append(additive, 0.0))
    if not np.any(scaling == 1.0):
        scaling = np.sort(np.append(scaling, 1.0))
    sweep = engine.run_sweep(config, additive, scaling, jobs=args.jobs)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_heatmap(args.out, sweep)
    n_div = int(sweep.diverged.sum())
    print(f"sweep {config.name}: {sweep.dv.size} cells "
          f"({sweep.additive.size}x{sweep.scaling.size}), "
          f"{n_div} diverged -> {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _load(args)
    config = config.with_attacks(())
    # The baseline needs at least one settled second after the warmup.
    record_dt = config.sim.timestep * config.sim.record_decimation
    need = config.detection.warmup + 1.0 + record_dt
    if config.sim.duration < need:
        config = replace(config, sim=replace(config.sim, duration=need))
    result = engine.run(config, collect_measurements=True)
    if result.status != "ok":
        print("calibration run diverged", file=sys.stderr)
        return EXIT_DIVERGED
    settled = result.record.t > config.detection.warmup
    baselines = []
    for i in range(config.n_agents):
        scales = channel_scales(config.agents[i].omega0, config.agents[i].s_base)
        baselines.append(calibrate(
            result.measurements[settled, i, :], dt=record_dt,
            margin_factor=config.detection.margin_factor,
            floor=config.detection.floor * scales,
            thd_ceiling=config.detection.thd_ceiling,
            settle_band_pct=config.detection.settle_band_pct,
            v_limits=config.detection.v_limits,
            f_limits=config.detection.f_limits,
        ))
    save_baselines(args.out, baselines,
                   meta={"scenario": config.name, "seed": config.sim.seed})
    print(f"calibrated {config.n_agents} agents -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridshield",
        description="Microgrid cyberattack mitigation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
    p_run.add_argument("--baseline", help="baseline file from `calibrate`")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="attack-magnitude sensitivity sweep")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--additive", required=True, metavar="MIN:MAX:N")
    p_sweep.add_argument("--scaling", required=True, metavar="MIN:MAX:N")
    p_sweep.add_argument("--out", default="heatmap.csv")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cal = sub.add_parser("calibrate", help="write an attack-free baseline file")
    p_cal.add_argument("scenario")
    p_cal.add_argument("--out", required=True)
    p_cal.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

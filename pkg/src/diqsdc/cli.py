"""Command-line front end.

Every subcommand accepts the shared physical flags; a ``--config`` file of
``key=value`` lines (keys are flag names without the leading dashes) sets
defaults that explicit flags override.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import channel_analytics as ca
from . import fock_optics, plotting, protocol_sim
from .errors import CapacityError, NoPositiveCapacityError, NonPurifiableError, ParameterError
from .params import SystemParams
from .tables import format_value, write_csv, write_report

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

# flag name -> (SystemParams / config field, type)
PARAM_FLAGS = {
    "pulses": ("N", int),
    "distance-km": ("L_AB", float),
    "fidelity": ("F", float),
    "eta-coupling": ("eta_c", float),
    "eta-memory": ("eta_m", float),
    "eta-detector": ("eta_d", float),
    "vbs-t": ("T", float),
    "alpha": ("alpha", float),
    "rep-rate": ("R_rep", float),
    "spdc-p": ("p", float),
}
OTHER_FLAGS = {
    "seed": int,
    "eve-f": float,
    "eve-g": float,
    "eve-basis": str,
    "check-fraction": float,
    "workers": int,
    "out": str,
    "formats": str,
    "l-min": float,
    "l-max": float,
    "step": float,
    "rounds": int,
    "no-shuffle": bool,
}
CONFIG_KEYS = {**{k: t for k, (_, t) in PARAM_FLAGS.items()}, **OTHER_FLAGS}

SUBCOMMAND_DEFAULTS = {
    "curves": {"l-min": 0.01, "l-max": 8.0, "step": 0.01, "formats": "csv,svg"},
    "sweep": {"l-min": 0.0, "l-max": 6.0, "step": 1.0, "formats": "csv,svg"},
    "purify": {"rounds": 5},
}


class ConfigError(Exception):
    pass


def _dest(flag: str) -> str:
    return flag.replace("-", "_")


def load_config(path: str) -> dict:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        kind = CONFIG_KEYS[key]
        try:
            if kind is bool:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = kind(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    merged = dict(SUBCOMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        merged.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, _dest(key), None)
        if value is not None and value is not False:
            merged[key] = value
    return merged


def build_params(cfg: dict) -> SystemParams:
    kwargs = {field: cfg[flag] for flag, (field, _) in PARAM_FLAGS.items() if flag in cfg}
    return SystemParams(**kwargs)


def build_protocol(cfg: dict, params: SystemParams) -> protocol_sim.ProtocolConfig:
    eve = protocol_sim.EveModel(
        round1_fraction=cfg.get("eve-f", 0.0),
        round2_fraction=cfg.get("eve-g", 0.0),
        basis_strategy=cfg.get("eve-basis", "fixed-Z"),
    )
    return protocol_sim.ProtocolConfig(
        params=params,
        seed=cfg.get("seed", 0),
        check_fraction=cfg.get("check-fraction", 0.5),
        eve=eve,
        shuffle=not cfg.get("no-shuffle", False),
        workers=cfg.get("workers", 1),
    )


def _out_dir(cfg: dict) -> Path | None:
    if "out" not in cfg:
        return None
    path = Path(cfg["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _formats(cfg: dict) -> list[str]:
    fmts = [f.strip() for f in cfg.get("formats", "csv").split(",") if f.strip()]
    bad = set(fmts) - {"csv", "svg", "png"}
    if bad:
        raise ConfigError(f"unknown output formats: {sorted(bad)}")
    return fmts


# --- subcommands ---

ORACLE_T = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)
ORACLE_ETA = (1.0, 0.8, 0.5)


def cmd_oracle(cfg: dict) -> int:
    params = build_params(cfg)
    eta_values = sorted({*ORACLE_ETA, params.eta_t_prime}, reverse=True)
    rows = []
    for eta in eta_values:
        for T in sorted({*ORACLE_T, params.T}):
            res = fock_optics.distribute_entanglement(T, eta)
            formula = ca.heralding_probability(eta**2, T)
            fid = min((o.post_state.fidelity(fock_optics.bell_state("phi+", "a2", "b3"))
                       for o in res.accepted), default=math.nan)
            rows.append({
                "T": T,
                "eta_t_prime": eta,
                "oracle": res.success_probability,
                "closed_form": formula,
                "delta": res.success_probability - formula,
                "ratio": res.success_probability / formula if formula > 0 else math.nan,
                "min_fidelity": fid,
            })
    cols = ("T", "eta_t_prime", "oracle", "closed_form", "delta", "ratio", "min_fidelity")
    print(" ".join(f"{c:>14}" for c in cols))
    for r in rows:
        print(" ".join(f"{format_value(r[c]):>14}" for c in cols))
    peak = fock_optics.distribute_entanglement(0.5, 1.0).success_probability
    verdict = "eta_t/8" if abs(peak - 0.125) < 1e-12 else ("eta_t/16" if abs(peak - 0.0625) < 1e-12 else "neither")
    print(f"maximum at T=0.5, eta_t=1: oracle {format_value(peak)} -> {verdict}; "
          f"closed form eta_t*T^2*(1-T)^2 gives {format_value(ca.heralding_probability(1.0, 0.5))}")
    out = _out_dir(cfg)
    if out is not None:
        write_csv(rows, cols, out / "oracle.csv")
    return EXIT_OK


def cmd_curves(cfg: dict) -> int:
    params = build_params(cfg)
    fmts = _formats(cfg)
    rows = ca.sweep_curves(params, cfg["l-min"], cfg["l-max"], cfg["step"])
    out = _out_dir(cfg) or Path(".")
    if "csv" in fmts:
        write_csv(rows, ca.CURVE_COLUMNS, out / "curves.csv")
    for ext in ("svg", "png"):
        if ext in fmts:
            plotting.plot_capacity(rows, out / f"capacity_vs_distance.{ext}")
            plotting.plot_efficiency(rows, out / f"efficiency_vs_distance.{ext}")
    first = rows[0]
    ratio = first["Es"] / first["Es0"] if first["Es0"] > 0 else math.inf
    print(f"rows={len(rows)} first L={first['L_km']} Es/Es0={format_value(ratio)}")
    for label, key in (("current", "Cs"), ("original", "Cs0")):
        zero = next((r["L_km"] for r in rows if r[key] <= 0), None)
        print(f"{label}: first zero-capacity grid point {zero if zero is not None else 'none'} km")
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    params = build_params(cfg)
    pconf = build_protocol(cfg, params)
    report = protocol_sim.run_protocol(pconf)
    model = ca.secrecy_capacity(params)
    doc = {
        "config": {"seed": pconf.seed, "check_fraction": pconf.check_fraction,
                   "shuffle": pconf.shuffle, "eve": asdict(pconf.eve), "params": asdict(params)},
        "model": model.as_dict(),
        "report": report.as_dict(),
    }
    out = _out_dir(cfg)
    if out is not None:
        write_report(doc, out / "run_report.json")
    s2 = report.S2_hat
    print(
        f"N={report.N} N1={report.N1} S1_hat={format_value(report.S1_hat)} "
        f"S2_hat={format_value(s2)} aborted_r1={report.aborted_r1} "
        f"aborted_r2={report.aborted_r2} decoded={len(report.decoded_bits)} "
        f"bit_errors={report.bit_errors} lost={report.lost_messages} "
        f"matched_fraction={format_value(report.leak_audit.matched_fraction)}"
    )
    return EXIT_ABORT if report.aborted else EXIT_OK


SWEEP_COLUMNS = (
    "L_km", "N1", "aborted_r1", "aborted_r2",
    "S1_hat", "S1_se", "S1_model", "S2_hat", "S2_se", "S2_model",
    "Qt_hat", "Qt_se", "Qt_model", "loss_rate", "loss_model", "error_rate", "error_model",
)


def cmd_sweep(cfg: dict) -> int:
    params = build_params(cfg)
    fmts = _formats(cfg)
    rows = []
    for L in ca.distance_grid(cfg["l-min"], cfg["l-max"], cfg["step"]):
        p = params.replace(L_AB=float(L))
        rep = protocol_sim.run_protocol(build_protocol(cfg, p))
        model = ca.secrecy_capacity(p)
        s1 = rep.stats_r1.as_dict()
        s2 = rep.stats_r2.as_dict() if rep.stats_r2 is not None else {}
        nan = math.nan
        rows.append({
            "L_km": float(L),
            "N1": rep.N1,
            "aborted_r1": rep.aborted_r1,
            "aborted_r2": rep.aborted_r2,
            "S1_hat": s1.get("S_hat") if s1.get("S_hat") is not None else nan,
            "S1_se": s1.get("S_se") if s1.get("S_se") is not None else nan,
            "S1_model": model.S1,
            "S2_hat": s2.get("S_hat") if s2.get("S_hat") is not None else nan,
            "S2_se": s2.get("S_se") if s2.get("S_se") is not None else nan,
            "S2_model": model.S2,
            "Qt_hat": s2.get("Q_sum_hat") if s2.get("Q_sum_hat") is not None else nan,
            "Qt_se": s2.get("Q_sum_se") if s2.get("Q_sum_se") is not None else nan,
            "Qt_model": model.Qt,
            "loss_rate": rep.loss_rate,
            "loss_model": model.r_loss,
            "error_rate": rep.error_rate,
            "error_model": model.r_error,
        })
        print(f"L={format_value(float(L))} N1={rep.N1} S1_hat={format_value(rep.S1_hat)} "
              f"S2_hat={format_value(rep.S2_hat)} aborted={rep.aborted}")
    out = _out_dir(cfg) or Path(".")
    if "csv" in fmts:
        write_csv(rows, SWEEP_COLUMNS, out / "sweep.csv")
    for ext in ("svg", "png"):
        if ext in fmts:
            plotting.plot_sweep(rows, out / f"sweep.{ext}")
    return EXIT_OK


def cmd_maxdist(cfg: dict) -> int:
    params = build_params(cfg)
    for which in ("current", "original"):
        try:
            d = ca.max_distance(params, which)
            shown = "unbounded" if math.isinf(d) else f"{d:.3f} km"
        except NoPositiveCapacityError:
            shown = "no positive capacity"
        print(f"{which}: {shown}")
    return EXIT_OK


def cmd_purify(cfg: dict) -> int:
    params = build_params(cfg)
    base = ca.secrecy_capacity(params)
    print(f"unpurified at L={params.L_AB} km: Qt={format_value(base.Qt)} "
          f"chi(S1)={format_value(base.chi_S1)} Cs={format_value(base.Cs)}")
    cols = ("rounds", "F", "P_EP", "Qt_prime", "chi_S1", "Cs_prime", "Esm")
    print(" ".join(f"{c:>14}" for c in cols))
    rows = []
    for n in range(cfg["rounds"] + 1):
        plan = ca.purified_capacity(params, n)
        p_ep = plan.per_round[-1][1] if plan.per_round else 1.0
        row = {"rounds": n, "F": plan.F_final, "P_EP": p_ep, "Qt_prime": plan.Qt_prime,
               "chi_S1": plan.chi_S1, "Cs_prime": plan.Cs_prime, "Esm": plan.Esm}
        rows.append(row)
        print(" ".join(f"{format_value(row[c]):>14}" for c in cols))
    out = _out_dir(cfg)
    if out is not None:
        write_csv(rows, cols, out / "purify.csv")
    return EXIT_OK


COMMANDS = {
    "oracle": cmd_oracle,
    "curves": cmd_curves,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "maxdist": cmd_maxdist,
    "purify": cmd_purify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int)
    for flag, (_, kind) in PARAM_FLAGS.items():
        common.add_argument(f"--{flag}", type=kind)
    common.add_argument("--eve-f", type=float)
    common.add_argument("--eve-g", type=float)
    common.add_argument("--eve-basis", choices=("fixed-Z", "random-ZX"))
    common.add_argument("--out", metavar="DIR")

    parser = argparse.ArgumentParser(prog="diqsdc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("oracle", parents=[common], help="exact optics vs closed-form heralding probability")
    for name, help_ in (("curves", "capacity/efficiency vs distance (closed form)"),
                        ("sweep", "Monte Carlo runs over a distance grid")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--l-min", type=float)
        p.add_argument("--l-max", type=float)
        p.add_argument("--step", type=float)
        p.add_argument("--formats", help="comma list of csv,svg,png")
        if name == "sweep":
            p.add_argument("--check-fraction", type=float)
            p.add_argument("--workers", type=int)
    p = sub.add_parser("simulate", parents=[common], help="one Monte Carlo protocol run")
    p.add_argument("--check-fraction", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-shuffle", action="store_true")
    sub.add_parser("maxdist", parents=[common], help="maximal secure distance of both protocols")
    p = sub.add_parser("purify", parents=[common], help="capacity after purification rounds")
    p.add_argument("--rounds", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError, CapacityError, NonPurifiableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

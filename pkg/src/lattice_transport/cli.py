"""Command-line interface: config parsing, subcommand dispatch, file emission.

Subcommands
-----------
simulate          run a time integration, write snapshot and timeseries CSVs
convergence       run a grid- or step-refinement study, write convergence.csv
moments           print (n, E) for given multipliers
invert            print the multipliers reproducing given (n, E)
verify-integrals  compare torus quadrature against the analytic integrals

Configuration is INI-style (``key = value`` under ``[model]``, ``[solver]``,
``[grid]``, ``[initial]``, ``[output]``, ``[convergence]``) with command-line
overrides ``--section.key=value`` taking precedence.  Unknown keys are hard
errors.  All CSV output uses '.' decimals, LF line endings, and shortest
round-trip float formatting.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 check failure (``simulate --check``).
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics, harness
from .inversion import (
    InversionSettings,
    NoConvergenceError,
    SingularJacobianError,
    invert_moments,
)
from .kinetics import (
    ModelParams,
    MomentPair,
    Multipliers,
    QuadratureSpec,
    appendix_closed_forms,
    moments,
    torus_integrate,
)
from .solver import (
    InitialCondition,
    InvariantViolationError,
    LinearSolveFailure,
    PeriodicGrid1D,
    PicardNoConvergenceError,
    SimulationError,
    SolverConfig,
    State,
    run_simulation,
)


class ParseError(Exception):
    """Malformed configuration text; carries a line number when known."""

    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno


class ValidationError(Exception):
    """A configuration value violates an invariant."""


class CheckFailure(Exception):
    """A post-run acceptance check failed (``--check`` mode)."""


# The solver's natural coupling parameter is U; with the default
# 2*d*eps0^2 = 1 (d = 1) the config key U0 equals U directly.
_DEFAULT_EPS0 = 1.0 / math.sqrt(2.0)

_DEFAULTS: dict[str, dict[str, str]] = {
    "model": {
        "d": "1",
        "eps0": repr(_DEFAULT_EPS0),
        "u0": "0.0",
        "eta": "1.0",
        "tau0": "1.0",
        "delta": "0.01",
    },
    "solver": {
        "t_final": "0.0",
        "scheme": "semi_implicit",
        "alpha": "0.0",
        "eps_reg": "1e-10",
        "picard_tol": "1e-11",
        "picard_max": "200",
    },
    "grid": {"n": "100"},
    "initial": {
        "preset": "step",
        "w0": "1.0",
        "n_const": "0.5",
        "amplitude": "0.1",
        "mode": "1",
        "n_base": "0.5",
    },
    "output": {"dir": ".", "times": "", "plot": "false"},
    "convergence": {"variable": "n"},
}

_KNOWN_KEYS: dict[str, set[str]] = {
    "model": {"d", "eps0", "u0", "eta", "tau0", "delta"},
    "solver": {
        "dt", "t_final", "scheme", "alpha", "gamma",
        "eps_reg", "picard_tol", "picard_max",
    },
    "grid": {"n"},
    "initial": {"preset", "w0", "n_const", "amplitude", "mode", "n_base"},
    "output": {"dir", "times", "plot"},
    "convergence": {"axis", "grids", "ref_n", "dts", "ref_dt", "variable", "t_final"},
}

_OVERRIDE_RE = re.compile(r"^--([a-z]+)\.([a-z0-9_]+)=(.*)$")


@dataclass(frozen=True)
class ConvergenceOptions:
    axis: str
    grids: tuple[int, ...] = ()
    ref_n: int = 0
    dts: tuple[float, ...] = ()
    ref_dt: float = 0.0
    variable: str = "n"


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    solver: SolverConfig
    N: int
    initial: InitialCondition | None
    initial_file: Path | None
    output_dir: Path
    output_times: tuple[float, ...]
    plot: bool
    convergence: ConvergenceOptions | None

    def build_initial(self, grid: PeriodicGrid1D) -> State:
        if self.initial_file is not None:
            return _load_snapshot(self.initial_file, grid)
        assert self.initial is not None
        return self.initial.build(grid)


def _parse_value(section: str, key: str, raw: str):
    converters = {
        ("model", "d"): int, ("model", "eps0"): float, ("model", "u0"): float,
        ("model", "eta"): float, ("model", "tau0"): float, ("model", "delta"): float,
        ("solver", "dt"): float, ("solver", "t_final"): float,
        ("solver", "scheme"): str, ("solver", "alpha"): float,
        ("solver", "gamma"): float, ("solver", "eps_reg"): float,
        ("solver", "picard_tol"): float, ("solver", "picard_max"): int,
        ("grid", "n"): int,
        ("initial", "preset"): str, ("initial", "w0"): float,
        ("initial", "n_const"): float, ("initial", "amplitude"): float,
        ("initial", "mode"): int, ("initial", "n_base"): float,
        ("output", "dir"): str, ("output", "times"): str, ("output", "plot"): bool,
        ("convergence", "axis"): str, ("convergence", "grids"): str,
        ("convergence", "ref_n"): int, ("convergence", "dts"): str,
        ("convergence", "ref_dt"): float, ("convergence", "variable"): str,
        ("convergence", "t_final"): float,
    }
    conv = converters[(section, key)]
    try:
        if conv is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return conv(raw)
    except ValueError as exc:
        raise ValidationError(f"{section}.{key}: {exc}") from exc


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.split(",") if tok.strip())


def parse_config(path: str | Path | None = None,
                 overrides: Sequence[str] = ()) -> RunConfig:
    """Build a validated RunConfig from an INI file and/or override flags.

    Overrides have the form ``--section.key=value`` and win over file values.
    Unknown sections or keys are hard errors; every numeric value is validated
    against its module invariant before anything runs.
    """
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#", ";"))
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh, source=str(path))
        except configparser.Error as exc:
            lineno = getattr(exc, "lineno", None)
            if lineno is None and getattr(exc, "errors", None):
                lineno = exc.errors[0][0]
            raise ParseError(str(exc.message if hasattr(exc, "message") else exc),
                             lineno) from exc

    raw: dict[str, dict[str, str]] = {s: dict(v) for s, v in _DEFAULTS.items()}
    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise ValidationError(f"unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in _KNOWN_KEYS[section]:
                raise ValidationError(f"unknown key {section}.{key}")
            raw[section][key] = value

    for ov in overrides:
        m = _OVERRIDE_RE.match(ov)
        if not m:
            raise ValidationError(f"malformed override {ov!r}; expected --section.key=value")
        section, key, value = m.group(1), m.group(2), m.group(3)
        if section not in _KNOWN_KEYS or key not in _KNOWN_KEYS[section]:
            raise ValidationError(f"unknown key {section}.{key}")
        raw[section][key] = value

    values: dict[str, dict[str, object]] = {}
    for section, entries in raw.items():
        values[section] = {
            key: _parse_value(section, key, val) for key, val in entries.items()
        }

    if "dt" not in values["solver"]:
        raise ValidationError("missing required key solver.dt")

    try:
        params = ModelParams(
            d=values["model"]["d"],
            eps0=values["model"]["eps0"],
            U0=values["model"]["u0"],
            eta=values["model"]["eta"],
            tau0=values["model"]["tau0"],
            delta=values["model"]["delta"],
        )
        solver = SolverConfig(
            dt=values["solver"]["dt"],
            t_final=values["solver"]["t_final"],
            scheme=values["solver"]["scheme"],
            alpha=values["solver"]["alpha"],
            gamma=values["solver"].get("gamma"),
            eps_reg=values["solver"]["eps_reg"],
            picard_tol=values["solver"]["picard_tol"],
            picard_max=values["solver"]["picard_max"],
        )
        grid_n = values["grid"]["n"]
        PeriodicGrid1D(grid_n)

        preset = str(values["initial"]["preset"])
        initial: InitialCondition | None = None
        initial_file: Path | None = None
        if preset.startswith("file:"):
            initial_file = Path(preset[5:])
            if not initial_file.exists():
                raise ValidationError(f"initial snapshot not found: {initial_file}")
        else:
            initial = InitialCondition(
                kind=preset,
                w0=values["initial"]["w0"],
                n_const=values["initial"]["n_const"],
                amplitude=values["initial"]["amplitude"],
                mode=values["initial"]["mode"],
                n_base=values["initial"]["n_base"],
            )

        times = _float_list(str(values["output"]["times"]))
        conv: ConvergenceOptions | None = None
        if "axis" in values["convergence"]:
            axis = str(values["convergence"]["axis"])
            if axis not in ("time", "space"):
                raise ValueError(f"convergence.axis must be time or space, got {axis!r}")
            conv = ConvergenceOptions(
                axis=axis,
                grids=_int_list(str(values["convergence"].get("grids", ""))),
                ref_n=values["convergence"].get("ref_n", 0),
                dts=_float_list(str(values["convergence"].get("dts", ""))),
                ref_dt=values["convergence"].get("ref_dt", 0.0),
                variable=str(values["convergence"]["variable"]),
            )
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    return RunConfig(
        params=params,
        solver=solver,
        N=grid_n,
        initial=initial,
        initial_file=initial_file,
        output_dir=Path(str(values["output"]["dir"])),
        output_times=times,
        plot=bool(values["output"]["plot"]),
        convergence=conv,
    )


def serialize_config(config: RunConfig) -> str:
    """Render a RunConfig back to INI text; parse_config round-trips it."""
    p, s = config.params, config.solver
    lines = [
        "[model]",
        f"d = {p.d}", f"eps0 = {_fmt(p.eps0)}", f"u0 = {_fmt(p.U0)}",
        f"eta = {_fmt(p.eta)}", f"tau0 = {_fmt(p.tau0)}", f"delta = {_fmt(p.delta)}",
        "",
        "[solver]",
        f"dt = {_fmt(s.dt)}", f"t_final = {_fmt(s.t_final)}", f"scheme = {s.scheme}",
        f"alpha = {_fmt(s.alpha)}", f"eps_reg = {_fmt(s.eps_reg)}",
        f"picard_tol = {_fmt(s.picard_tol)}", f"picard_max = {s.picard_max}",
    ]
    if s.gamma is not None:
        lines.append(f"gamma = {_fmt(s.gamma)}")
    lines += ["", "[grid]", f"n = {config.N}", "", "[initial]"]
    if config.initial_file is not None:
        lines.append(f"preset = file:{config.initial_file}")
    else:
        ic = config.initial
        lines += [
            f"preset = {ic.kind}", f"w0 = {_fmt(ic.w0)}", f"n_const = {_fmt(ic.n_const)}",
            f"amplitude = {_fmt(ic.amplitude)}", f"mode = {ic.mode}",
            f"n_base = {_fmt(ic.n_base)}",
        ]
    lines += [
        "", "[output]",
        f"dir = {config.output_dir}",
        "times = " + ",".join(_fmt(t) for t in config.output_times),
        f"plot = {'true' if config.plot else 'false'}",
    ]
    if config.convergence is not None:
        c = config.convergence
        lines += ["", "[convergence]", f"axis = {c.axis}", f"variable = {c.variable}"]
        if c.grids:
            lines.append("grids = " + ",".join(str(g) for g in c.grids))
        if c.ref_n:
            lines.append(f"ref_n = {c.ref_n}")
        if c.dts:
            lines.append("dts = " + ",".join(_fmt(d) for d in c.dts))
        if c.ref_dt:
            lines.append(f"ref_dt = {_fmt(c.ref_dt)}")
    return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(x))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    _atomic_write(path, "\n".join([header] + rows) + "\n")


def _load_snapshot(path: Path, grid: PeriodicGrid1D) -> State:
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    if not lines or lines[0] != "x,n,W,W_tot":
        raise ValidationError(f"{path}: expected snapshot header 'x,n,W,W_tot'")
    body = [line.split(",") for line in lines[1:]]
    if len(body) != grid.N:
        raise ValidationError(
            f"{path}: snapshot has {len(body)} rows but the grid has {grid.N} cells"
        )
    n = np.array([float(r[1]) for r in body])
    W = np.array([float(r[2]) for r in body])
    return State(n=n, W=W, k=0, t=0.0, grid=grid)


def _snapshot_rows(state: State, params: ModelParams) -> list[str]:
    x = state.grid.x
    wtot = state.w_tot(params)
    return [
        f"{_fmt(x[i])},{_fmt(state.n[i])},{_fmt(state.W[i])},{_fmt(wtot[i])}"
        for i in range(state.grid.N)
    ]


_TIMESERIES_HEADER = (
    "t,mass,energy_total,variance,n_min,n_max,W_min,W_max,dist_to_steady"
)


def _timeseries_row(rec: diagnostics.DiagnosticsRecord) -> str:
    return ",".join(
        _fmt(v)
        for v in (
            rec.t, rec.mass, rec.energy_total, rec.variance,
            rec.n_min, rec.n_max, rec.W_min, rec.W_max, rec.dist_to_steady,
        )
    )


def cmd_simulate(config: RunConfig, check: bool = False) -> int:
    grid = PeriodicGrid1D(config.N)
    initial = config.build_initial(grid)
    out = config.output_dir

    records: list[diagnostics.DiagnosticsRecord] = []
    prev_mean = {"value": float(initial.W.mean())}

    def observe(state: State) -> None:
        records.append(diagnostics.record(state, config.params, prev_mean["value"]))
        prev_mean["value"] = float(state.W.mean())

    output_times = config.output_times or (config.solver.t_final,)
    trajectory = run_simulation(
        initial, config.params, config.solver,
        observers=[observe], output_times=output_times,
    )

    _write_csv(out / "timeseries.csv", _TIMESERIES_HEADER,
               [_timeseries_row(r) for r in records])
    for state in trajectory:
        name = f"snapshot_t{state.t:g}.csv"
        _write_csv(out / name, "x,n,W,W_tot", _snapshot_rows(state, config.params))

    if config.plot:
        final = trajectory[-1]
        emit_svg_plot(
            [("n", final.grid.x, final.n), ("W", final.grid.x, final.W)],
            out / "profiles.svg",
            title=f"t = {final.t:g}", x_label="x",
        )

    if check:
        _run_checks(records, config)
    return 0


def _run_checks(records: list[diagnostics.DiagnosticsRecord], config: RunConfig) -> None:
    """Conservation / monotonicity checks over the recorded trajectory."""
    scheme = config.solver.scheme
    for prev, cur in zip(records, records[1:]):
        if scheme in ("semi_implicit", "zeroth_order"):
            drift = abs(cur.mass - prev.mass) / max(abs(prev.mass), 1e-300)
            if drift > 1e-12:
                raise CheckFailure(f"mass drift {drift:.3e} at t = {cur.t:g}")
        if scheme == "semi_implicit":
            drift = abs(cur.energy_total - prev.energy_total) / max(
                abs(prev.energy_total), 1e-300)
            if drift > 1e-12:
                raise CheckFailure(f"total-energy drift {drift:.3e} at t = {cur.t:g}")
        if scheme == "implicit_picard":
            if cur.energy_total < prev.energy_total - 1e-9:
                raise CheckFailure(f"total energy decreased at t = {cur.t:g}")
            if cur.variance > prev.variance + 1e-9:
                raise CheckFailure(f"variance increased at t = {cur.t:g}")
    for rec in records:
        if rec.W_min < -1e-10:
            raise CheckFailure(f"W dropped to {rec.W_min:.3e} at t = {rec.t:g}")
        if rec.n_min < config.params.delta - 1e-10:
            raise CheckFailure(f"n dropped to {rec.n_min:.6g} at t = {rec.t:g}")


def cmd_convergence(config: RunConfig) -> int:
    if config.convergence is None:
        raise ValidationError("convergence command needs a [convergence] section")
    if config.initial is None:
        raise ValidationError("convergence studies need an analytic initial preset")
    c = config.convergence
    if c.axis == "space":
        if not c.grids or not c.ref_n:
            raise ValidationError("spatial study needs convergence.grids and ref_n")
        report = harness.spatial_study(
            config.solver, config.params, config.initial,
            list(c.grids), c.ref_n, variable=c.variable,
        )
    else:
        if not c.dts or not c.ref_dt:
            raise ValidationError("temporal study needs convergence.dts and ref_dt")
        report = harness.temporal_study(
            config.solver, config.params, config.initial,
            list(c.dts), c.ref_dt, N=config.N, variable=c.variable,
        )

    rows = []
    order_by_index: dict[int, float] = {}
    oi = 0
    for j in range(1, len(report.step_sizes)):
        if abs(report.step_sizes[j - 1] / report.step_sizes[j] - 2.0) < 1e-12:
            if oi < len(report.observed_orders):
                order_by_index[j] = report.observed_orders[oi]
                oi += 1
    for j, (h, err) in enumerate(zip(report.step_sizes, report.errors)):
        order = _fmt(order_by_index[j]) if j in order_by_index else ""
        rows.append(f"{_fmt(h)},{_fmt(err)},{order}")
    _write_csv(config.output_dir / "convergence.csv", "h,error,observed_order", rows)

    flag = " (degenerate)" if report.degenerate else ""
    print(f"axis={report.axis} fitted_order={report.fitted_order:.4g}{flag}")
    if config.plot and not report.degenerate:
        emit_svg_plot(
            [("error", list(report.step_sizes), list(report.errors))],
            config.output_dir / "convergence.svg",
            log_y=True, title=f"{report.axis} refinement", x_label="h",
        )
    return 0


def _kinetics_params(args: argparse.Namespace) -> tuple[ModelParams, QuadratureSpec]:
    params = ModelParams(d=args.d, eps0=args.eps0, eta=args.eta)
    spec = QuadratureSpec(M=args.m, d=args.d)
    return params, spec


def cmd_moments(args: argparse.Namespace) -> int:
    params, spec = _kinetics_params(args)
    mom = moments(Multipliers(args.lambda0, args.lambda1), params, spec)
    print("n,E")
    print(f"{_fmt(mom.n)},{_fmt(mom.E)}")
    return 0


def cmd_invert(args: argparse.Namespace) -> int:
    params, spec = _kinetics_params(args)
    lam = invert_moments(MomentPair(args.n, args.E), params, spec, InversionSettings())
    print("lambda0,lambda1")
    print(f"{_fmt(lam.lambda0)},{_fmt(lam.lambda1)}")
    return 0


def cmd_verify_integrals(args: argparse.Namespace) -> int:
    params, spec = _kinetics_params(args)
    closed = appendix_closed_forms(params)
    e0 = params.eps0

    def eps_of(p):
        return -2.0 * e0 * np.cos(2.0 * np.pi * p).sum(axis=-1)

    def u1_sq(p):
        return (4.0 * np.pi * e0 * np.sin(2.0 * np.pi * p[:, 0])) ** 2

    quads = {
        "eps_sq": torus_integrate(lambda p: eps_of(p) ** 2, spec),
        "vel_sq": torus_integrate(u1_sq, spec),
        "eps_vel_sq": torus_integrate(lambda p: eps_of(p) * u1_sq(p), spec),
        "eps_sq_vel_sq": torus_integrate(lambda p: eps_of(p) ** 2 * u1_sq(p), spec),
    }
    print("integral,quadrature,closed_form,abs_diff")
    for name, quad in quads.items():
        ref = getattr(closed, name)
        print(f"{name},{_fmt(quad)},{_fmt(ref)},{_fmt(abs(quad - ref))}")
    return 0


_SVG_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_svg_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    path: str | Path,
    log_y: bool = False,
    title: str = "",
    x_label: str = "",
) -> None:
    """Write a standalone SVG with one polyline per series.

    Byte-deterministic for identical input.  With log_y, any nonpositive
    ordinate is an error and no file is written.
    """
    width, height = 640.0, 480.0
    ml, mr, mt, mb = 60.0, 20.0, 30.0, 40.0

    cleaned = []
    for label, xs, ys in series:
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if len(xs) != len(ys):
            raise ValueError(f"series {label!r}: x and y lengths differ")
        if log_y and any(y <= 0 for y in ys):
            raise ValueError(f"series {label!r}: log-y plot requires positive values")
        cleaned.append((label, xs, [math.log10(y) for y in ys] if log_y else ys))

    xs_all = [v for _, xs, _ in cleaned for v in xs]
    ys_all = [v for _, _, ys in cleaned for v in ys]
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr)

    def py(y: float) -> float:
        return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="white"/>',
        f'<line x1="{ml:g}" y1="{height - mb:g}" x2="{width - mr:g}" '
        f'y2="{height - mb:g}" stroke="black"/>',
        f'<line x1="{ml:g}" y1="{mt:g}" x2="{ml:g}" y2="{height - mb:g}" stroke="black"/>',
    ]
    ylab = lambda v: f"1e{v:.6g}" if log_y else f"{v:.6g}"
    out.append(f'<text x="{ml:g}" y="{height - mb + 16:g}" font-size="11">{x_lo:.6g}</text>')
    out.append(f'<text x="{width - mr - 40:g}" y="{height - mb + 16:g}" font-size="11">'
               f'{x_hi:.6g}</text>')
    out.append(f'<text x="4" y="{height - mb:g}" font-size="11">{ylab(y_lo)}</text>')
    out.append(f'<text x="4" y="{mt + 10:g}" font-size="11">{ylab(y_hi)}</text>')
    if title:
        out.append(f'<text x="{ml:g}" y="18" font-size="13">{title}</text>')
    if x_label:
        out.append(f'<text x="{(ml + width - mr) / 2:g}" y="{height - 6:g}" '
                   f'font-size="12">{x_label}</text>')

    for idx, (label, xs, ys) in enumerate(cleaned):
        color = _SVG_PALETTE[idx % len(_SVG_PALETTE)]
        pts = " ".join(f"{px(x):.6g},{py(y):.6g}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        ty = mt + 14 * (idx + 1)
        out.append(f'<text x="{width - mr - 100:g}" y="{ty:g}" font-size="12" '
                   f'fill="{color}">{label}</text>')
    out.append("</svg>")
    _atomic_write(Path(path), "\n".join(out) + "\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lattice-transport",
        description="Energy-transport simulations for optical lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a time integration")
    sim.add_argument("--config", help="INI config file")
    sim.add_argument("--check", action="store_true",
                     help="verify conservation/monotonicity, exit 4 on failure")

    conv = sub.add_parser("convergence", help="run a refinement study")
    conv.add_argument("--config", help="INI config file")

    for name in ("moments", "invert", "verify-integrals"):
        p = sub.add_parser(name)
        p.add_argument("--d", type=int, default=1)
        p.add_argument("--eps0", type=float, default=1.0)
        p.add_argument("--eta", type=float, default=1.0)
        p.add_argument("--m", type=int, default=64, help="quadrature points per dimension")
        if name == "moments":
            p.add_argument("--lambda0", type=float, required=True)
            p.add_argument("--lambda1", type=float, required=True)
        if name == "invert":
            p.add_argument("--n", type=float, required=True)
            p.add_argument("--E", type=float, required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    overrides = [a for a in argv if _OVERRIDE_RE.match(a)]
    rest = [a for a in argv if not _OVERRIDE_RE.match(a)]
    parser = _build_parser()
    args = parser.parse_args(rest)

    try:
        if args.command == "simulate":
            config = parse_config(args.config, overrides)
            return cmd_simulate(config, check=args.check)
        if args.command == "convergence":
            config = parse_config(args.config, overrides)
            return cmd_convergence(config)
        if overrides:
            raise ValidationError(
                f"{args.command} takes plain flags, not --section.key overrides"
            )
        if args.command == "moments":
            return cmd_moments(args)
        if args.command == "invert":
            return cmd_invert(args)
        return cmd_verify_integrals(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"error: CheckFailure: {exc}", file=sys.stderr)
        return 4
    except (SimulationError, LinearSolveFailure, PicardNoConvergenceError,
            InvariantViolationError, NoConvergenceError, SingularJacobianError,
            ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

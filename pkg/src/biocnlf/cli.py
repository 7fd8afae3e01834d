"""Command-line entry point.

Three modes: ``convergence`` runs the manufactured problem over a halving
list of mesh sizes with tau = h and reports errors and rates;
``stability`` reports final-time solution norms over a list of mesh sizes;
``single`` runs one simulation (physical or manufactured) and emits its
diagnostics log.

Configuration comes from flags, optionally layered over a flat
``key = value`` text file given with ``--config``; flags override file
values and unknown file keys are a hard error.  Mesh sizes and time steps
accept exact fractions like ``1/128``.
"""

import argparse
import sys
from dataclasses import dataclass, fields, replace
from fractions import Fraction

from .assembly import (
    AffineViscosity,
    ConstantViscosity,
    ExponentialViscosity,
    ModelParams,
)
from .scheme import DiagnosticsLog, RunConfig, run
from .verification import (
    ConvergenceRow,
    StabilityRow,
    convergence_study,
    stability_sweep,
    validate_halving,
)


class ConfigError(ValueError):
    """Invalid or conflicting configuration input."""


MODES = ("convergence", "stability", "single")
SIM_MODES = ("physical", "manufactured")
STARTUPS = ("backward_euler", "exact_first_step")
FORMATS = ("text", "csv")

CONV_COLUMNS = (
    "h", "tau",
    "u_L2", "u_L2_rate",
    "c_L2", "c_L2_rate",
    "p_L2", "p_L2_rate",
    "u_H1", "u_H1_rate",
    "c_H1", "c_H1_rate",
)
STAB_COLUMNS = ("h", "u_L2", "u_H1", "c_L2", "c_H1", "p_L2")


@dataclass
class CliConfig:
    mode: str = "single"
    nu: object = None  # viscosity law object
    h: tuple = None  # tuple of Fractions, or None
    nx: int = 16
    ny: int = 16
    tau: Fraction = Fraction(1, 16)
    tau_equals_h: bool = False
    T: float = 1.0
    theta: float = 1.0
    gamma: float = 1.0
    g: float = 1.0
    U: float = 1.0
    alpha: float = 0.0
    kappa: float = 1e-3
    out: str = None
    format: str = "text"
    startup: str = "backward_euler"
    sim: str = "physical"
    seed: int = 0  # reserved for future stochastic features
    diag_every: int = 1

    def __post_init__(self):
        if self.nu is None:
            self.nu = ConstantViscosity(1.0)

    def params(self):
        return ModelParams(
            nu_law=self.nu,
            theta=self.theta,
            gamma=self.gamma,
            g=self.g,
            U=self.U,
            alpha=self.alpha,
            kappa=self.kappa,
        )


def parse_nu_spec(text):
    """Parse a viscosity law spec: const:NU0, affine:A:B, or exp."""
    parts = str(text).strip().split(":")
    try:
        if parts[0] == "const" and len(parts) == 2:
            return ConstantViscosity(float(Fraction(parts[1])))
        if parts[0] == "affine" and len(parts) == 3:
            return AffineViscosity(float(Fraction(parts[1])), float(Fraction(parts[2])))
        if parts[0] == "exp" and len(parts) == 1:
            return ExponentialViscosity()
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"malformed value for key 'nu': {text!r} ({exc})") from exc
    raise ConfigError(
        f"malformed value for key 'nu': {text!r} "
        "(expected const:NU0, affine:A:B, or exp)"
    )


def _nu_spec_string(law):
    return law.spec_string()


def _parse_fraction(key, text):
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"malformed value for key {key!r}: {text!r}") from exc


def _parse_h_list(text):
    items = [s for s in str(text).split(",") if s.strip()]
    if not items:
        raise ConfigError("malformed value for key 'h': empty list")
    return tuple(_parse_fraction("h", s) for s in items)


def _parse_bool(key, text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"malformed value for key {key!r}: {text!r}")


def _parse_int(key, text):
    try:
        return int(str(text).strip())
    except ValueError as exc:
        raise ConfigError(f"malformed value for key {key!r}: {text!r}") from exc


def _parse_float(key, text):
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"malformed value for key {key!r}: {text!r}") from exc


def _parse_choice(key, text, choices):
    t = str(text).strip()
    if t not in choices:
        raise ConfigError(f"malformed value for key {key!r}: {text!r} not in {choices}")
    return t


_KEY_PARSERS = {
    "mode": lambda v: _parse_choice("mode", v, MODES),
    "nu": parse_nu_spec,
    "h": _parse_h_list,
    "nx": lambda v: _parse_int("nx", v),
    "ny": lambda v: _parse_int("ny", v),
    "tau": lambda v: _parse_fraction("tau", v),
    "tau_equals_h": lambda v: _parse_bool("tau_equals_h", v),
    "T": lambda v: _parse_float("T", v),
    "theta": lambda v: _parse_float("theta", v),
    "gamma": lambda v: _parse_float("gamma", v),
    "g": lambda v: _parse_float("g", v),
    "U": lambda v: _parse_float("U", v),
    "alpha": lambda v: _parse_float("alpha", v),
    "kappa": lambda v: _parse_float("kappa", v),
    "out": lambda v: str(v).strip(),
    "format": lambda v: _parse_choice("format", v, FORMATS),
    "startup": lambda v: _parse_choice("startup", v, STARTUPS),
    "sim": lambda v: _parse_choice("sim", v, SIM_MODES),
    "seed": lambda v: _parse_int("seed", v),
    "diag_every": lambda v: _parse_int("diag_every", v),
}


def read_config_file(path):
    """Read a flat ``key = value`` file; unknown keys are a hard error."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _KEY_PARSERS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _KEY_PARSERS[key](value)
    return values


def format_config(cfg):
    """Serialize a CliConfig in the flat file format (round-trips through
    parse_config)."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name == "nu":
            text = _nu_spec_string(value)
        elif f.name == "h":
            text = ",".join(str(x) for x in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def _build_parser():
    p = argparse.ArgumentParser(
        prog="biocnlf",
        description="2D bioconvection solver (decoupled CNLF finite elements)",
    )
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--nu", help="viscosity law: const:NU0 | affine:A:B | exp")
    p.add_argument("--h", help="comma list of mesh sizes, e.g. 1/4,1/8,1/16")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--tau", help="time step (fractions accepted)")
    p.add_argument("--tau-equals-h", dest="tau_equals_h",
                   action="store_const", const=True, default=None,
                   help="use tau = h for each mesh size")
    p.add_argument("--T", help="final time")
    p.add_argument("--theta", help="diffusivity")
    p.add_argument("--gamma", help="density-ratio parameter")
    p.add_argument("--g", help="gravity magnitude")
    p.add_argument("--U", help="mean upward swimming speed")
    p.add_argument("--alpha", help="mean concentration")
    p.add_argument("--kappa", help="admissible viscosity bound in (0, 1]")
    p.add_argument("--out", help="output path prefix for CSV files")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--startup", choices=STARTUPS)
    p.add_argument("--sim", choices=SIM_MODES, help="single-run mode")
    p.add_argument("--seed", type=int)
    p.add_argument("--diag-every", dest="diag_every", type=int)
    return p


def parse_config(argv):
    """Parse flags plus an optional config file into a validated CliConfig."""
    ns = _build_parser().parse_args(argv)
    given = {}
    for key in _KEY_PARSERS:
        raw = getattr(ns, key)
        if raw is None:
            continue
        given[key] = _KEY_PARSERS[key](raw) if isinstance(raw, str) else raw
    merged = {}
    if ns.config:
        merged.update(read_config_file(ns.config))
    merged.update(given)
    cfg = replace(CliConfig(), **merged)
    _validate(cfg, explicit=set(merged))
    return cfg


def _validate(cfg, explicit):
    if cfg.mode == "convergence":
        if cfg.h is None or len(cfg.h) < 2:
            raise ConfigError("convergence mode requires an h list of length >= 2")
        try:
            validate_halving(cfg.h)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if "tau" in explicit:
            raise ConfigError("convergence mode uses tau = h; do not pass --tau")
        if "nx" in explicit or "ny" in explicit:
            raise ConfigError("convergence mode takes --h, not --nx/--ny")
        if "sim" in explicit and cfg.sim != "manufactured":
            raise ConfigError("convergence mode is always manufactured")
    elif cfg.mode == "stability":
        if cfg.h is None or len(cfg.h) < 1:
            raise ConfigError("stability mode requires an h list")
        if "tau" in explicit:
            raise ConfigError("stability mode uses tau = h; do not pass --tau")
        if "nx" in explicit or "ny" in explicit:
            raise ConfigError("stability mode takes --h, not --nx/--ny")
        if "sim" in explicit and cfg.sim != "manufactured":
            raise ConfigError("stability mode is always manufactured")
    else:  # single
        if cfg.h is not None:
            if len(cfg.h) != 1:
                raise ConfigError("single mode takes exactly one h")
            if "nx" in explicit or "ny" in explicit:
                raise ConfigError("pass either --h or --nx/--ny, not both")
        if "tau" in explicit and cfg.tau_equals_h:
            raise ConfigError("pass either --tau or --tau-equals-h, not both")
        if cfg.tau_equals_h and cfg.h is None:
            raise ConfigError("--tau-equals-h requires --h")
    if not cfg.T > 0:
        raise ConfigError(f"T must be positive, got {cfg.T}")
    try:
        cfg.params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def execute(cfg):
    """Run the configured study; returns (kind, payload)."""
    params = cfg.params()
    if cfg.mode == "convergence":
        result = convergence_study(
            cfg.h, params=params, t_final=cfg.T, startup=cfg.startup
        )
        return "convergence", result
    if cfg.mode == "stability":
        rows = stability_sweep(
            cfg.h, params=params, t_final=cfg.T, startup=cfg.startup
        )
        return "stability", rows
    if cfg.h is not None:
        frac = cfg.h[0]
        nx = ny = int(round(1.0 / float(frac)))
        tau = float(frac) if cfg.tau_equals_h else float(cfg.tau)
    else:
        nx, ny = cfg.nx, cfg.ny
        tau = float(cfg.tau)
    run_cfg = RunConfig(
        nx=nx,
        ny=ny,
        tau=tau,
        t_final=cfg.T,
        params=params,
        mode=cfg.sim,
        startup=cfg.startup,
        diag_every=cfg.diag_every,
    )
    state, log = run(run_cfg)
    return "single", (state, log)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v):
    return f"{v:.6g}"


def _fmt_rate(r):
    return "" if r is None else f"{r:.2f}"


def _convergence_cells(rows):
    table = []
    for row in rows:
        rates = row.rates or {}
        cells = [_fmt(row.h), _fmt(row.tau)]
        for key in ("u_L2", "c_L2", "p_L2", "u_H1", "c_H1"):
            cells.append(_fmt(row.errors[key]))
            cells.append(_fmt_rate(rates.get(key)))
        table.append(cells)
    return table


def _stability_cells(rows):
    return [
        [_fmt(r.h), _fmt(r.u_L2), _fmt(r.u_H1), _fmt(r.c_L2), _fmt(r.c_H1), _fmt(r.p_L2)]
        for r in rows
    ]


def _as_csv(header, table):
    lines = [",".join(header)]
    lines.extend(",".join(cells) for cells in table)
    return "\n".join(lines) + "\n"


def _as_text(header, table):
    widths = [len(h) for h in header]
    for cells in table:
        widths = [max(w, len(c)) for w, c in zip(widths, cells)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    for cells in table:
        lines.append("  ".join(c.rjust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines) + "\n"


def emit_tables(data, fmt="text", out=None):
    """Render study rows or a diagnostics log; returns the rendered text.

    ``data`` may be a list of ConvergenceRow, a list of StabilityRow, or a
    DiagnosticsLog.  With ``out`` set, the text is also written to that
    path (UTF-8, LF line endings).
    """
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}")
    if isinstance(data, DiagnosticsLog):
        import io

        buf = io.StringIO()
        data.to_csv(buf)
        text = buf.getvalue()
        if fmt == "text":
            rows = [line.split(",") for line in text.strip().split("\n")]
            text = _as_text(rows[0], rows[1:])
    else:
        rows = list(data)
        if not rows:
            raise ConfigError("no rows to emit")
        if isinstance(rows[0], ConvergenceRow):
            header, table = list(CONV_COLUMNS), _convergence_cells(rows)
        elif isinstance(rows[0], StabilityRow):
            header, table = list(STAB_COLUMNS), _stability_cells(rows)
        else:
            raise ConfigError(f"cannot emit rows of type {type(rows[0])!r}")
        text = _as_csv(header, table) if fmt == "csv" else _as_text(header, table)
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def main(argv=None):
    """CLI driver; returns the process exit code."""
    try:
        cfg = parse_config(argv)
    except (ConfigError, SystemExit) as exc:
        if isinstance(exc, SystemExit):
            return int(exc.code or 0)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        kind, payload = execute(cfg)
        if kind == "convergence":
            print(emit_tables(payload.rows, cfg.format), end="")
            if cfg.out:
                emit_tables(payload.rows, "csv", out=f"{cfg.out}_convergence.csv")
        elif kind == "stability":
            print(emit_tables(payload, cfg.format), end="")
            if cfg.out:
                emit_tables(payload, "csv", out=f"{cfg.out}_stability.csv")
        else:
            state, log = payload
            print(emit_tables(log, cfg.format), end="")
            if cfg.out:
                emit_tables(log, "csv", out=f"{cfg.out}_diagnostics.csv")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())

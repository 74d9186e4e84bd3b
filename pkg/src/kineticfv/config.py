"""Run configuration: plain-text ``key = value`` files with one section per
module, parsed into a typed SolverConfig.

Grammar: blank lines and ``#``/``;`` comments are skipped; ``[section]``
opens a section; every other line must be ``key = value``.  Unknown
sections or keys are rejected with an error naming the offender and its
line number.  Keys left out fall back first to SolverConfig defaults and
then, for the control parameters, to the selected case's documented
controls (see cases.CASES).

Sections and keys:

    [case]            name, n, scale (desk|full)
    [reconstruction]  flavor (weno|hweno), linear (bool)
    [time]            scheme (s2o4_e|s2o3_l|s2o3_g), cfl, cfl_accel,
                      explicit_cfl, k_a, stop_time
    [solver]          dim_k, restarts, tol, jacobi_sweeps, sweeps,
                      lam_mode (average|max), halve_on_divergence
    [output]          dir, every
    [run]             max_steps, threads
"""

from dataclasses import dataclass, fields

from .errors import ConfigError

FLAVORS = ("weno", "hweno")
SCHEMES = ("s2o4_e", "s2o3_l", "s2o3_g")
LAM_MODES = ("average", "max")


@dataclass
class SolverConfig:
    """Typed run configuration; None means "use the case default"."""

    case_name: str = ""
    mesh_n: int = None
    mesh_scale: str = None
    flavor: str = "weno"
    recon_linear: bool = None
    scheme: str = "s2o3_l"
    cfl: float = None
    cfl_accel: float = None
    explicit_cfl: float = None
    k_a: int = None
    stop_time: float = None
    dim_k: int = None
    restarts: int = 1
    tol: float = 1.0e-6
    jacobi_sweeps: int = 2
    sweeps: int = 1
    lam_mode: str = "average"
    halve_on_divergence: bool = False
    out_dir: str = "out"
    output_every: int = 0
    max_steps: int = 100000
    threads: int = 1


def _parse_bool(s):
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("not a boolean: %r" % s)


def _positive(kind, name):
    def parse(s):
        x = kind(s)
        if x <= 0:
            raise ValueError("%s must be positive, got %s" % (name, s))
        return x
    return parse


def _choice(options, name):
    def parse(s):
        if s not in options:
            raise ValueError("%s must be one of %s, got %r"
                             % (name, "|".join(options), s))
        return s
    return parse


def _nonneg_int(name):
    def parse(s):
        x = int(s)
        if x < 0:
            raise ValueError("%s must be >= 0, got %s" % (name, s))
        return x
    return parse


# (section, key) -> (SolverConfig attribute, parser)
_SCHEMA = {
    ("case", "name"): ("case_name", str),
    ("case", "n"): ("mesh_n", _positive(int, "n")),
    ("case", "scale"): ("mesh_scale", _choice(("desk", "full"), "scale")),
    ("reconstruction", "flavor"): ("flavor", _choice(FLAVORS, "flavor")),
    ("reconstruction", "linear"): ("recon_linear", _parse_bool),
    ("time", "scheme"): ("scheme", _choice(SCHEMES, "scheme")),
    ("time", "cfl"): ("cfl", _positive(float, "cfl")),
    ("time", "cfl_accel"): ("cfl_accel", _positive(float, "cfl_accel")),
    ("time", "explicit_cfl"): ("explicit_cfl",
                               _positive(float, "explicit_cfl")),
    ("time", "k_a"): ("k_a", _positive(int, "k_a")),
    ("time", "stop_time"): ("stop_time", _positive(float, "stop_time")),
    ("solver", "dim_k"): ("dim_k", _positive(int, "dim_k")),
    ("solver", "restarts"): ("restarts", _positive(int, "restarts")),
    ("solver", "tol"): ("tol", _positive(float, "tol")),
    ("solver", "jacobi_sweeps"): ("jacobi_sweeps",
                                  _positive(int, "jacobi_sweeps")),
    ("solver", "sweeps"): ("sweeps", _positive(int, "sweeps")),
    ("solver", "lam_mode"): ("lam_mode", _choice(LAM_MODES, "lam_mode")),
    ("solver", "halve_on_divergence"): ("halve_on_divergence", _parse_bool),
    ("output", "dir"): ("out_dir", str),
    ("output", "every"): ("output_every", _nonneg_int("every")),
    ("run", "max_steps"): ("max_steps", _positive(int, "max_steps")),
    ("run", "threads"): ("threads", _positive(int, "threads")),
}

_SECTIONS = ("case", "reconstruction", "time", "solver", "output", "run")

# attribute -> (section, key), for emitting
_BY_ATTR = {attr: sk for sk, (attr, _) in _SCHEMA.items()}


def parse_config_text(text, overrides=()):
    """Parse config text, then apply ``section.key=value`` override strings
    (CLI --set).  Returns a SolverConfig; raises ConfigError on unknown or
    invalid keys, naming the key and line."""
    cfg = SolverConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError("unknown section [%s] (line %d)"
                                  % (section, lineno))
            continue
        if "=" not in line:
            raise ConfigError("expected key = value (line %d): %r"
                              % (lineno, raw.rstrip()))
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if section is None:
            raise ConfigError("key %r before any [section] (line %d)"
                              % (key, lineno))
        _apply(cfg, section, key, val, "line %d" % lineno)
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError("override must be section.key=value, got %r"
                              % ov)
        dotted, _, val = ov.partition("=")
        section, _, key = dotted.strip().partition(".")
        _apply(cfg, section, key.strip(), val.strip(), "override %r" % ov)
    return cfg


def _apply(cfg, section, key, val, where):
    if section not in _SECTIONS:
        raise ConfigError("unknown section [%s] (%s)" % (section, where))
    spec = _SCHEMA.get((section, key))
    if spec is None:
        raise ConfigError("unknown key %r in [%s] (%s)"
                          % (key, section, where))
    attr, parse = spec
    try:
        setattr(cfg, attr, parse(val))
    except ValueError as err:
        raise ConfigError("bad value for %s.%s (%s): %s"
                          % (section, key, where, err)) from None


def parse_config(path, overrides=()):
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, overrides)


def emit_config(cfg):
    """Serialize a SolverConfig back to config text.  Only explicitly set
    (non-None) fields are written; parse_config_text(emit_config(c)) == c."""
    by_section = {}
    for f in fields(SolverConfig):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        section, key = _BY_ATTR[f.name]
        if isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, float):
            text = "%.17g" % val
        else:
            text = str(val)
        by_section.setdefault(section, []).append((key, text))
    out = []
    for section in _SECTIONS:
        if section not in by_section:
            continue
        out.append("[%s]" % section)
        for key, text in by_section[section]:
            out.append("%s = %s" % (key, text))
        out.append("")
    return "\n".join(out)

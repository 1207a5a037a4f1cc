"""Run configuration: YAML loading, schema validation and object construction."""

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np
import yaml

from . import cartpole as cp
from . import lqr
from .errors import ConfigError
from .gp import CompositeKernel, GpModel, KernelSpec, MeanModel, NoiseModel
from .optimizer import EffortModel, EsSettings, StoppingRule
from .synthetic import Dip, SyntheticPair


def schema():
    text = resources.files("mfes").joinpath("data/config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def default_config_path(problem):
    name = {"synthetic1d": "default_synthetic.yaml", "cartpole": "default_cartpole.yaml"}[problem]
    return resources.files("mfes").joinpath("data", name)


def _node_line(root, path, extra_key=None):
    """1-based line of the YAML node at ``path`` (a sequence of keys/indices)."""
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    if extra_key is not None and isinstance(node, yaml.MappingNode):
        for k, _ in node.value:
            if k.value == extra_key:
                return k.start_mark.line + 1
    return node.start_mark.line + 1


def validate(data, root_node=None, path=None):
    """Raise :class:`ConfigError` for the first schema violation (earliest line first)."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = list(validator.iter_errors(data))
    if not errors:
        return
    located = []
    for err in errors:
        where = list(err.absolute_path)
        extra = None
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            unknown = sorted(set(err.instance) - allowed)
            extra = unknown[0] if unknown else None
        line = _node_line(root_node, where, extra) if root_node is not None else None
        label = "/".join(str(p) for p in where) or "<root>"
        located.append((line or 0, f"{label}: {err.message}"))
    located.sort()
    line, message = located[0]
    raise ConfigError(message, line=line or None, path=path)


def load(path):
    """Read and validate a config file, returning the plain dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
    return loads(text, str(path))


def loads(text, path=None):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None, path=path) from None
    if data is None:
        data = {}
    validate(data, root, path)
    problem = data["problem"]
    if problem == "synthetic1d" and "synthetic" not in data:
        raise ConfigError("problem synthetic1d needs a 'synthetic' section",
                          line=_node_line(root, []), path=path)
    if problem == "cartpole" and "plant" not in data:
        raise ConfigError("problem cartpole needs a 'plant' section",
                          line=_node_line(root, []), path=path)
    _check_dimensions(data, root, path)
    return data


def _check_dimensions(data, root, path):
    dim = 1 if data["problem"] == "synthetic1d" else 2
    for comp in ("sim", "err"):
        ls = data["gp"]["kernel"][comp].get("length_scales")
        if ls is not None and len(ls) != dim:
            raise ConfigError(f"gp/kernel/{comp}/length_scales: expected {dim} values, got {len(ls)}",
                              line=_node_line(root, ["gp", "kernel", comp, "length_scales"]), path=path)
    for i, entry in enumerate(data.get("initial", [])):
        if len(entry["theta"]) != dim:
            raise ConfigError(f"initial/{i}/theta: expected {dim} values",
                              line=_node_line(root, ["initial", i, "theta"]), path=path)


@dataclass
class Experiment:
    """Everything a run needs, built from a validated config."""

    config: dict
    objective: object
    gp: GpModel
    settings: EsSettings
    efforts: EffortModel
    stop: StoppingRule
    initial: list
    bounds: np.ndarray
    synthetic: SyntheticPair = None
    plant: dict = None


def bounds_of(cfg):
    if cfg["problem"] == "synthetic1d":
        return np.array([cfg["synthetic"]["bounds"]], dtype=float)
    return np.array(cfg.get("lqr", {}).get("bounds", lqr.THETA_BOUNDS.tolist()), dtype=float)


def build_gp(cfg, bounds):
    k = cfg["gp"]["kernel"]
    variant = k.get("variant", "rational-quadratic")
    alpha = k.get("alpha", 0.25)
    widths = bounds[:, 1] - bounds[:, 0]

    def component(c):
        ls = c.get("length_scales")
        if ls is None:
            ls = c.get("length_fraction", 0.2) * widths
        return KernelSpec(variant, c["variance"], tuple(ls), alpha)

    kernel = CompositeKernel(component(k["sim"]), component(k["err"]))
    mean = MeanModel(**cfg["gp"]["mean"])
    noise = NoiseModel(**cfg["gp"]["noise"])
    return GpModel(kernel, mean, noise)


def build_synthetic(cfg):
    s = cfg["synthetic"]
    b = s.get("bias", {})
    noise = cfg["gp"]["noise"]
    return SyntheticPair(
        bounds=tuple(s["bounds"]), level=s["level"],
        dips=tuple(Dip(**d) for d in s["dips"]),
        bias_offset=b.get("offset", 0.0), bias_slope=b.get("slope", 0.0),
        bias_amplitude=b.get("amplitude", 0.0), bias_period=b.get("period", 1.0),
        eta_exp=noise["eta_exp"], eta_sim=noise["eta_sim"])


def build_plant(cfg):
    """Real/sim parameters, limits, x0, design model and the gain map for a cartpole config."""
    p = cfg["plant"]
    real = cp.CartPoleParams(**p["real"])
    sim_cfg = dict(p["sim"])
    scale = sim_cfg.pop("pole_mass_scale", 0.85)
    sim = cp.CartPoleParams(**{**vars(real), "pole_mass": real.pole_mass * scale, **sim_cfg})
    limits = cp.SafetyLimits(**p["limits"])
    x0 = cp.CartPoleState(*p["x0"])
    lq = cfg.get("lqr", {})
    design = lqr.linearize(sim if lq.get("design_model", "sim") == "sim" else real)
    nominal = np.array(lq.get("nominal", lqr.THETA_NOMINAL.tolist()), dtype=float)
    return dict(real=real, sim=sim, limits=limits, x0=x0, model=design, nominal=nominal,
                penalties=(p["penalties"]["exp"], p["penalties"]["sim"]),
                theta_to_gain=lambda th: lqr.gain_from_theta(th, design))


def build(cfg):
    bounds = bounds_of(cfg)
    gp = build_gp(cfg, bounds)
    es_cfg = cfg.get("es", {})
    settings = EsSettings(**es_cfg)
    efforts = EffortModel(**cfg["efforts"])
    st = cfg.get("stopping", {})
    sigma_err = float(np.sqrt(gp.kernel.k_err.output_variance))
    stop = StoppingRule(
        window=st.get("window", 3),
        mean_band=st.get("mean_band_fraction", 0.25) * sigma_err,
        std_cap=st.get("std_cap_fraction", 0.5) * sigma_err,
        max_iterations=st.get("max_iterations", 60),
        max_total_effort=st.get("max_total_effort_exp", 40.0) * efforts.t_exp)
    initial = [(np.array(e["theta"], dtype=float), int(e["delta"])) for e in cfg.get("initial", [])]
    synthetic = plant = None
    if cfg["problem"] == "synthetic1d":
        synthetic = build_synthetic(cfg)
        objective = synthetic.objective()
    else:
        plant = build_plant(cfg)
        noise = cfg["gp"]["noise"]
        objective = cp.make_objective_pair(
            plant["real"], plant["sim"], plant["limits"], plant["penalties"],
            (noise["eta_exp"], noise["eta_sim"]), plant["theta_to_gain"], plant["x0"],
            bounds)
    return Experiment(cfg, objective, gp, settings, efforts, stop, initial, bounds,
                      synthetic, plant)

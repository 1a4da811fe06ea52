"""Run configuration: strict pydantic models, presets and resolution.

Resolution order, later wins: model defaults, preset, --config file, CLI
flags, then the CCIDENT_SEED environment variable.
"""

import copy
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config import Config
from core_types import ForcingSpec
from errors import ConfigError, InvalidArgument
from harness import MethodSettings, parse_methods
from nn_cc import TrainConfig
from odesim import IntegratorConfig
from systems import REGISTRY, SamplingProtocol, TrueSystem, make_system, paper_protocol


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class SystemSection(StrictModel):
    name: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)


class ForcingSection(StrictModel):
    amplitude: Optional[float] = None
    omega: Optional[float] = None


class InitSection(StrictModel):
    x0: Optional[float] = None
    v0: Optional[float] = None


class IntegratorSection(StrictModel):
    rtol: float = 1e-10
    atol: float = 1e-10
    max_step: Optional[float] = None
    t_max: float = 40.0
    n_samples: int = 500
    method: str = 'auto'

    def build(self) -> IntegratorConfig:
        return IntegratorConfig(rtol=self.rtol, atol=self.atol,
                                max_step=self.max_step if self.max_step is not None else math.inf,
                                t_max=self.t_max, n_samples=self.n_samples, method=self.method)


class PolySection(StrictModel):
    degree: int = 10


class SindySection(StrictModel):
    degree: int = 10
    threshold: float = 0.05
    ridge: float = 1e-5
    max_iter: int = 20


class NNSection(StrictModel):
    neurons: int = 100
    layers: int = 2
    activation: str = 'relu'
    learning_rate: float = 1e-3
    max_epochs: int = 20000
    loss_stop: float = 1e-7
    lambda_c: float = 0.01


class MethodsSection(StrictModel):
    selection: str = 'all'
    poly: PolySection = Field(default_factory=PolySection)
    sindy: SindySection = Field(default_factory=SindySection)
    nn: NNSection = Field(default_factory=NNSection)


class ProtocolSection(StrictModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    train: Optional[Dict[str, Tuple[float, float]]] = None
    validation: Optional[Dict[str, Tuple[float, float]]] = Field(default=None, alias='validate')
    n_train: int = 30
    n_val_per_train: int = 30


class ValidationSection(StrictModel):
    amplitude: Optional[float] = None
    omega: Optional[float] = None
    x0: Optional[float] = None
    v0: Optional[float] = None


class ArchSection(StrictModel):
    axis: str = 'neurons'
    values: Optional[List[Union[int, float, str]]] = None


class RunConfig(StrictModel):
    """Fully resolved settings of one CLI run."""
    system: SystemSection = Field(default_factory=SystemSection)
    forcing: ForcingSection = Field(default_factory=ForcingSection)
    init: InitSection = Field(default_factory=InitSection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    methods: MethodsSection = Field(default_factory=MethodsSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    validation: ValidationSection = Field(default_factory=ValidationSection)
    arch: ArchSection = Field(default_factory=ArchSection)
    seed: int = 0
    jobs: Optional[int] = None
    output_dir: Optional[str] = None

    # ------------------------------------------------------------------
    # Builders for library objects
    # ------------------------------------------------------------------

    def build_system(self) -> TrueSystem:
        """Registry system with configured params layered over its defaults."""
        if not self.system.name:
            raise ConfigError("missing required key system.name (use --system or a preset)")
        if self.system.name not in REGISTRY:
            raise ConfigError(f"unknown system.name {self.system.name!r}; registry: {', '.join(REGISTRY)}")
        params = {**REGISTRY[self.system.name].defaults, **self.system.params}
        return make_system(self.system.name, params)

    def training_drive(self, system: TrueSystem) -> Tuple[ForcingSpec, Tuple[float, float]]:
        forcing = system.forcing(
            self.forcing.amplitude if self.forcing.amplitude is not None else system.default_forcing.amplitude,
            self.forcing.omega if self.forcing.omega is not None else system.default_forcing.omega)
        x0 = self.init.x0 if self.init.x0 is not None else system.default_init[0]
        v0 = self.init.v0 if self.init.v0 is not None else system.default_init[1]
        return forcing, (x0, v0)

    def validation_drive(self, system: TrueSystem) -> Tuple[ForcingSpec, Tuple[float, float]]:
        v = self.validation
        missing = [k for k in ('amplitude', 'omega', 'x0', 'v0') if getattr(v, k) is None]
        if missing:
            raise ConfigError(f"missing required key(s) {', '.join('validation.' + k for k in missing)}")
        return system.forcing(v.amplitude, v.omega), (v.x0, v.v0)

    def build_protocol(self, system: TrueSystem) -> SamplingProtocol:
        base = paper_protocol(system.name, self.protocol.n_train, self.protocol.n_val_per_train, self.seed)
        train = {**base.train, **(self.protocol.train or {})}
        validate = {**base.validate, **(self.protocol.validation or {})}
        return SamplingProtocol(train=train, validate=validate, n_train=self.protocol.n_train,
                                n_val_per_train=self.protocol.n_val_per_train, rng_seed=self.seed)

    def train_config(self) -> TrainConfig:
        nn = self.methods.nn
        return TrainConfig(neurons=nn.neurons, layers=nn.layers, activation=nn.activation,
                           learning_rate=nn.learning_rate, max_epochs=nn.max_epochs,
                           loss_stop=nn.loss_stop, lambda_c=nn.lambda_c, seed=self.seed)

    def method_settings(self) -> MethodSettings:
        return MethodSettings(poly_degree=self.methods.poly.degree, sindy_degree=self.methods.sindy.degree,
                              threshold=self.methods.sindy.threshold, ridge=self.methods.sindy.ridge,
                              max_iter=self.methods.sindy.max_iter, nn=self.train_config())

    def selected_methods(self) -> Tuple[str, ...]:
        return parse_methods(self.methods.selection)

    def resolved_jobs(self) -> int:
        return self.jobs if self.jobs is not None else Config.JOBS

    def output_path(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Config.OUTPUT_DIR


# ============================================================================
# Presets
# ============================================================================

def _system_preset(name: str) -> Dict[str, Any]:
    spec = REGISTRY[name]
    x0, v0 = spec.init
    return {
        'system': {'name': name, 'params': dict(spec.defaults)},
        'forcing': {'amplitude': spec.amplitude, 'omega': spec.omega},
        'init': {'x0': x0, 'v0': v0},
        'validation': {'amplitude': 0.75 * spec.amplitude, 'omega': spec.omega, 'x0': x0, 'v0': v0},
    }


_VDP_TRAINING = {
    'system': {'name': 'van_der_pol', 'params': {'mu': 0.501, 'k': 1.22}},
    'forcing': {'amplitude': 0.834, 'omega': 1.512},
    'init': {'x0': -0.353, 'v0': -0.408},
}

PRESETS: Dict[str, Dict[str, Any]] = {
    'paper-3.1': {
        **_VDP_TRAINING,
        'validation': {'amplitude': 1.384, 'omega': 1.578, 'x0': 0.458, 'v0': 0.033},
    },
    'paper-3.2': {
        'system': {'name': 'stick_slip', 'params': {'c': 0.386, 'mu_n': 0.801, 'k': 1.274}},
        'forcing': {'amplitude': 2.0, 'omega': 0.363},
        'init': {'x0': -0.076, 'v0': 0.146},
        'validation': {'amplitude': 1.396, 'omega': 0.306, 'x0': 0.4640, 'v0': -0.1170},
    },
    'paper-sweep': {
        'protocol': {'n_train': 30, 'n_val_per_train': 30},
    },
    'paper-appendix-b': {
        **_VDP_TRAINING,
        'validation': {'amplitude': 1.384, 'omega': 1.578, 'x0': -0.385, 'v0': 0.213},
    },
    **{f'paper-{name}': _system_preset(name) for name in REGISTRY},
}
PRESET_NAMES = tuple(PRESETS)


# ============================================================================
# Resolution
# ============================================================================

def deep_merge(base: Dict[str, Any], patch: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``patch`` into a copy of ``base``; None values in patch are skipped."""
    out = copy.deepcopy(base)
    for key, value in patch.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            out[key] = deep_merge(out[key] if isinstance(out.get(key), dict) else {}, value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_file(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return data


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = '.'.join(str(p) for p in item['loc'])
        parts.append(f"{where}: {item['msg']}")
    return '; '.join(parts)


def resolve_config(preset: Optional[str] = None, config_path: Optional[Path] = None,
                   overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Layer preset, config file, CLI overrides and the seed environment variable.

    Raises:
        ConfigError: unknown preset, unreadable file, unknown key or bad value
    """
    data: Dict[str, Any] = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESET_NAMES)}")
        data = deep_merge(data, PRESETS[preset])
    if config_path:
        data = deep_merge(data, load_config_file(config_path))

    overrides = dict(overrides or {})
    preset_system = data.get('system', {}).get('name')
    cli_system = (overrides.get('system') or {}).get('name')
    if preset and preset_system and cli_system and cli_system != preset_system:
        raise ConfigError(f"preset {preset!r} is defined for system {preset_system!r}, not {cli_system!r}")
    data = deep_merge(data, overrides)

    seed = Config.seed_override()
    if seed is not None:
        data['seed'] = seed

    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e))

    try:
        cfg.selected_methods()
        cfg.integrator.build()
        cfg.train_config()
    except InvalidArgument as e:
        raise ConfigError(str(e))
    return cfg


def dump_config(cfg: RunConfig, directory: Path) -> Path:
    """Write the resolved configuration as run_config.json in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / 'run_config.json'
    with open(target, 'w') as f:
        json.dump(cfg.model_dump(mode='json', by_alias=True), f, indent=4)
        f.write('\n')
    return target

"""
Experiment configuration: environment defaults < JSON config file < flags.
"""

import json
import logging
import os
from typing import Any, Literal, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from backend.core.errors import ConfigError, LiteralError
from backend.core.numerics import QuadNum, parse

log = logging.getLogger(__name__)

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))

load_dotenv(os.path.join(PROJECT_ROOT, '.env'))

EXPERIMENTS = ('validate', 'flow', 'iet', 'return-time', 'target', 'bicorn', 'converge', 'axis')

ENV_FIELDS = {
    'BSFLAB_SEED': 'seed',
    'BSFLAB_JOBS': 'jobs',
    'BSFLAB_CAP': 'cap',
    'BSFLAB_OUT': 'out',
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    surface: str
    experiment: Literal['validate', 'flow', 'iet', 'return-time', 'target', 'bicorn', 'converge', 'axis']
    eps: str = '1/8'
    B: str = '1'
    trials: int = Field(100, ge=1)
    cap: str = '64'
    iterates: int = Field(8, ge=1)
    count: int = Field(6, ge=2)
    schedule: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2 ** 64)
    jobs: int = Field(1, ge=1)
    out: Optional[str] = None
    transversal: Optional[str] = None
    automorphism: Optional[str] = None
    alpha: tuple[int, int] = (1, 0)
    beta: tuple[int, int] = (0, 1)
    x0: Optional[str] = None
    sequence: Literal['golden', 'constant', 'alternating'] = 'golden'

    @field_validator('eps', 'B', 'cap', 'x0')
    @classmethod
    def _literal(cls, v: Optional[str]) -> Optional[str]:
        if v is None:
            return v
        try:
            parse(str(v))
        except (LiteralError, ZeroDivisionError) as e:
            raise ValueError(str(e)) from e
        return str(v)

    @field_validator('eps', 'cap')
    @classmethod
    def _positive(cls, v: str) -> str:
        if parse(v).sign() <= 0:
            raise ValueError('must be positive')
        return v

    def number(self, name: str) -> Optional[QuadNum]:
        value = getattr(self, name)
        return None if value is None else parse(value)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def env_defaults() -> dict[str, Any]:
    values = {}
    for var, name in ENV_FIELDS.items():
        if os.getenv(var) not in (None, ''):
            values[name] = os.getenv(var)
    return values


def data_dir() -> str:
    return os.getenv('BSFLAB_DATA_DIR') or os.path.join(PROJECT_ROOT, 'data', 'surfaces')


def log_level() -> str:
    return os.getenv('BSFLAB_LOG_LEVEL', 'WARNING').upper()


def read_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError('config', f'cannot read config file: {e.strerror}', path) from e
    except json.JSONDecodeError as e:
        raise ConfigError('config', f'invalid JSON at line {e.lineno}: {e.msg}', path) from e
    if not isinstance(data, dict):
        raise ConfigError('config', 'top level must be an object', path)
    return data


def load_config(flags: dict[str, Any], config_path: Optional[str] = None) -> ExperimentConfig:
    """Merge environment defaults, the optional JSON file and explicit flags, in that order."""
    sources: dict[str, str] = {}
    merged: dict[str, Any] = {}
    layers = [(env_defaults(), '<env>')]
    if config_path:
        layers.append((read_config_file(config_path), config_path))
    layers.append(({k: v for k, v in flags.items() if v is not None}, '<flags>'))
    for values, location in layers:
        for key, value in values.items():
            merged[key] = value
            sources[key] = location
    try:
        config = ExperimentConfig(**merged)
    except ValidationError as e:
        err = e.errors()[0]
        name = str(err['loc'][0]) if err['loc'] else 'config'
        raise ConfigError(name, err['msg'], sources.get(name, '<flags>')) from e
    log.debug('config for %s on %s: %s', config.experiment, config.surface, config.model_dump())
    return config

"""Versioned JSON model configurations.

A config fully describes one kernel (by generator rates, conditional holding
laws, competing clocks or explicit density terms) plus the optional filtering
data: transition classes, the coarse-graining of augmented labels and an
initial state.  Densities serialize as term lists
``[coeff_re, coeff_im, power, rate_re, rate_im]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from .errors import InputError
from .exppoly import ExpPolyDensity
from .filtering import TransitionClassMap
from .kernels import (
    GeneratorSpec,
    SemiMarkovKernel,
    smk_from_competing,
    smk_from_conditional,
    smk_from_generator,
)

SCHEMA_VERSION = 1


def density_to_terms(d: ExpPolyDensity) -> list:
    return [[c.real, c.imag, int(m), r.real, r.imag] for c, m, r in d.terms]


def density_from_terms(terms) -> ExpPolyDensity:
    try:
        parsed = tuple(
            (complex(cr, ci), int(m), complex(rr, ri)) for cr, ci, m, rr, ri in terms
        )
    except (TypeError, ValueError) as e:
        raise InputError(f"malformed density terms: {e}") from None
    return ExpPolyDensity(parsed)


@dataclass(frozen=True)
class ModelConfig:
    """A kernel and its optional filtering annotations loaded from JSON."""

    kernel: SemiMarkovKernel
    classes: TransitionClassMap | None
    coarse: dict | None
    keep: list | None
    initial: object | None
    mark: object | None
    name: str | None
    raw: dict


def _matrix_of_densities(states, rows, what: str):
    n = len(states)
    if len(rows) != n or any(len(r) != n for r in rows):
        raise InputError(f"{what} matrix must be {n}x{n}")
    return [
        [None if cell is None else density_from_terms(cell) for cell in row]
        for row in rows
    ]


def _parse_aug_label(label: str):
    if "|" not in label:
        raise InputError(f"augmented label {label!r} must look like 'state|class'")
    state, idx = label.rsplit("|", 1)
    return (state, int(idx))


def config_to_model(cfg: Mapping) -> ModelConfig:
    if cfg.get("schema") != SCHEMA_VERSION:
        raise InputError(f"unsupported config schema {cfg.get('schema')!r}")
    states = cfg.get("states")
    if not states or len(set(states)) != len(states):
        raise InputError("config needs a list of distinct states")
    states = tuple(states)
    mode = cfg.get("construction")
    if mode == "generator":
        rates = cfg.get("rates")
        if rates is None:
            raise InputError("generator construction needs 'rates'")
        kernel = smk_from_generator(GeneratorSpec(states, tuple(map(tuple, rates))))
    elif mode == "conditional":
        P = cfg.get("transition_matrix")
        holding = cfg.get("holding")
        if P is None or holding is None:
            raise InputError("conditional construction needs 'transition_matrix' and 'holding'")
        kernel = smk_from_conditional(states, P, _matrix_of_densities(states, holding, "holding"))
    elif mode == "competing":
        clocks = cfg.get("clocks")
        if clocks is None:
            raise InputError("competing construction needs 'clocks'")
        kernel = smk_from_competing(states, _matrix_of_densities(states, clocks, "clocks"))
    elif mode == "explicit":
        entries = cfg.get("entries")
        if entries is None:
            raise InputError("explicit construction needs 'entries'")
        mat = _matrix_of_densities(states, entries, "entries")
        mat = [[d if d is not None else ExpPolyDensity.zero() for d in row] for row in mat]
        kernel = SemiMarkovKernel(states, mat)
    else:
        raise InputError(f"unknown construction mode {mode!r}")

    classes = None
    if "classes" in cfg:
        parsed = {}
        for key, idx in cfg["classes"].items():
            if "->" not in key:
                raise InputError(f"transition label {key!r} must look like 'y->z'")
            y, z = key.split("->", 1)
            if y not in states or z not in states:
                raise InputError(f"transition label {key!r} names unknown states")
            parsed[(y, z)] = int(idx)
        classes = TransitionClassMap(parsed)
    coarse = None
    if "coarse" in cfg:
        coarse = {_parse_aug_label(k): v for k, v in cfg["coarse"].items()}
    keep = None
    if "keep" in cfg:
        keep = [_parse_aug_label(k) for k in cfg["keep"]]
    initial = cfg.get("initial")
    if initial is not None and initial not in states:
        raise InputError(f"initial state {initial!r} not in the state list")
    mark = cfg.get("mark")
    if mark is not None and coarse is not None and mark not in set(coarse.values()):
        raise InputError(f"mark {mark!r} is not a coarse-grained label")
    return ModelConfig(
        kernel=kernel,
        classes=classes,
        coarse=coarse,
        keep=keep,
        initial=initial,
        mark=mark,
        name=cfg.get("name"),
        raw=dict(cfg),
    )


def load_model_config(path) -> ModelConfig:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"config file is not valid JSON: {e}") from None
    return config_to_model(cfg)


def save_model_config(cfg: Mapping, path):
    if cfg.get("schema") != SCHEMA_VERSION:
        raise InputError("refusing to write a config without the current schema tag")
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def kernel_to_config(kernel: SemiMarkovKernel, name: str | None = None) -> dict:
    """Explicit-entry config of any kernel (exact term dump)."""
    return {
        "schema": SCHEMA_VERSION,
        "name": name,
        "states": list(kernel.states),
        "construction": "explicit",
        "entries": [
            [density_to_terms(d) if d.terms else None for d in row]
            for row in kernel.entries
        ],
    }


def gene_model_config(params, level: int) -> dict:
    """Generator-mode config of the promoter model at one concentration level."""
    from .models import GENE_JOINT_CLASSES, GENE_JOINT_COARSE, gene_generator

    gen = gene_generator(params, level)
    return {
        "schema": SCHEMA_VERSION,
        "name": f"gene[R={params.concentration(level)}]",
        "states": list(gen.states),
        "construction": "generator",
        "rates": [list(row) for row in gen.rates],
        "classes": {f"{y}->{z}": i for (y, z), i in GENE_JOINT_CLASSES.classes.items()},
        "coarse": {f"{s}|{i}": m for (s, i), m in GENE_JOINT_COARSE.items()},
        "initial": "P_on",
        "mark": "J",
        "meta": {
            "k_on": params.k_on,
            "k_off": params.k_off,
            "k1": params.k1,
            "k2": params.k2,
            "k_J": params.k_J,
            "R": params.concentration(level),
        },
    }


def leakage_model_config(params) -> dict:
    """Competing-clocks config of the leaky-promoter representation."""
    from .models import LEAKAGE_STATES

    e = ExpPolyDensity.exponential
    p = params
    clocks = [
        [None, density_to_terms(e(p.k_on)), None, density_to_terms(e(p.k_J * p.r))],
        [density_to_terms(e(p.k_off_R)), None, density_to_terms(e(p.k_J)), None],
        [density_to_terms(e(p.k_off_R)), None, density_to_terms(e(p.k_J)), None],
        [None, density_to_terms(e(p.k_on)), None, density_to_terms(e(p.k_J * p.r))],
    ]
    return {
        "schema": SCHEMA_VERSION,
        "name": "leaky-promoter",
        "states": list(LEAKAGE_STATES),
        "construction": "competing",
        "clocks": clocks,
        "initial": "1",
        "meta": {
            "k_on": p.k_on,
            "k_off_R": p.k_off_R,
            "k_J": p.k_J,
            "r": p.r,
        },
    }

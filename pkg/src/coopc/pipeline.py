"""Pass pipelines for the four output styles.

======================  ==================================================
callbacks + lift        normalize, boxing, split, param-lift, lift, cps
callbacks + env         normalize, env-prepare, split, env-generate,
                        env-float, cps
statemachine + lift     normalize, slots, boxing, split, defun, param-lift,
                        lift, cps
statemachine + env      normalize, env-prepare, split, defun, env-generate,
                        env-float, cps
======================  ==================================================

``slots`` rewrites value-returning cps functions to write through a return
slot; a state machine cannot hand a value to its dispatch callback any other
way.  The env pipelines do the same rewriting inside ``env-prepare``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import ast as A
from .checker import check
from .parser import parse
from .passes.boxing import box_program, rewrite_slots
from .passes.cps import cps_convert
from .passes.defun import defun_program
from .passes.env import generate_program, prepare_environments
from .passes.lift import float_program, param_lift_program
from .passes.normalize import normalize_program
from .passes.split import split_program, validate_tails

CONTROLS = ("callbacks", "statemachine")
DATAS = ("lift", "env")
PASS_NAMES = ("normalize", "slots", "boxing", "env-prepare", "split", "defun",
              "param-lift", "lift", "env-generate", "env-float", "cps")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    control: str = "callbacks"
    data: str = "lift"
    direct_dispatch: bool = True
    all_vars: bool = False      # lift every variable, ignoring liveness

    def __post_init__(self):
        if self.control not in CONTROLS:
            raise ConfigError(f"unknown control style {self.control!r}")
        if self.data not in DATAS:
            raise ConfigError(f"unknown data style {self.data!r}")

    @classmethod
    def parse(cls, text: str, **flags) -> "PipelineConfig":
        """``'callbacks+lift'``, ``'sm-env'`` and similar shorthands."""
        parts = text.replace("+", "-").split("-")
        if len(parts) != 2:
            raise ConfigError(f"bad pipeline {text!r}")
        control = {"cb": "callbacks", "sm": "statemachine"}.get(parts[0], parts[0])
        return cls(control, parts[1], **flags)

    @property
    def name(self) -> str:
        return f"{'cb' if self.control == 'callbacks' else 'sm'}-{self.data}"

    def passes(self) -> list:
        sm = self.control == "statemachine"
        if self.data == "lift":
            head = ["normalize"] + (["slots"] if sm else []) + ["boxing", "split"]
            tail = ["param-lift", "lift", "cps"]
        else:
            head = ["normalize", "env-prepare", "split"]
            tail = ["env-generate", "env-float", "cps"]
        return head + (["defun"] if sm else []) + tail


PIPELINES = tuple(PipelineConfig(c, d) for c in CONTROLS for d in DATAS)


class InternalError(Exception):
    pass


def _check_tails(prog: A.Program):
    for f in prog.functions:
        if f.is_cps:
            validate_tails(f)


@dataclass
class CompileResult:
    config: PipelineConfig
    ir: A.Program
    stages: dict = field(default_factory=dict)


def compile_program(prog: A.Program, config: PipelineConfig = PipelineConfig(),
                    dump: Optional[Callable[[str, A.Program], None]] = None) -> CompileResult:
    """Run the passes of ``config`` on a checked program."""
    steps = {
        "normalize": normalize_program,
        "slots": rewrite_slots,
        "boxing": box_program,
        "env-prepare": prepare_environments,
        "split": split_program,
        "defun": lambda p: defun_program(p, config.direct_dispatch),
        "param-lift": lambda p: param_lift_program(p, config.all_vars),
        "lift": float_program,
        "env-generate": generate_program,
        "env-float": float_program,
        "cps": cps_convert,
    }
    stages = {}
    for name in config.passes():
        prog = steps[name](prog)
        if name in ("split", "defun"):
            try:
                _check_tails(prog)
            except Exception as exc:
                raise InternalError(f"after {name}: {exc}") from exc
        stages[name] = prog
        if dump is not None:
            dump(name, prog)
    return CompileResult(config, prog, stages)


def compile_source(source: str, config: PipelineConfig = PipelineConfig(), dump=None) -> CompileResult:
    return compile_program(check(parse(source)), config, dump)

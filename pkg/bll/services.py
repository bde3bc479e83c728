from __future__ import annotations

import json
import logging
import re
import time
from abc import ABC, abstractmethod
from dataclasses import replace
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .exceptions import (
    DegenerateWebError,
    EvaluationError,
    RepeatedDirectionError,
    SWebError,
    ValidationError,
    WOrderOverflowError,
)
from .expr import format_expr, parse
from .models import (
    Branch,
    Command,
    Domain,
    EmitTarget,
    FormQuadruple,
    Mode,
    RankReport,
    RunConfig,
    RunOutcome,
    SamplePlan,
    WebSpec,
    ZeroVerdict,
)
from . import sweb


logger = logging.getLogger(__name__)

VERSION = "1.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_INCONCLUSIVE = 4

FORM_KEYS = ("omega1", "omega2", "omega3", "omega4")
CONFIG_KEYS = ("f", "b", "phi", "domain", "mode", "samples", "tol", "seed") + FORM_KEYS


class IConfigRepository(ABC):

    @abstractmethod
    def load(self) -> Dict[str, str]:
        raise NotImplementedError


# ============================ Конфігурація ============================

_NUMBER = r"\s*(-?\d+(?:\.\d+)?(?:/\d+)?)\s*"
_DOMAIN_RE = re.compile(rf"^\s*\[{_NUMBER},{_NUMBER}\]\s*x\s*\[{_NUMBER},{_NUMBER}\]\s*$")


def parse_domain(text: str) -> Domain:
    match = _DOMAIN_RE.match(text)
    if match is None:
        raise ValidationError(f"Некоректний запис області '{text}', очікується [x0,x1]x[y0,y1].")
    x0, x1, y0, y1 = (Fraction(g) for g in match.groups())
    if not (x0 < x1 and y0 < y1):
        raise ValidationError(f"Область '{text}' порожня: потрібно x0 < x1 та y0 < y1.")
    return Domain(x0, x1, y0, y1)


class ConfigService:

    def __init__(self, repo: Optional[IConfigRepository] = None):
        self._repo = repo

    def load(self, command: Command, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
        raw = self._repo.load() if self._repo is not None else {}
        return self.build(command, raw, overrides or {})

    def build(self, command: Command, raw: Mapping[str, str], overrides: Mapping[str, Any]) -> RunConfig:
        unknown = sorted(set(raw) - set(CONFIG_KEYS))
        if unknown:
            raise ValidationError(f"Невідомі ключі конфігурації: {', '.join(unknown)}.")
        values: Dict[str, Any] = dict(raw)
        # прапорці CLI мають пріоритет над файлом
        values.update({k: v for k, v in overrides.items() if v is not None})

        config = RunConfig(command=command)
        config.f = self._text(values, "f")
        config.b = self._text(values, "b")
        config.phi = self._text(values, "phi")
        if "domain" in values:
            config.domain = parse_domain(str(values["domain"]))
        if "mode" in values:
            config.mode = self._mode(values["mode"])
        if "samples" in values:
            config.samples = self._integer(values["samples"], "samples")
            if config.samples < sweb.MIN_SAMPLES:
                raise ValidationError(f"samples має бути не меншим за {sweb.MIN_SAMPLES}.")
        if "tol" in values:
            config.tol = self._positive_float(values["tol"], "tol")
        if "seed" in values:
            config.seed = self._integer(values["seed"], "seed")
        if values.get("emit") is not None:
            config.emit = self._emit(values["emit"])
        config.json = bool(values.get("json", False))
        config.timing = bool(values.get("timing", False))
        config.out = values.get("out")
        if any(key in values for key in FORM_KEYS):
            config.forms = tuple(self._form(values, key) for key in FORM_KEYS)

        self._validate(config)
        return config

    # ===== Допоміжні методи =====

    @staticmethod
    def _text(values: Mapping[str, Any], key: str) -> Optional[str]:
        value = values.get(key)
        if value is None:
            return None
        value = str(value).strip()
        if not value:
            raise ValidationError(f"Значення '{key}' не може бути порожнім.")
        return value

    @staticmethod
    def _mode(value: Any) -> Mode:
        try:
            return Mode(str(value).strip())
        except ValueError:
            raise ValidationError(f"Режим має бути exact або float, отримано '{value}'.") from None

    @staticmethod
    def _emit(value: Any) -> EmitTarget:
        try:
            return EmitTarget(str(value).strip())
        except ValueError:
            choices = ", ".join(t.value for t in EmitTarget)
            raise ValidationError(f"Невідомий об'єкт для виводу '{value}' (допустимі: {choices}).") from None

    @staticmethod
    def _integer(value: Any, key: str) -> int:
        try:
            return int(str(value).strip())
        except ValueError:
            raise ValidationError(f"'{key}' має бути цілим числом.") from None

    @staticmethod
    def _positive_float(value: Any, key: str) -> float:
        try:
            number = float(str(value).strip())
        except ValueError:
            raise ValidationError(f"'{key}' має бути числом.") from None
        if not number > 0:
            raise ValidationError(f"'{key}' має бути додатним.")
        return number

    @staticmethod
    def _form(values: Mapping[str, Any], key: str) -> Tuple[str, str]:
        if key not in values:
            raise ValidationError(f"Для check-forms потрібні всі чотири форми, бракує '{key}'.")
        parts = str(values[key]).split(";")
        if len(parts) != 2 or not all(p.strip() for p in parts):
            raise ValidationError(f"Форма '{key}' має вигляд '<коеф. dx> ; <коеф. dy>'.")
        return parts[0].strip(), parts[1].strip()

    @staticmethod
    def _validate(config: RunConfig) -> None:
        has_pair = config.f is not None or config.b is not None
        if config.command is Command.GENERATE:
            if config.phi is None:
                raise ValidationError("Команда generate потребує твірної функції phi.")
            return
        if config.command is Command.CHECK_FORMS:
            if config.forms is None:
                raise ValidationError("Команда check-forms потребує ключів omega1..omega4.")
            return
        if has_pair and config.phi is not None:
            raise ValidationError("Задайте або пару f, b, або phi, але не обидва.")
        if config.phi is None and (config.f is None or config.b is None):
            raise ValidationError("Потрібні обидва вирази f і b (або phi).")
        if config.command is Command.DERIVE and config.emit is None:
            raise ValidationError("Команда derive потребує --emit.")


# ============================== Аналіз ================================

class AnalysisService:

    def run(self, config: RunConfig) -> RunOutcome:
        started = time.perf_counter()
        try:
            if config.command is Command.ANALYZE:
                exit_code, payload, text = self._analyze(config)
            elif config.command is Command.DERIVE:
                exit_code, payload, text = self._derive(config)
            elif config.command is Command.GENERATE:
                exit_code, payload, text = self._generate(config)
            else:
                exit_code, payload, text = self._check_forms(config)
        except ValidationError as error:
            return RunOutcome(EXIT_CONFIG, error=f"Помилка конфігурації: {error}")
        except (DegenerateWebError, RepeatedDirectionError, EvaluationError, WOrderOverflowError) as error:
            logger.debug("%s: %s", type(error).__name__, error)
            return RunOutcome(EXIT_DEGENERATE, error=f"Вироджена тканина: {error}")
        except SWebError as error:
            return RunOutcome(EXIT_CONFIG, error=str(error))

        if config.json:
            payload["runtime_ms"] = round((time.perf_counter() - started) * 1000, 3) if config.timing else None
            return RunOutcome(exit_code, output=json.dumps(payload, ensure_ascii=False, indent=2))
        if config.timing:
            text += f"\nruntime_ms: {(time.perf_counter() - started) * 1000:.3f}"
        return RunOutcome(exit_code, output=text)

    # ===== Побудова тканини =====

    def build_spec(self, config: RunConfig) -> WebSpec:
        plan = SamplePlan(samples=config.samples, seed=config.seed, tol=config.tol, mode=config.mode, domain=config.domain)
        if config.phi is not None:
            return sweb.from_generating_function(parse(config.phi), config.domain, config.mode, plan)
        return sweb.build_web(parse(config.f), parse(config.b), config.domain, config.mode, plan)

    @staticmethod
    def _input_echo(config: RunConfig) -> Dict[str, Any]:
        echo: Dict[str, Any] = {}
        if config.phi is not None:
            echo["phi"] = config.phi
        if config.f is not None:
            echo["f"] = config.f
        if config.b is not None:
            echo["b"] = config.b
        if config.forms is not None:
            echo["forms"] = [list(form) for form in config.forms]
        echo["domain"] = str(config.domain)
        echo["mode"] = config.mode.value
        return echo

    @staticmethod
    def _verdict_payload(verdict: ZeroVerdict) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"verdict": verdict.kind.value}
        if verdict.witness is not None:
            payload["witness"] = [float(verdict.witness[0]), float(verdict.witness[1])]
        return payload

    # ===== analyze =====

    def _analyze(self, config: RunConfig) -> Tuple[int, Dict[str, Any], str]:
        spec = self.build_spec(config)
        report = sweb.compute_rank(spec)
        exit_code = EXIT_INCONCLUSIVE if report.inconclusive else EXIT_OK
        return exit_code, self.report_payload(config, report), self.report_text(report)

    def report_payload(self, config: RunConfig, report: RankReport) -> Dict[str, Any]:
        return {
            "version": VERSION,
            "input": self._input_echo(config),
            "branch": report.branch.value if report.branch is not None else None,
            "delta": self._verdict_payload(report.delta_verdict),
            "conditions": [
                {
                    "name": c.name,
                    "verdict": c.verdict.kind.value,
                    "residual": c.verdict.residual,
                }
                for c in report.conditions
            ],
            "dim_w": report.dim_w,
            "base_dim": report.base_dim,
            "rank": report.rank,
            "solvable": report.solvable,
            "maximal": report.maximal,
            "inconclusive": report.inconclusive,
            "seed": config.seed,
            "samples": config.samples,
            "runtime_ms": None,
        }

    @staticmethod
    def report_text(report: RankReport) -> str:
        lines = [
            f"branch: {report.branch.value if report.branch is not None else 'unknown'}",
            f"delta: {report.delta_verdict.kind.value}",
            f"dim_w: {report.dim_w if report.dim_w is not None else 'inconclusive'}",
            f"base_dim: {report.base_dim}",
            f"rank: {report.rank}",
            f"solvable: {str(report.solvable).lower()}",
            f"maximal: {str(report.maximal).lower()}",
        ]
        if report.conditions:
            lines.append("conditions:")
            for c in report.conditions:
                lines.append(f"  {c.name}: {c.verdict.kind.value} (residual {c.verdict.residual:.3g})")
        for note in report.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines)

    # ===== derive =====

    def derive(self, config: RunConfig) -> List[Tuple[str, str]]:
        spec = self.build_spec(config)
        target = config.emit
        if target is EmitTarget.H:
            return [("H", format_expr(sweb.compute_H(spec)))]
        rel = sweb.derive_sprime_relation(spec)
        if target is EmitTarget.P:
            return [("P", format_expr(rel.P))]
        if target is EmitTarget.Q:
            return [("Q", format_expr(rel.Q))]
        if target is EmitTarget.DELTA:
            return [("delta", format_expr(sweb.compute_delta(rel)))]

        branch = sweb.classify_branch(spec, rel)
        if branch.branch is None:
            raise ValidationError("Гілку не визначено: вердикт щодо Δ непевний.")
        if branch.branch is Branch.MIXED:
            sweb.refuse_mixed(branch)
        if target is EmitTarget.KL:
            if branch.branch is not Branch.GENERIC:
                raise ValidationError("K/L-рядки існують лише на загальній гілці; для особливої використайте --emit R.")
            system = sweb.derive_generic_system(spec, rel)
            values = [(f"K{i}", c) for i, c in enumerate(system.monic_coefficients(0))]
            values += [(f"L{i}", c) for i, c in enumerate(system.monic_coefficients(1))]
        else:
            if branch.branch is not Branch.SINGULAR:
                raise ValidationError("R-рядок існує лише на особливій гілці; для загальної використайте --emit KL.")
            system = sweb.derive_singular_system(spec, rel, branch.p1, branch.p2)
            values = [(f"R{i}", c) for i, c in enumerate(system.monic_coefficients(0))]
        return [(name, format_expr(e)) for name, e in values]

    def _derive(self, config: RunConfig) -> Tuple[int, Dict[str, Any], str]:
        values = self.derive(config)
        payload = {
            "version": VERSION,
            "input": self._input_echo(config),
            "emit": config.emit.value,
            "values": {name: text for name, text in values},
            "runtime_ms": None,
        }
        return EXIT_OK, payload, "\n".join(f"{name} = {text}" for name, text in values)

    # ===== generate =====

    def _generate(self, config: RunConfig) -> Tuple[int, Dict[str, Any], str]:
        spec = self.build_spec(replace(config, f=None, b=None))
        f, b = format_expr(spec.f), format_expr(spec.b)
        payload = {
            "version": VERSION,
            "input": self._input_echo(config),
            "f": f,
            "b": b,
            "runtime_ms": None,
        }
        return EXIT_OK, payload, f"f = {f}\nb = {b}"

    # ===== check-forms =====

    def _check_forms(self, config: RunConfig) -> Tuple[int, Dict[str, Any], str]:
        forms = FormQuadruple(tuple((parse(a), parse(c)) for a, c in config.forms))
        plan = SamplePlan(samples=config.samples, seed=config.seed, tol=config.tol, mode=config.mode, domain=config.domain)
        verdict = sweb.verify_s_condition(forms, plan)
        exit_code = EXIT_INCONCLUSIVE if verdict.is_inconclusive else EXIT_OK
        payload = {
            "version": VERSION,
            "input": self._input_echo(config),
            "s_condition": self._verdict_payload(verdict),
            "proof": verdict.proof,
            "residual": verdict.residual,
            "seed": config.seed,
            "samples": config.samples,
            "runtime_ms": None,
        }
        text = f"s_condition: {verdict.kind.value}"
        if verdict.witness is not None:
            text += f"\nwitness: ({float(verdict.witness[0]):.6g}, {float(verdict.witness[1]):.6g})"
        return exit_code, payload, text

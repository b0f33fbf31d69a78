"""Session configuration: cost model, screen geometry, batching defaults."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional


@dataclass(frozen=True)
class CostModel:
    """Seconds charged per checker action.

    verify_property / suggest_property cover one option read / one typed
    answer on a property screen; verify_formula / suggest_formula the same on
    the final candidate-query screen.
    """

    verify_property: float = 3.0
    suggest_property: float = 14.0
    verify_formula: float = 17.0
    suggest_formula: float = 170.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"cost {name} must be positive")
        if self.verify_property > self.verify_formula:
            raise ValueError("verifying a property must not cost more than a formula")
        if self.suggest_property > self.suggest_formula:
            raise ValueError("suggesting a property must not cost more than a formula")

    @property
    def max_options(self) -> int:
        """Options per screen so that reading all still beats one suggestion."""
        return int(self.suggest_formula // self.verify_formula)

    @property
    def max_screens(self) -> int:
        """Property screens whose worst case still beats one suggestion."""
        return int(self.suggest_formula // (self.verify_property + self.suggest_property))

    @property
    def screen_budget(self) -> float:
        """Worst-case seconds allowed across all property screens of a claim."""
        return self.max_screens * (self.verify_property + self.suggest_property)


@dataclass
class SessionConfig:
    cost: CostModel = field(default_factory=CostModel)
    checkers: int = 3
    batch_size: int = 100
    max_requeues: int = 2
    section_read_seconds: float = 60.0
    # classifier training
    epochs: int = 200
    learning_rate: float = 0.1
    l2: float = 1e-4
    # epoch budget for warm-started refits after the first batch; None
    # retrains from scratch at the full budget every time
    incremental_epochs: Optional[int] = None
    # featurization
    embedding_dim: int = 64
    word_vocab: int = 2000
    char_vocab: int = 2000
    # planning
    top_per_property: int = 3
    top_formulas: int = 5
    # batch selection: seconds of future verification work one nat of
    # classifier entropy is assumed to be worth
    utility_weight: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.checkers < 1:
            raise ValueError("need at least one checker")
        if self.checkers % 2 == 0:
            raise ValueError("checker count must be odd so majority is strict")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionConfig":
        cost_raw = raw.get("cost", {})
        cost = CostModel(
            verify_property=float(cost_raw.get("verify_property", 3.0)),
            suggest_property=float(cost_raw.get("suggest_property", 14.0)),
            verify_formula=float(cost_raw.get("verify_formula", 17.0)),
            suggest_formula=float(cost_raw.get("suggest_formula", 170.0)),
        )
        kwargs = {k: v for k, v in raw.items() if k != "cost"}
        return cls(cost=cost, **kwargs)

    @classmethod
    def load(cls, path: Path | str) -> "SessionConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        out = asdict(self)
        return out


SECONDS_PER_WEEK = 432000.0  # three checkers x eight-hour day x five-day week


def seconds_to_weeks(seconds: float) -> float:
    return seconds / SECONDS_PER_WEEK

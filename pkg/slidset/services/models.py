from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


# === Result values ===
class Unsat(BaseModel):
    """Unsatisfiability as a value, optionally with a short reason."""
    model_config = ConfigDict(extra="ignore", populate_by_name=True, frozen=True)

    reason: str = ""


UNSAT = Unsat()


# === Definition validation ===
class Violation(BaseModel):
    """One failed condition of an inductive definition"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    condition: str
    message: str


class ValidationReport(BaseModel):
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    predicate: str
    violations: list[Violation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def conditions(self) -> list[str]:
        return sorted({v.condition for v in self.violations})


# === Transitive closure traces ===
class TcTrace(BaseModel):
    """How a closure formula was derived"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    case: str
    subcase: str = ""
    reversed: bool = False
    strict_min: bool | None = None
    strict_max: bool | None = None
    partitions: dict[str, list[str]] = Field(default_factory=dict)
    auxiliaries: list[str] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)


# === Pipeline reports ===
class StageTiming(BaseModel):
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    stage: str
    seconds: float


class HeapCell(BaseModel):
    """One allocated location of a witness heap"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    location: int
    fields: dict[str, int]


class Verdict(BaseModel):
    """Outcome of a satisfiability check"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    status: Literal["sat", "unsat", "error"]
    ints: dict[str, int] = Field(default_factory=dict)
    sets: dict[str, list[int]] = Field(default_factory=dict)
    booleans: dict[str, bool] = Field(default_factory=dict)
    heap: list[HeapCell] = Field(default_factory=list)
    heap_validated: bool | None = None
    timings: list[StageTiming] = Field(default_factory=list)
    traces: list[TcTrace] = Field(default_factory=list)
    message: str = ""


class OracleReport(BaseModel):
    """Agreement between the decision procedure and a bounded search"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    universe: int
    decided: Literal["sat", "unsat"]
    bounded_found: bool
    agrees: bool
    checked: int = 0


class TcOracleReport(BaseModel):
    """Agreement between a closure formula and iterated composition"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    universe: int
    pairs: int = 0
    disagreements: list[str] = Field(default_factory=list)

    @property
    def agrees(self) -> bool:
        return not self.disagreements

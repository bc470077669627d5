"""
Validation models for command-line options.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class BudgetOptions(BaseModel):
    """Validator for resource budgets given on the command line"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    max_states: Optional[int] = Field(default=None, gt=0, le=10_000_000, alias="budget_states")
    solver_timeout_ms: Optional[int] = Field(default=None, gt=0, alias="budget_solver")
    oracle_universe: Optional[int] = Field(default=None, ge=0, le=8, alias="oracle")


class CheckSatOptions(BaseModel):
    """Validator for the options of ``check-sat`` and ``tc``"""
    model_config = ConfigDict(extra="ignore", populate_by_name=True, str_strip_whitespace=True)

    path: Path
    output_format: Literal["human", "machine"] = Field(default="human", alias="format")
    emit_tc: bool = False
    emit_abs: bool = False
    emit_automata: bool = False
    oracle: Optional[int] = Field(default=None, ge=0)
    oracle_cells: int = Field(default=4, ge=0, le=8)
    budgets: BudgetOptions = Field(default_factory=BudgetOptions)

    @field_validator("path")
    @classmethod
    def validate_path(cls, v: Path) -> Path:
        """The problem file must exist and be a regular file"""
        if not v.exists():
            raise ValueError(f"Problem file {v} does not exist")
        if not v.is_file():
            raise ValueError(f"{v} is not a file")
        return v

    @field_validator("oracle")
    @classmethod
    def validate_oracle(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v > 8:
            # set enumeration doubles with every value
            raise ValueError("Oracle universe above 8 is not supported")
        return v

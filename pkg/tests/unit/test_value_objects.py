"""Value object and exception tests."""
from __future__ import annotations

import pytest

from src.domain.exceptions import (
    ConfigError,
    ContractError,
    DataError,
    DomainException,
    NumericalError,
    PipelineError,
    ShapeError,
)
from src.domain.value_objects import METHOD_HEAD_SOURCE, HeadSource, Method


@pytest.mark.unit
class TestMethod:
    """Method enum tests."""

    def test_transition_methods(self) -> None:
        """Only the transition methods use forward correction."""
        assert {m for m in Method if m.uses_transitions} == set(METHOD_HEAD_SOURCE)
        assert METHOD_HEAD_SOURCE[Method.TAIDTM] is HeadSource.INTERDEPENDENT
        assert not Method.DS.uses_transitions

    def test_values(self) -> None:
        """CLI names map to members."""
        assert Method("taidtm_ft") is Method.TAIDTM_FT


@pytest.mark.unit
class TestExceptions:
    """Exception hierarchy tests."""

    def test_exit_codes(self) -> None:
        """Each failure family has its own exit code."""
        assert ConfigError("x").exit_code == 2
        assert DataError("x").exit_code == 3
        assert NumericalError("x").exit_code == 4
        assert ContractError("x").exit_code == 4

    def test_data_error_location(self) -> None:
        """Line and field appear in the message."""
        error = DataError("bad label", line=7, field="label")
        assert str(error) == "Invalid data: bad label (line 7, field 'label')"
        assert error.line == 7
        assert error.code == "DATA_ERROR"

    def test_shape_is_numerical(self) -> None:
        """Shape mismatches are numerical failures."""
        error = ShapeError("a vs b")
        assert isinstance(error, NumericalError)
        assert error.code == "SHAPE_MISMATCH"

    def test_pipeline_error_inherits_exit_code(self) -> None:
        """Stage failures keep the cause's exit code."""
        error = PipelineError("distill", DataError("empty"))
        assert error.exit_code == 3
        assert error.stage == "distill"
        assert PipelineError("gcn", "diverged").exit_code == DomainException.exit_code

    def test_code_defaults_to_class_name(self) -> None:
        """Bare domain exceptions name themselves."""
        assert DomainException("boom").code == "DomainException"
